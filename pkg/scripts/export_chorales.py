"""Export a subset of four-voice Bach chorales from the music21 corpus as MIDI.

music21 is only needed for this one-off export; the resulting files are
committed under data/ so the rest of the package never imports it.

    python scripts/export_chorales.py --count 50 --out data/chorales50
"""
import argparse
from pathlib import Path


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--count", type=int, default=50)
    parser.add_argument("--out", type=Path, default=Path("data/chorales50"))
    args = parser.parse_args()

    from music21 import corpus

    args.out.mkdir(parents=True, exist_ok=True)
    paths = sorted(corpus.getComposer("bach"), key=lambda p: str(p))
    written = 0
    for path in paths:
        if written >= args.count:
            break
        score = corpus.parse(path)
        # same filter as the usual chorale benchmarks: exactly four voices
        if len(score.parts) != 4:
            continue
        name = Path(str(path)).name.rsplit(".", 1)[0]
        score.write("midi", fp=str(args.out / f"{name}.mid"))
        written += 1
    print(f"wrote {written} chorales to {args.out}")


if __name__ == "__main__":
    main()
