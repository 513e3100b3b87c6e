"""``bachprop`` command line: preprocess, train, sample, evaluate."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import sys
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import checkpoint
from .config import RunConfig, load_config, provenance
from .errors import MidiError, NoInputFiles
from .generate import SamplerConfig, generate_score
from .metrics import (PatternIndex, attach_bootstrap, auto_novelty, bootstrap, histogram_distance,
                      local_histograms, novelty_profile, report_to_csv, song_lengths)
from .midi_io import read_score, write_midi
from .model import VARIANTS, build_variant
from .score import Dictionaries, NoteEvent, Score, build_dictionaries, build_grid, to_text
from .training import TrainResult, log_to_csv, split_validation, train

MIDI_SUFFIXES = {".mid", ".midi", ".smf"}


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _preamble(meta: dict) -> str:
    return json.dumps(meta, sort_keys=True)


def _write(path: Path, text: str | bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text)


# -- manifests -----------------------------------------------------------------

def manifest_payload(scores: list[Score], meta: dict, rejected=()) -> dict:
    entries = [{"name": s.name, "source": s.source, "notes": [list(n) for n in s.notes]} for s in scores]
    return {"meta": meta, "scores": entries, "rejected": list(rejected),
            "summary": {"scores": len(scores), "notes": sum(len(s) for s in scores)}}


def load_manifest(path) -> tuple[list[Score], dict]:
    raw = json.loads(Path(path).read_text())
    scores = [Score(tuple(NoteEvent(*n) for n in e["notes"]), name=e["name"], source=e.get("source", ""))
              for e in raw["scores"]]
    return scores, raw


def _dictionaries_for(manifest_path: Path, scores, cfg: RunConfig) -> Dictionaries:
    sibling = manifest_path.parent / "dictionaries.json"
    if sibling.exists():
        return Dictionaries.from_json(sibling.read_text())
    return build_dictionaries(scores, augment=cfg.preprocess.augment_pitch)


# -- commands ----------------------------------------------------------------

def cmd_preprocess(corpus_dir, out_dir, cfg: RunConfig) -> dict:
    corpus_dir, out_dir = Path(corpus_dir), Path(out_dir)
    files = sorted(p for p in corpus_dir.rglob("*") if p.is_file() and p.suffix.lower() in MIDI_SUFFIXES)
    if not files:
        raise NoInputFiles(f"no MIDI files under {corpus_dir}")
    grid = build_grid(cfg.preprocess.cap_quarters)
    scores, rejected, converted = [], [], []
    for f in files:
        rel = f.relative_to(corpus_dir).as_posix()
        data = f.read_bytes()
        try:
            score = read_score(data, grid, name=f.stem, source=rel)
        except (MidiError, ValueError) as exc:
            rejected.append({"file": rel, "reason": f"{type(exc).__name__}: {exc}"})
            continue
        if not score.notes:
            rejected.append({"file": rel, "reason": "no notes"})
            continue
        scores.append(score)
        converted.append({"file": rel, "notes": len(score), "sha256": hashlib.sha256(data).hexdigest()})
    meta = provenance(cfg, "preprocess")
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "manifest.json", _dump_json(manifest_payload(scores, meta, rejected)))
    report = {"meta": meta, "converted": converted, "rejected": rejected,
              "files": len(files), "scores": len(scores), "notes": sum(len(s) for s in scores)}
    _write(out_dir / "report.json", _dump_json(report))
    if scores:
        dicts = build_dictionaries(scores, augment=cfg.preprocess.augment_pitch)
        payload = json.loads(dicts.to_json())
        payload["meta"] = meta
        _write(out_dir / "dictionaries.json", _dump_json(payload))
    return report


class TrainRun(NamedTuple):
    result: TrainResult
    train_set: list
    val_set: list


def cmd_train(manifest, out_dir, cfg: RunConfig, progress=None) -> TrainRun:
    manifest, out_dir = Path(manifest), Path(out_dir)
    scores, _ = load_manifest(manifest)
    dicts = _dictionaries_for(manifest, scores, cfg)
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    train_set, val_set = split_validation(scores, cfg.train.val_fraction, np.random.default_rng(seeds[0]))
    hidden = tuple(cfg.hidden) if isinstance(cfg.hidden, list) else cfg.hidden
    model = build_variant(cfg.variant, dicts, hidden, rng=np.random.default_rng(seeds[1]))
    result = train(model, train_set, val_set, cfg.train, rng=np.random.default_rng(seeds[2]), progress=progress)
    meta = provenance(cfg, "train")
    meta["split"] = {"train": [s.name for s in train_set], "validation": [s.name for s in val_set]}
    meta["best_epoch"] = result.best_epoch
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint.save(out_dir / "checkpoint.bin", result.model, config=meta, seed=cfg.seed)
    _write(out_dir / "trainlog.csv", log_to_csv(result.log, preamble=_preamble(meta)))
    return TrainRun(result, train_set, val_set)


def cmd_sample(ckpt, out_dir, cfg: RunConfig, count: int) -> list[Path]:
    model, _ = checkpoint.load(ckpt)
    out_dir = Path(out_dir)
    meta = provenance(cfg, "sample")
    text_meta = _preamble(meta)
    sc: SamplerConfig = cfg.sample
    written, scores = [], []
    for i in range(count):
        rng = np.random.default_rng([sc.seed, i])
        stem = f"sample_seed{sc.seed}_{i:04d}"
        score = generate_score(model, sc, rng, name=stem)
        data = write_midi(score, division=48, text=text_meta)
        # dump what a reader of the MIDI file will see
        reparsed = read_score(data, name=stem, source=f"{stem}.mid")
        _write(out_dir / f"{stem}.mid", data)
        _write(out_dir / f"{stem}.txt", f"# {text_meta}\n" + to_text(reparsed))
        scores.append(reparsed)
        written.append(out_dir / f"{stem}.mid")
    if count:
        _write(out_dir / "manifest.json", _dump_json(manifest_payload(scores, meta)))
    return written


HIST_FILES = {"dT": "dt_hist.csv", "T": "t_hist.csv", "intervals_chord": "intervals_chord.csv",
              "intervals_all": "intervals_all.csv", "lengths": "lengths.csv"}


def _reports(scores, cfg: RunConfig, rng):
    hists = local_histograms(scores)
    hists["lengths"] = song_lengths(scores)
    if len(scores) >= 2:
        ec = cfg.evaluate
        fns = {"lengths": song_lengths}
        for key in ("dT", "T", "intervals_chord", "intervals_all"):
            fns[key] = lambda c, k=key: local_histograms(c)[k]
        for key in HIST_FILES:
            boot = bootstrap(scores, fns[key], ec.bootstrap_fraction, ec.bootstrap_repetitions, rng)
            hists[key] = attach_bootstrap(hists[key], boot)
    return hists


def cmd_evaluate(corpus_manifest, reference_manifest, out_dir, cfg: RunConfig) -> dict:
    corpus, _ = load_manifest(corpus_manifest)
    reference, _ = load_manifest(reference_manifest)
    out_dir = Path(out_dir)
    meta = provenance(cfg, "evaluate")
    pre = _preamble(meta)
    sizes = cfg.evaluate.pattern_sizes
    ref_auto = auto_novelty(reference, sizes)
    rng = np.random.default_rng(cfg.seed)
    ours, theirs = _reports(corpus, cfg, rng), _reports(reference, cfg, rng)
    out_dir.mkdir(parents=True, exist_ok=True)
    for key, fname in HIST_FILES.items():
        _write(out_dir / fname, report_to_csv(ours[key], pre))
        _write(out_dir / f"reference_{fname}", report_to_csv(theirs[key], pre))
    novelty = novelty_profile(corpus, PatternIndex(reference), sizes)
    _write(out_dir / "novelty.json", novelty.to_json(meta) + "\n")
    _write(out_dir / "auto_novelty.json", ref_auto.to_json(meta) + "\n")
    distances = {key: histogram_distance(ours[key], theirs[key]) for key in HIST_FILES}
    buf = io.StringIO()
    buf.write(f"# {pre}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["statistic", "total_variation"])
    for key, d in distances.items():
        w.writerow([key, repr(d)])
    _write(out_dir / "distances.csv", buf.getvalue())
    return distances


# -- argument handling ---------------------------------------------------------

def parse_sizes(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("pattern sizes must be positive integers")
    return tuple(sorted(set(out)))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config; flags override it")
    common.add_argument("--seed", type=int, help="seed for every random choice of the command")
    common.add_argument("--out", type=Path, required=True, help="output directory")

    p = argparse.ArgumentParser(prog="bachprop", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("preprocess", parents=[common], help="MIDI directory to manifest and dictionaries")
    pp.add_argument("corpus_dir", type=Path)

    pt = sub.add_parser("train", parents=[common], help="train a model on a manifest")
    pt.add_argument("manifest", type=Path)
    pt.add_argument("--variant", choices=VARIANTS)
    pt.add_argument("--epochs", type=int, help="maximum number of epochs")
    pt.add_argument("--batch-size", type=int)
    pt.add_argument("--trunc-len", type=int)
    pt.add_argument("--lr", type=float)
    pt.add_argument("--patience", type=int)
    pt.add_argument("--no-augment", action="store_true", help="disable random transposition")

    ps = sub.add_parser("sample", parents=[common], help="generate MIDI files from a checkpoint")
    ps.add_argument("checkpoint", type=Path)
    ps.add_argument("--count", type=int, default=1)
    ps.add_argument("--temperature", type=float)
    ps.add_argument("--max-notes", type=int)

    pe = sub.add_parser("evaluate", parents=[common], help="compare a corpus with a reference corpus")
    pe.add_argument("corpus_manifest", type=Path)
    pe.add_argument("reference_manifest", type=Path)
    pe.add_argument("--pattern-sizes", type=parse_sizes, help="e.g. 2-10 or 2,4,6")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = cfg.with_seed(cfg.seed if args.seed is None else args.seed)
    if args.command == "train":
        if args.variant:
            cfg.variant = args.variant
        updates = {"max_epochs": args.epochs, "batch_size": args.batch_size, "trunc_len": args.trunc_len,
                   "lr": args.lr, "patience": args.patience}
        updates = {k: v for k, v in updates.items() if v is not None}
        if args.no_augment:
            updates["augment"] = False
        cfg.train = dataclasses.replace(cfg.train, **updates)
    elif args.command == "sample":
        updates = {"temperature": args.temperature, "max_notes": args.max_notes}
        cfg.sample = dataclasses.replace(cfg.sample, **{k: v for k, v in updates.items() if v is not None})
    elif args.command == "evaluate" and args.pattern_sizes:
        cfg.evaluate = dataclasses.replace(cfg.evaluate, pattern_sizes=args.pattern_sizes)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = resolve_config(args)
    if args.command == "preprocess":
        rep = cmd_preprocess(args.corpus_dir, args.out, cfg)
        print(f"converted {rep['scores']}/{rep['files']} files, {rep['notes']} notes, "
              f"{len(rep['rejected'])} rejected")
    elif args.command == "train":
        def progress(r):
            val = "" if r.val_nll is None else f" val_nll={r.val_nll:.4f} val_acc={np.mean(r.val_acc):.3f}"
            print(f"epoch {r.epoch} train_nll={r.train_nll:.4f}{val}", flush=True)
        run = cmd_train(args.manifest, args.out, cfg, progress)
        print(f"best epoch {run.result.best_epoch}")
    elif args.command == "sample":
        files = cmd_sample(args.checkpoint, args.out, cfg, args.count)
        print(f"wrote {len(files)} scores")
    elif args.command == "evaluate":
        for key, d in cmd_evaluate(args.corpus_manifest, args.reference_manifest, args.out, cfg).items():
            print(f"{key}: TV distance {d:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
