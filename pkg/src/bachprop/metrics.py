"""Corpus statistics and novelty of generated scores against a reference."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import CorpusTooSmall, EmptyCorpus, SongTooShort
from .score import ATOMS_PER_QUARTER, Score

DEFAULT_PATTERN_SIZES = tuple(range(2, 11))


# -- novelty -----------------------------------------------------------------

def _patterns(song: Score, m: int):
    notes = song.notes
    return (notes[i:i + m] for i in range(len(notes) - m + 1))


class PatternIndex:
    """Per-size hash index of every m-note pattern in a reference corpus.

    Besides membership it records how many distinct songs contain each
    pattern, which is what leave-one-out scoring needs.
    """

    def __init__(self, reference: Sequence[Score]):
        self.reference = list(reference)
        self._by_size: dict[int, Counter] = {}

    def song_counts(self, m: int) -> Counter:
        if m not in self._by_size:
            c: Counter = Counter()
            for song in self.reference:
                c.update(set(_patterns(song, m)))
            self._by_size[m] = c
        return self._by_size[m]

    def __contains__(self, pattern) -> bool:
        return pattern in self.song_counts(len(pattern))


def _check_size(m: int):
    if m < 1:
        raise ValueError("pattern size must be >= 1")


def song_novelty(song: Score, m: int, reference) -> float:
    """Fraction of the song's m-note patterns found nowhere in ``reference``."""
    _check_size(m)
    if len(song) < m:
        raise SongTooShort(f"song has {len(song)} notes, pattern size is {m}")
    index = reference if isinstance(reference, PatternIndex) else PatternIndex(reference)
    seen = index.song_counts(m)
    pats = list(_patterns(song, m))
    return sum(p not in seen for p in pats) / len(pats)


@dataclass
class NoveltyProfile:
    sizes: tuple[int, ...]
    scores: dict[int, list[float]] = field(default_factory=dict)

    def summary(self) -> dict:
        out = {}
        for m in self.sizes:
            v = np.asarray(self.scores.get(m, []), dtype=np.float64)
            if v.size == 0:
                out[str(m)] = {"songs": 0}
                continue
            q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
            out[str(m)] = {"songs": int(v.size), "min": float(v.min()), "q1": float(q1), "median": float(med),
                           "q3": float(q3), "max": float(v.max()), "mean": float(v.mean())}
        return out

    def to_json(self, meta: dict | None = None) -> str:
        payload = {"meta": meta or {}, "summary": self.summary(),
                   "scores": {str(m): self.scores.get(m, []) for m in self.sizes}}
        return json.dumps(payload, indent=1, sort_keys=True)


def novelty_profile(corpus, reference, sizes=DEFAULT_PATTERN_SIZES) -> NoveltyProfile:
    sizes = tuple(sizes)
    if not sizes:
        raise ValueError("at least one pattern size is required")
    index = reference if isinstance(reference, PatternIndex) else PatternIndex(reference)
    prof = NoveltyProfile(sizes)
    for m in sizes:
        prof.scores[m] = [song_novelty(s, m, index) for s in corpus if len(s) >= m]
    return prof


def auto_novelty(corpus, sizes=DEFAULT_PATTERN_SIZES) -> NoveltyProfile:
    """Leave-one-out novelty of each song against the rest of its corpus."""
    corpus = list(corpus)
    if len(corpus) < 2:
        raise CorpusTooSmall("auto-novelty needs at least two songs")
    sizes = tuple(sizes)
    index = PatternIndex(corpus)
    prof = NoveltyProfile(sizes)
    for m in sizes:
        _check_size(m)
        counts = index.song_counts(m)
        scores = []
        for song in corpus:
            if len(song) < m:
                continue
            pats = list(_patterns(song, m))
            # the song itself accounts for one of the containing songs
            scores.append(sum(counts[p] == 1 for p in pats) / len(pats))
        prof.scores[m] = scores
    return prof


# -- histograms --------------------------------------------------------------

@dataclass(frozen=True)
class HistogramReport:
    bins: tuple
    freqs: tuple[float, ...]
    boot_mean: tuple[float, ...] | None = None
    boot_std: tuple[float, ...] | None = None

    def as_dict(self) -> dict:
        return dict(zip(self.bins, self.freqs))

    @classmethod
    def from_counts(cls, counts: Counter) -> HistogramReport:
        total = sum(counts.values())
        bins = tuple(sorted(counts))
        return cls(bins, tuple(counts[b] / total for b in bins) if total else ())


def local_histograms(corpus) -> dict[str, HistogramReport]:
    """dT, T, chord-interval and note-to-note interval histograms."""
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("no songs to summarise")
    dts, ts, chord, melodic = Counter(), Counter(), Counter(), Counter()
    for song in corpus:
        notes = song.notes
        dts.update(n.dT for n in notes)
        ts.update(n.T for n in notes)
        for a, b in zip(notes, notes[1:]):
            melodic[b.P - a.P] += 1
            if b.dT == 0:
                chord[b.P - a.P] += 1
    return {"dT": HistogramReport.from_counts(dts), "T": HistogramReport.from_counts(ts),
            "intervals_chord": HistogramReport.from_counts(chord),
            "intervals_all": HistogramReport.from_counts(melodic)}


def song_length(song: Score) -> Fraction:
    """End of the last-sounding note, in quarter notes."""
    end, t = 0, 0
    for n in song.notes:
        t += n.dT
        end = max(end, t + n.T)
    return Fraction(end, ATOMS_PER_QUARTER)


def song_lengths(corpus) -> HistogramReport:
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("no songs to measure")
    return HistogramReport.from_counts(Counter(math.floor(song_length(s)) for s in corpus))


def bootstrap(corpus, metric: Callable[[list], HistogramReport], fraction: float = 0.5,
              repetitions: int = 10, rng: np.random.Generator | None = None) -> HistogramReport:
    """Per-bin mean and population std of ``metric`` over random sub-corpora."""
    corpus = list(corpus)
    if len(corpus) < 2:
        raise CorpusTooSmall("bootstrap needs at least two songs")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    rng = rng if rng is not None else np.random.default_rng(0)
    k = math.ceil(fraction * len(corpus))
    runs = []
    for _ in range(repetitions):
        pick = rng.choice(len(corpus), size=k, replace=False)
        runs.append(metric([corpus[i] for i in sorted(pick)]).as_dict())
    bins = tuple(sorted(set().union(*runs)))
    table = np.array([[r.get(b, 0.0) for b in bins] for r in runs])
    mean = tuple(table.mean(axis=0).tolist()) if bins else ()
    std = tuple(table.std(axis=0).tolist()) if bins else ()
    return HistogramReport(bins, mean, mean, std)


def attach_bootstrap(report: HistogramReport, boot: HistogramReport) -> HistogramReport:
    """Full-corpus frequencies with bootstrap mean/std over the union of bins."""
    full, bm = report.as_dict(), dict(zip(boot.bins, boot.boot_mean))
    bs = dict(zip(boot.bins, boot.boot_std))
    bins = tuple(sorted(set(full) | set(bm)))
    return HistogramReport(bins, tuple(full.get(b, 0.0) for b in bins),
                           tuple(bm.get(b, 0.0) for b in bins), tuple(bs.get(b, 0.0) for b in bins))


def histogram_distance(a: HistogramReport, b: HistogramReport) -> float:
    """Total-variation distance; missing bins count as zero."""
    da, db = a.as_dict(), b.as_dict()
    return 0.5 * sum(abs(da.get(k, 0.0) - db.get(k, 0.0)) for k in set(da) | set(db))


def report_to_csv(report: HistogramReport, preamble: str | None = None) -> str:
    buf = io.StringIO()
    if preamble:
        for line in preamble.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["value", "frequency", "bootstrap_mean", "bootstrap_std"])
    for i, b in enumerate(report.bins):
        row = [b, repr(report.freqs[i])]
        if report.boot_mean is not None:
            row += [repr(report.boot_mean[i]), repr(report.boot_std[i])]
        else:
            row += ["", ""]
        w.writerow(row)
    return buf.getvalue()
