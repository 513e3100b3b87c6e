"""Note-triple representation of scores.

A note is ``(dT, T, P)``: time since the previous onset, duration and MIDI
pitch. Times are integer *atoms* of 1/48 quarter note, the common refinement
of 64th notes (3 atoms) and 32nd-note triplets (4 atoms).
"""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import EmptyCorpus, MalformedEncoding, NoFeasibleOffset, UnknownSymbol

ATOMS_PER_QUARTER = 48
DEFAULT_CAP_QUARTERS = 16
FEATURES = ("dT", "T", "P")


class _Boundary:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BOUNDARY"

    def __reduce__(self):
        return (_Boundary, ())


BOUNDARY = _Boundary()


class NoteEvent(NamedTuple):
    dT: int
    T: int
    P: int


@dataclass(frozen=True)
class Score:
    notes: tuple[NoteEvent, ...] = ()
    name: str = ""
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(NoteEvent(*n) for n in self.notes))

    def __len__(self):
        return len(self.notes)

    def onsets(self) -> list[int]:
        out, t = [], 0
        for n in self.notes:
            t += n.dT
            out.append(t)
        return out


@dataclass(frozen=True)
class DurationGrid:
    cap: int
    members: tuple[int, ...]
    atoms_per_quarter: int = ATOMS_PER_QUARTER

    def __contains__(self, atoms):
        i = bisect.bisect_left(self.members, atoms)
        return i < len(self.members) and self.members[i] == atoms


def build_grid(cap_quarters: int = DEFAULT_CAP_QUARTERS) -> DurationGrid:
    if cap_quarters < 1:
        raise ValueError("cap_quarters must be >= 1")
    cap = ATOMS_PER_QUARTER * cap_quarters
    members = tuple(k for k in range(1, cap + 1) if k % 3 == 0 or k % 4 == 0)
    return DurationGrid(cap=cap, members=members)


def _nearest(x: Fraction, candidates) -> int:
    # candidates sorted ascending; ties go to the smaller value
    i = bisect.bisect_left(candidates, x)
    if i == 0:
        return candidates[0]
    if i == len(candidates):
        return candidates[-1]
    lo, hi = candidates[i - 1], candidates[i]
    return hi if hi - x < x - lo else lo


def quantize_duration(value, grid: DurationGrid) -> int:
    """Nearest grid member (in atoms) to a duration given in quarter notes."""
    atoms = Fraction(value) * grid.atoms_per_quarter
    if atoms <= 0:
        raise ValueError("duration must be positive")
    return _nearest(atoms, grid.members)


def quantize_shift(value, grid: DurationGrid) -> int:
    """Like quantize_duration but 0 is also an admissible result."""
    atoms = Fraction(value) * grid.atoms_per_quarter
    if atoms < 0:
        raise ValueError("time shift must be non-negative")
    if atoms == 0:
        return 0
    best = _nearest(atoms, grid.members)
    # 0 sits below every member, so it only wins against the smallest one
    if best == grid.members[0] and atoms <= Fraction(best, 2):
        return 0
    return best


def canonical_order(notes) -> tuple[NoteEvent, ...]:
    """Sort each simultaneous (dT = 0) group by ascending pitch."""
    out: list[NoteEvent] = []
    group: list[NoteEvent] = []
    for n in notes:
        n = NoteEvent(*n)
        if group and n.dT == 0:
            group.append(n)
            continue
        if group:
            out.extend(_sorted_group(group))
        group = [n]
    if group:
        out.extend(_sorted_group(group))
    return tuple(out)


def _sorted_group(group):
    lead = group[0].dT
    members = sorted((n.P, n.T) for n in group)
    return [NoteEvent(lead if i == 0 else 0, t, p) for i, (p, t) in enumerate(members)]


def score_from_notes(notes, grid: DurationGrid, name: str = "", source: str = "") -> Score:
    """Quantize ``(onset, duration, pitch)`` triples in quarter notes."""
    events = []
    prev = None
    for onset, duration, pitch in notes:
        onset = Fraction(onset)
        dT = 0 if prev is None else quantize_shift(onset - prev, grid)
        events.append(NoteEvent(dT, quantize_duration(duration, grid), int(pitch)))
        prev = onset
    return Score(canonical_order(events), name=name, source=source)


@dataclass(frozen=True)
class Dictionaries:
    """Ordered value tables per feature; BOUNDARY takes the last index."""

    dT: tuple[int, ...]
    T: tuple[int, ...]
    P: tuple[int, ...]
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lookup = {f: {v: i for i, v in enumerate(self.table(f))} for f in FEATURES}
        object.__setattr__(self, "_lookup", lookup)

    def table(self, feature: str) -> tuple[int, ...]:
        return getattr(self, feature)

    def size(self, feature: str) -> int:
        return len(self.table(feature)) + 1

    def boundary(self, feature: str) -> int:
        return len(self.table(feature))

    @property
    def sizes(self) -> tuple[int, int, int]:
        return tuple(self.size(f) for f in FEATURES)

    @property
    def boundary_note(self) -> tuple[int, int, int]:
        return tuple(self.boundary(f) for f in FEATURES)

    def index(self, feature: str, value) -> int:
        if value is BOUNDARY:
            return self.boundary(feature)
        try:
            return self._lookup[feature][value]
        except KeyError:
            raise UnknownSymbol(feature, value) from None

    def value(self, feature: str, index: int):
        table = self.table(feature)
        if index == len(table):
            return BOUNDARY
        if not 0 <= index < len(table):
            raise MalformedEncoding(f"{feature} index {index} out of range")
        return table[index]

    def to_json(self) -> str:
        payload = {"atoms_per_quarter": ATOMS_PER_QUARTER, "dT": list(self.dT), "T": list(self.T),
                   "P": list(self.P)}
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> Dictionaries:
        raw = json.loads(text)
        if raw.get("atoms_per_quarter", ATOMS_PER_QUARTER) != ATOMS_PER_QUARTER:
            raise ValueError("dictionary was built for a different atom size")
        return cls(tuple(raw["dT"]), tuple(raw["T"]), tuple(raw["P"]))


def transposition_range(score: Score, p_min: int, p_max: int) -> range:
    if not score.notes:
        return range(0, 1)
    pitches = [n.P for n in score.notes]
    return range(p_min - min(pitches), p_max - max(pitches) + 1)


def transpose(score: Score, offset: int) -> Score:
    notes = tuple(NoteEvent(n.dT, n.T, n.P + offset) for n in score.notes)
    return Score(notes, name=score.name, source=score.source)


def build_dictionaries(corpus, augment: bool = False) -> Dictionaries:
    """Tables of the distinct values in ``corpus``.

    With ``augment``, the pitch table also covers every transposition of each
    song that stays within the corpus pitch range, so that random
    transposition during training never produces an unknown pitch.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("cannot build dictionaries from an empty corpus")
    dts, ts, ps = {0}, set(), set()
    for s in corpus:
        for n in s.notes:
            dts.add(n.dT)
            ts.add(n.T)
            ps.add(n.P)
    if augment and ps:
        lo, hi = min(ps), max(ps)
        for s in corpus:
            song_pitches = {n.P for n in s.notes}
            for k in transposition_range(s, lo, hi):
                ps.update(p + k for p in song_pitches)
    return Dictionaries(tuple(sorted(dts)), tuple(sorted(ts)), tuple(sorted(ps)))


@dataclass(frozen=True)
class EncodedScore:
    """Index sequences of shape (len(score) + 2, 3), boundary at both ends."""

    indices: np.ndarray

    @property
    def dT(self):
        return self.indices[:, 0].tolist()

    @property
    def T(self):
        return self.indices[:, 1].tolist()

    @property
    def P(self):
        return self.indices[:, 2].tolist()

    def __len__(self):
        return len(self.indices)


def encode(score: Score, dicts: Dictionaries) -> EncodedScore:
    rows = [dicts.boundary_note]
    for n in score.notes:
        rows.append((dicts.index("dT", n.dT), dicts.index("T", n.T), dicts.index("P", n.P)))
    rows.append(dicts.boundary_note)
    return EncodedScore(np.array(rows, dtype=np.int64).reshape(-1, 3))


def decode(enc: EncodedScore, dicts: Dictionaries, name: str = "", source: str = "") -> Score:
    idx = np.asarray(enc.indices)
    if idx.ndim != 2 or idx.shape[1] != 3 or len(idx) < 2:
        raise MalformedEncoding("expected an (N + 2, 3) index array")
    bnd = dicts.boundary_note
    if tuple(idx[0]) != bnd or tuple(idx[-1]) != bnd:
        raise MalformedEncoding("sequence must start and end with the boundary note")
    notes = []
    for row in idx[1:-1]:
        values = [dicts.value(f, int(i)) for f, i in zip(FEATURES, row)]
        if any(v is BOUNDARY for v in values):
            raise MalformedEncoding("boundary symbol inside the sequence")
        notes.append(NoteEvent(*values))
    return Score(tuple(notes), name=name, source=source)


def transpose_random(score: Score, dicts: Dictionaries, rng: np.random.Generator) -> Score:
    """Shift all pitches by one offset drawn uniformly among feasible offsets."""
    if not dicts.P:
        raise NoFeasibleOffset("empty pitch table")
    if not score.notes:
        return score
    table = set(dicts.P)
    pitches = {n.P for n in score.notes}
    feasible = [k for k in transposition_range(score, dicts.P[0], dicts.P[-1])
                if all(p + k in table for p in pitches)]
    if not feasible:
        raise NoFeasibleOffset(f"no offset keeps {score.name or 'score'} inside the pitch table")
    k = feasible[int(rng.integers(len(feasible)))]
    return transpose(score, k) if k else score


def to_text(score: Score) -> str:
    """One ``dT T P`` line per note, times as quarter-note rationals."""
    lines = []
    for n in score.notes:
        dt = Fraction(n.dT, ATOMS_PER_QUARTER)
        t = Fraction(n.T, ATOMS_PER_QUARTER)
        lines.append(f"{dt} {t} {n.P}")
    return "\n".join(lines) + ("\n" if lines else "")


def from_text(text: str, name: str = "", source: str = "") -> Score:
    notes = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        dt, t, p = line.split()
        notes.append(NoteEvent(int(Fraction(dt) * ATOMS_PER_QUARTER),
                               int(Fraction(t) * ATOMS_PER_QUARTER), int(p)))
    return Score(tuple(notes), name=name, source=source)
