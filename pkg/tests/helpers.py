"""Shared generators and brute-force oracles for the test-suite."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from bachprop.model import make_network
from bachprop.score import NoteEvent, Score, build_grid, canonical_order

GRID = build_grid()


def random_score(rng: np.random.Generator, n_notes: int, grid=GRID, chord_prob: float = 0.3,
                 pitches=(36, 84)) -> Score:
    """Random grid-valued score that MIDI note pairing can reproduce.

    Same-pitch notes are kept so that their ends do not decrease with onset;
    strictly nested same-pitch notes are ambiguous under first-in first-out
    note-off matching.
    """
    members = np.array(grid.members)
    last_end: dict[int, int] = {}
    onset, raw = 0, []
    for i in range(n_notes):
        dT = 0 if (i == 0 or rng.random() < chord_prob) else int(rng.choice(members))
        onset += dT
        for _ in range(20):
            p = int(rng.integers(*pitches))
            need = last_end.get(p, 0) - onset
            fits = members[members >= need]
            if fits.size:
                T = int(rng.choice(fits[: max(1, min(fits.size, 40))]))
                break
        else:  # pragma: no cover - practically unreachable
            p, T = pitches[1] + i % 10, int(members[-1])
        last_end[p] = max(last_end.get(p, 0), onset + T)
        raw.append((onset, T, p))
    notes, prev = [], 0
    for on, T, p in raw:
        notes.append(NoteEvent(on - prev, T, p))
        prev = on
    return Score(canonical_order(notes))


def score_from_rows(rows) -> Score:
    return Score(tuple(NoteEvent(*r) for r in rows))


def naive_novelty(song: Score, m: int, reference) -> float:
    """Scan every window of every reference song; no hashing."""
    pats = [song.notes[i:i + m] for i in range(len(song.notes) - m + 1)]
    novel = 0
    for pat in pats:
        found = False
        for ref in reference:
            for j in range(len(ref.notes) - m + 1):
                if all(ref.notes[j + k] == pat[k] for k in range(m)):
                    found = True
                    break
            if found:
                break
        novel += not found
    return novel / len(pats)


def naive_auto_novelty(corpus, m: int) -> list[float]:
    out = []
    for i, song in enumerate(corpus):
        if len(song) >= m:
            out.append(naive_novelty(song, m, corpus[:i] + corpus[i + 1:]))
    return out


def exhaustive_nearest(atoms: Fraction, members, allow_zero=False) -> int:
    """Scan every candidate; distances compared exactly as integers scaled by the denominator."""
    cands = np.array(([0] if allow_zero else []) + list(members), dtype=np.int64)
    dist = np.abs(atoms.numerator - cands * atoms.denominator)
    # argmin returns the first minimum, i.e. the smaller candidate on ties
    return int(cands[np.argmin(dist)])


def toy_window_problem(kind: str, seed: int, sizes=(3, 3, 3), width=8, T=4, B=3):
    """A toy network, params with non-zero biases and a window after a carried state."""
    rng = np.random.default_rng(seed)
    net = make_network(kind, sizes, width)
    params = net.init_params(rng)
    for k in params:
        if k.endswith(".b"):
            params[k] = rng.normal(0, 0.1, params[k].shape)
    song = np.stack([rng.integers(0, s, size=(2 * T + 1, B)) for s in sizes], axis=-1)
    mask = np.ones((T, B))
    state = net.window(params, song[:T], song[1:T + 1], mask, net.initial_state(B), need_grad=False).state
    inputs, targets = song[T:2 * T], song[T + 1:]
    return net, params, inputs, targets, mask, state


# -- acceptance report ---------------------------------------------------------

ACCEPTANCE: dict[str, str] = {}


def report(cid: str, ok: bool, detail: str, verdict: str | None = None) -> None:
    line = f"[{verdict or ('PASS' if ok else 'FAIL')}] {cid}: {detail}"
    ACCEPTANCE[cid] = line
    print(line)
