"""Autoregressive generation: dT, then T given dT, then P given both."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .model import Model, forward_note, head_logits
from .nn import softmax
from .score import BOUNDARY, FEATURES, Dictionaries, NoteEvent, Score

GREEDY_BELOW = 1e-6


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 1.0
    max_notes: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.max_notes < 1:
            raise ValueError("max_notes must be >= 1")


class Predictor(Protocol):
    """Anything that can advance a state by a note and score the next features."""

    dicts: Dictionaries

    def forward_note(self, state, note): ...

    def head_logits(self, state, dT=None, T=None) -> np.ndarray: ...


class ModelPredictor:
    def __init__(self, model: Model):
        self.model = model
        self.dicts = model.dicts

    def forward_note(self, state, note):
        return forward_note(self.model, state, note)

    def head_logits(self, state, dT=None, T=None):
        return head_logits(self.model, state, dT, T)


def _as_predictor(source) -> Predictor:
    return ModelPredictor(source) if isinstance(source, Model) else source


def sample_index(logits, temperature: float, rng: np.random.Generator) -> int:
    logits = np.asarray(logits, dtype=np.float64)
    if temperature < GREEDY_BELOW:
        return int(np.argmax(logits))
    cdf = np.cumsum(softmax(logits, temperature))
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, len(cdf) - 1)


def sample_note(source, state, cfg: SamplerConfig, rng: np.random.Generator):
    """Draw one index triple and return it with the state advanced past it."""
    pred = _as_predictor(source)
    d = sample_index(pred.head_logits(state), cfg.temperature, rng)
    t = sample_index(pred.head_logits(state, dT=d), cfg.temperature, rng)
    p = sample_index(pred.head_logits(state, dT=d, T=t), cfg.temperature, rng)
    note = (d, t, p)
    return note, pred.forward_note(state, note)


def generate_indices(source, cfg: SamplerConfig, rng: np.random.Generator) -> list[tuple[int, int, int]]:
    """Index triples of one generated score, terminator excluded."""
    pred = _as_predictor(source)
    bnd = pred.dicts.boundary_note
    state = pred.forward_note(None, bnd)
    out = []
    while len(out) < cfg.max_notes:
        note, next_state = sample_note(pred, state, cfg, rng)
        if any(i == b for i, b in zip(note, bnd)):
            break
        out.append(note)
        state = next_state
    return out


def generate_score(source, cfg: SamplerConfig | None = None, rng: np.random.Generator | None = None,
                   name: str = "") -> Score:
    cfg = cfg or SamplerConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    pred = _as_predictor(source)
    notes = []
    for idx in generate_indices(pred, cfg, rng):
        values = [pred.dicts.value(f, i) for f, i in zip(FEATURES, idx)]
        assert all(v is not BOUNDARY for v in values)
        notes.append(NoteEvent(*values))
    return Score(tuple(notes), name=name, source="generated")
