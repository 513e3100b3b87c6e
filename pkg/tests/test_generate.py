import numpy as np
import pytest

from bachprop.generate import SamplerConfig, generate_indices, generate_score, sample_index
from bachprop.model import VARIANTS, build_variant
from bachprop.score import Dictionaries

DICTS = Dictionaries((0, 12, 24), (12, 24, 48), tuple(range(58, 70)))


class Scripted:
    """Test double with fixed logits; ``ban_boundary`` forces the boundary logits to -inf."""

    def __init__(self, dicts, ban_boundary=False, boundary_first=False):
        self.dicts = dicts
        self.ban, self.first = ban_boundary, boundary_first

    def forward_note(self, state, note):
        return (state or 0) + 1

    def head_logits(self, state, dT=None, T=None):
        k = 0 if dT is None else (1 if T is None else 2)
        L = self.dicts.sizes[k]
        logits = np.zeros(L)
        if self.ban:
            logits[-1] = -np.inf
        if self.first:
            logits[-1] = 50.0
        return logits


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(temperature=0)
    with pytest.raises(ValueError):
        SamplerConfig(max_notes=0)


def test_greedy_below_threshold():
    rng = np.random.default_rng(0)
    assert all(sample_index([0.1, 3.0, 2.9], 1e-7, rng) == 1 for _ in range(50))


def test_immediate_boundary_gives_empty_score():
    s = generate_score(Scripted(DICTS, boundary_first=True), SamplerConfig(temperature=1e-7))
    assert s.notes == ()


def test_cap_without_boundary():
    s = generate_score(Scripted(DICTS, ban_boundary=True), SamplerConfig(max_notes=5), np.random.default_rng(1))
    assert len(s) == 5


@pytest.mark.parametrize("kind", VARIANTS)
def test_generated_values_come_from_tables(kind):
    m = build_variant(kind, DICTS, hidden=8, rng=np.random.default_rng(2))
    for seed in range(5):
        s = generate_score(m, SamplerConfig(max_notes=50, seed=seed))
        assert all(n.dT in DICTS.dT and n.T in DICTS.T and n.P in DICTS.P for n in s.notes)


def test_generation_reproducible():
    m = build_variant("bachprop", DICTS, hidden=8, rng=np.random.default_rng(3))
    cfg = SamplerConfig(max_notes=40, seed=4)
    assert generate_indices(m, cfg, np.random.default_rng(4)) == generate_indices(m, cfg, np.random.default_rng(4))
    assert generate_score(m, cfg) == generate_score(m, cfg)
