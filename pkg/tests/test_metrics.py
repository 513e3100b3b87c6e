import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bachprop.errors import CorpusTooSmall, EmptyCorpus, SongTooShort
from bachprop.metrics import (HistogramReport, auto_novelty, bootstrap, histogram_distance, local_histograms,
                              novelty_profile, song_lengths, song_novelty)
from bachprop.score import NoteEvent, Score
from helpers import naive_auto_novelty, naive_novelty, score_from_rows


def rand_song(rng, n, alpha=3, offset=0):
    return Score(tuple(NoteEvent(int(rng.integers(alpha)), 12, offset + int(rng.integers(alpha))) for _ in range(n)))


def test_song_in_reference_scores_zero():
    s = rand_song(np.random.default_rng(0), 12)
    assert all(song_novelty(s, m, [s]) == 0 for m in range(1, 13))


def test_disjoint_alphabet_scores_one():
    rng = np.random.default_rng(1)
    s, ref = rand_song(rng, 10), [rand_song(rng, 10, offset=50)]
    assert song_novelty(s, 3, ref) == 1.0


def test_matches_naive_scan_on_binary_alphabet():
    rng = np.random.default_rng(2)
    for _ in range(50):
        s = rand_song(rng, 10, alpha=2)
        ref = [rand_song(rng, int(rng.integers(3, 12)), alpha=2) for _ in range(3)]
        for m in range(2, 7):
            assert song_novelty(s, m, ref) == naive_novelty(s, m, ref)


def test_too_short():
    with pytest.raises(SongTooShort):
        song_novelty(score_from_rows([(0, 12, 60)]), 2, [])


def test_profile_skips_short_songs():
    rng = np.random.default_rng(3)
    corpus = [rand_song(rng, 3), rand_song(rng, 8)]
    prof = novelty_profile(corpus, corpus, [2, 5])
    assert prof.scores == {2: [0.0, 0.0], 5: [0.0]}
    assert prof.summary()["5"]["songs"] == 1


def test_auto_novelty_examples():
    rng = np.random.default_rng(4)
    s = rand_song(rng, 10)
    assert auto_novelty([s, s], [2, 4]).scores == {2: [0.0, 0.0], 4: [0.0, 0.0]}
    far = rand_song(rng, 10, offset=40)
    assert auto_novelty([s, far], [2]).scores == {2: [1.0, 1.0]}
    with pytest.raises(CorpusTooSmall):
        auto_novelty([s], [2])
    corpus = [rand_song(rng, int(rng.integers(4, 15)), alpha=2) for _ in range(5)]
    for m in range(2, 6):
        assert auto_novelty(corpus, [m]).scores[m] == naive_auto_novelty(corpus, m)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(-20, 20))
def test_novelty_properties(seed, m, shift):
    rng = np.random.default_rng(seed)
    s = rand_song(rng, 15, alpha=2)
    ref = [rand_song(rng, 12, alpha=2) for _ in range(3)]
    # a novel pattern stays novel when extended at the same start
    for i in range(len(s.notes) - m):
        if not any(s.notes[i:i + m] == r.notes[j:j + m] for r in ref for j in range(len(r.notes) - m + 1)):
            assert song_novelty(Score(s.notes[i:i + m + 1]), m + 1, ref) == 1.0
    up = lambda x: Score(tuple(NoteEvent(n.dT, n.T, n.P + shift) for n in x.notes))
    assert song_novelty(up(s), m, [up(r) for r in ref]) == song_novelty(s, m, ref)


def test_local_histogram_examples():
    h = local_histograms([score_from_rows([(0, 48, 60)])])
    assert h["dT"].as_dict() == {0: 1.0} and h["T"].as_dict() == {48: 1.0}
    assert h["intervals_chord"].bins == () and h["intervals_all"].bins == ()
    h = local_histograms([score_from_rows([(0, 48, 60), (0, 48, 64), (48, 48, 67)])])
    assert h["intervals_chord"].as_dict() == {4: 1.0}
    assert h["intervals_all"].as_dict() == {4: 0.5, 3: 0.5}
    with pytest.raises(EmptyCorpus):
        local_histograms([])


def test_song_length_examples():
    assert song_lengths([score_from_rows([(0, 48, 60)])]).as_dict() == {1: 1.0}
    assert song_lengths([score_from_rows([(0, 48, 60), (48, 48, 62)])]).as_dict() == {2: 1.0}
    # the longest-sounding note, not the last onset, ends the song
    assert song_lengths([score_from_rows([(0, 192, 60), (48, 48, 62)])]).as_dict() == {4: 1.0}
    with pytest.raises(EmptyCorpus):
        song_lengths([])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_histograms_normalised(seed):
    rng = np.random.default_rng(seed)
    corpus = [rand_song(rng, int(rng.integers(1, 20))) for _ in range(4)]
    for rep in [*local_histograms(corpus).values(), song_lengths(corpus)]:
        if rep.bins:
            assert abs(sum(rep.freqs) - 1) < 1e-9 and min(rep.freqs) >= 0


def test_bootstrap():
    s = score_from_rows([(0, 12, 60), (12, 24, 62)])
    same = bootstrap([s] * 4, song_lengths, rng=np.random.default_rng(0))
    assert all(v == 0 for v in same.boot_std)
    rng = np.random.default_rng(1)
    corpus = [rand_song(rng, n) for n in (3, 5, 7, 9)]
    seen = []
    bootstrap(corpus, lambda c: (seen.append(len({id(x) for x in c})), song_lengths(c))[1], 0.5, 10,
              np.random.default_rng(2))
    assert seen == [2] * 10
    a = bootstrap(corpus, song_lengths, rng=np.random.default_rng(3))
    b = bootstrap(corpus, song_lengths, rng=np.random.default_rng(3))
    assert a == b
    with pytest.raises(CorpusTooSmall):
        bootstrap([s], song_lengths)


def H(d):
    return HistogramReport(tuple(d), tuple(d.values()))


def test_distance_examples():
    assert histogram_distance(H({1: 0.5, 2: 0.5}), H({1: 0.5, 2: 0.5})) == 0
    assert histogram_distance(H({1: 1.0}), H({2: 1.0})) == 1
    assert histogram_distance(H({1: 0.6, 2: 0.4}), H({1: 0.4, 2: 0.6})) == pytest.approx(0.2)


@settings(max_examples=60)
@given(st.lists(st.lists(st.floats(0.01, 1), min_size=4, max_size=4), min_size=3, max_size=3))
def test_distance_metric_properties(weights):
    hs = [H({i: w / sum(ws) for i, w in enumerate(ws)}) for ws in weights]
    a, b, c = hs
    assert histogram_distance(a, b) == pytest.approx(histogram_distance(b, a))
    assert histogram_distance(a, c) <= histogram_distance(a, b) + histogram_distance(b, c) + 1e-12
