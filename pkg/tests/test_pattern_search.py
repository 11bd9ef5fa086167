import csv
import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multicoset import CapExceededError, InfeasibleError
from multicoset.modulation import SamplePattern, build_modulation_matrix, condition_number
from multicoset.pattern_search import (CondEvaluator, build_histogram, exhaustive_search,
                                       random_pattern_conds, random_pattern_trials,
                                       random_search, random_subset, sfs_cost,
                                       sfs_over_random_supports, sfs_search, trial_rng)
from multicoset.spectrum_model import SpectralIndexSet

from oracles import brute_force_best, cond_via_pinv, modulation_matrix

K_REF = SpectralIndexSet(10, (2, 3, 8, 9))
BEST_COND = 1.3763819204711736


def test_exhaustive_reference_instance():
    r = exhaustive_search(10, 4, K_REF)
    assert r.evaluations == 210
    assert r.cond == pytest.approx(BEST_COND, rel=1e-9)
    # {0,1,5,6} ties exactly with {1,2,6,7} and is lexicographically smaller
    assert r.pattern.offsets == (0, 1, 5, 6)
    assert r.method == "exhaustive"


def test_exhaustive_single_candidate():
    k = SpectralIndexSet(6, (1, 4))
    r = exhaustive_search(6, 6, k)
    assert r.pattern.offsets == tuple(range(6))
    assert r.evaluations == 1


def test_exhaustive_matches_brute_force_L6():
    # oracle: 8 patterns reach cond 1, the other 12 are singular; lex-first is (0, 1, 2)
    C, c = brute_force_best(6, 3, (0, 2, 4))
    assert C == (0, 1, 2) and c == pytest.approx(1.0, abs=1e-9)
    r = exhaustive_search(6, 3, SpectralIndexSet(6, (0, 2, 4)))
    assert r.pattern.offsets == C
    assert r.cond == pytest.approx(c, abs=1e-9)
    assert r.evaluations == 20


def test_exhaustive_rejections():
    with pytest.raises(InfeasibleError):
        exhaustive_search(10, 3, K_REF)
    with pytest.raises(CapExceededError, match="sfs"):
        exhaustive_search(10, 4, K_REF, cap=209)
    with pytest.raises(ValueError):
        exhaustive_search(12, 4, K_REF)


def test_sfs_reference_instance():
    r = sfs_search(10, 4, K_REF)
    assert r.cond == pytest.approx(BEST_COND, rel=1e-9)
    assert r.evaluations == sfs_cost(10, 4) == 34
    assert r.pattern.offsets == (0, 1, 5, 6)


def test_sfs_cost_L32_p10():
    k = SpectralIndexSet(32, (3, 4, 5, 17, 18, 30))
    assert sfs_search(32, 10, k).evaluations == 275


@pytest.mark.parametrize("L", [1, 3, 10, 17])
def test_sfs_single_offset(L):
    k = SpectralIndexSet(L, (0,)) if L < 3 else SpectralIndexSet(L, (0, L // 2))
    if k.q > 1:
        with pytest.raises(InfeasibleError):
            sfs_search(L, 1, k)
        k = SpectralIndexSet(L, (L - 1,))
    r = sfs_search(L, 1, k)
    assert r.evaluations == L
    assert r.cond == 1.0
    assert r.pattern.offsets == (0,)


def test_sfs_avoids_singular_second_row():
    # with k={0,2} at L=4, offsets an even distance apart give identical rows
    k = SpectralIndexSet(4, (0, 2))
    r = sfs_search(4, 2, k)
    assert not r.rank_deficient
    assert (r.pattern.offsets[1] - r.pattern.offsets[0]) % 2 == 1


def test_evaluator_counts_every_matrix():
    ev = CondEvaluator(K_REF)
    ev(np.array([[0, 1, 2, 3], [1, 2, 6, 7]]))
    ev(np.array([[0], [1], [2]]))
    assert ev.calls == 5


@pytest.mark.parametrize("workers", [1, 2, 4])
def test_results_identical_across_thread_counts(workers):
    k = SpectralIndexSet(14, (1, 2, 3, 9, 10))
    ref = exhaustive_search(14, 6, k, workers=1)
    assert exhaustive_search(14, 6, k, workers=workers) == ref
    assert sfs_search(14, 6, k, workers=workers) == sfs_search(14, 6, k)
    h1 = random_pattern_trials(14, 6, k, 500, 7, workers=1)
    assert random_pattern_trials(14, 6, k, 500, 7, workers=workers) == h1


def test_random_subset_uniform_and_stable():
    rng = trial_rng(3, 0)
    draws = [random_subset(rng, 5, 2) for _ in range(20000)]
    counts = {C: draws.count(C) for C in itertools.combinations(range(5), 2)}
    assert len(counts) == 10
    for n in counts.values():
        assert abs(n / 20000 - 0.1) < 0.015
    # determinism: same (seed, trial) gives the same stream
    assert random_subset(trial_rng(11, 5), 40, 7) == random_subset(trial_rng(11, 5), 40, 7)


def test_random_trials_against_exact_enumeration():
    exact = [cond_via_pinv(modulation_matrix(C, K_REF.indices, 10))
             for C in itertools.combinations(range(10), 4)]
    exact_fraction = sum(c < 5.5 for c in exact) / 210
    assert exact_fraction == pytest.approx(130 / 210)
    hist = random_pattern_trials(10, 4, K_REF, 10_000, 2024)
    assert abs(hist.fraction_below[5.5] - exact_fraction) <= 0.02
    assert hist.quantiles[0.0] >= BEST_COND * (1 - 1e-9)
    # 10 of the 210 patterns are singular
    assert abs(hist.infinite_count / 10_000 - 10 / 210) < 0.01


def test_random_single_trial():
    hist = random_pattern_trials(10, 4, K_REF, 1, 5)
    assert sum(hist.counts) + hist.infinite_count == 1
    patterns, conds = random_pattern_conds(10, 4, K_REF, 1, 5)
    assert len(patterns) == 1 and len(conds) == 1
    r1 = random_search(10, 4, K_REF, 1, 5)
    assert r1 == random_search(10, 4, K_REF, 1, 5)
    assert r1.pattern.offsets == patterns[0]
    assert r1.evaluations == 1


def test_histogram_structure():
    values = [1.0, 1.5, 2.0, 3.0, 50.0, math.inf, math.inf]
    h = build_histogram(values, thresholds=(2.0, 100.0), bins=4)
    assert h.trials == 7
    assert h.infinite_count == 2
    assert sum(h.counts) + h.infinite_count == 7
    assert len(h.edges) == len(h.counts) + 1
    assert h.edges[0] == 1.0 and h.edges[-1] == math.inf
    assert h.fraction_below == {2.0: 2 / 7, 100.0: 5 / 7}
    qs = [h.quantiles[p] for p in sorted(h.quantiles)]
    assert qs == sorted(qs)
    rows = list(csv.reader(io.StringIO(h.to_csv())))
    assert rows[0] == ["bin_low", "bin_high", "count"]
    assert len(rows) == len(h.counts) + 1
    side = h.sidecar()
    assert side["trials"] == 7 and side["format_version"] == 1


def test_histogram_all_ones():
    h = build_histogram([1.0] * 5)
    assert h.counts[0] == 5 and sum(h.counts) == 5


def test_sfs_supports_deterministic():
    h1, r1 = sfs_over_random_supports(10, "p_equals_q", 3, 99)
    h2, r2 = sfs_over_random_supports(10, "p_equals_q", 3, 99)
    assert h1 == h2
    assert [x for _, x in r1] == [x for _, x in r2]


def test_sfs_supports_stay_well_conditioned():
    hist, records = sfs_over_random_supports(10, "p_equals_q", 1000, 5)
    assert hist.trials == 1000
    # with p = q a universal pattern always exists (e.g. the bunched one)
    assert hist.infinite_count == 0
    assert hist.quantiles[0.5] < 3.0
    for k, r in records:
        assert r.pattern.p == k.q


def test_sfs_with_p_equals_q_is_always_full_rank_small_L():
    # exhaustive over every support for L <= 9
    for L in range(1, 10):
        for q in range(1, L + 1):
            for k in itertools.combinations(range(L), q):
                assert not sfs_search(L, q, SpectralIndexSet(L, k)).rank_deficient


def test_sfs_never_beats_exhaustive_on_random_supports():
    _, records = sfs_over_random_supports(8, "p_equals_q", 200, 17)
    for k, r in records:
        best = exhaustive_search(8, k.q, k)
        assert r.cond >= best.cond * (1 - 1e-9)


def test_sfs_supports_fixed_p():
    hist, records = sfs_over_random_supports(12, "fixed", 50, 1, p=5)
    assert all(r.pattern.p == 5 and k.q <= 5 for k, r in records)
    with pytest.raises(ValueError):
        sfs_over_random_supports(12, "fixed", 5, 1)


def test_subset_hypothesis_is_reported_not_assumed():
    """Count how often removing a row raises cond; the claim is not relied on anywhere."""
    k = K_REF
    increases = 0
    total = 0
    for C in itertools.combinations(range(10), 5):
        full = condition_number(build_modulation_matrix(SamplePattern(10, C), k))
        if full.rank_deficient:
            continue
        for drop in range(5):
            sub = C[:drop] + C[drop + 1:]
            r = condition_number(build_modulation_matrix(SamplePattern(10, sub), k))
            total += 1
            increases += r.raw_ratio > full.raw_ratio * (1 + 1e-9)
    # dropping rows from a tall matrix can only shrink sigma_min, so the cond rises
    assert total > 0 and increases > 0


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 9).flatmap(lambda L: st.tuples(
    st.just(L),
    st.sets(st.integers(0, L - 1), min_size=1, max_size=L),
    st.integers(0, 1000))))
def test_search_orderings(inst):
    L, k, seed = inst
    ks = SpectralIndexSet(L, tuple(sorted(k)))
    for p in range(ks.q, L + 1):
        best = exhaustive_search(L, p, ks)
        assert best.evaluations == math.comb(L, p)
        sfs = sfs_search(L, p, ks)
        assert sfs.evaluations == sfs_cost(L, p)
        assert (sfs.rank_deficient, sfs.raw_ratio) >= (best.rank_deficient,
                                                       best.raw_ratio * (1 - 1e-9))
        conds = random_pattern_conds(L, p, ks, 30, seed)[1]
        assert conds.min() >= best.cond * (1 - 1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 16).flatmap(lambda L: st.tuples(
    st.just(L),
    st.sets(st.integers(0, L - 1), min_size=1, max_size=L),
    st.sets(st.integers(0, L - 1), min_size=1, max_size=L),
    st.integers(0, L - 1))))
def test_cyclic_shift_preserves_cond(inst):
    L, C, k, s = inst
    ks = SpectralIndexSet(L, tuple(sorted(k)))
    a = condition_number(build_modulation_matrix(SamplePattern(L, tuple(C)), ks))
    b = condition_number(build_modulation_matrix(
        SamplePattern(L, tuple((c + s) % L for c in C)), ks))
    assert a.rank_deficient == b.rank_deficient
    if not a.rank_deficient:
        assert b.cond == pytest.approx(a.cond, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(1, 1e17)), min_size=2, max_size=30))
def test_rank_keys_total_order(pairs):
    from multicoset.modulation import condition_key
    keys = [condition_key(r, d) for d, r in pairs]
    once = sorted(range(len(keys)), key=lambda i: (keys[i], i))
    twice = sorted(reversed(range(len(keys))), key=lambda i: (keys[i], i))
    assert once == twice
    for a, b in zip(once, once[1:]):
        assert keys[a] <= keys[b]
