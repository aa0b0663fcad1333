import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from sklearn.metrics import adjusted_rand_score

from hetcd.ensemble import (CoAssociation, EnsembleParams, accumulate, accumulate_fuzzy, consensus,
                            draw_k, mix64, run_ensemble, run_seed, stacked_k_bounds)
from hetcd.fcm import FcmParams


def blobs(n_per, centers, sigma=1.0, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, float)
    X = np.vstack([c + sigma * rng.normal(size=(n_per, centers.shape[1])) for c in centers])
    return X, np.repeat(np.arange(len(centers)), n_per)


# draws and seeds

def test_degenerate_range():
    p = EnsembleParams(k_min=5, k_max=5, seed=3)
    assert {draw_k(p, r) for r in range(50)} == {5}


def test_draw_is_deterministic():
    p = EnsembleParams(seed=11)
    assert [draw_k(p, r) for r in range(30)] == [draw_k(p, r) for r in range(30)]


def test_draw_frequencies():
    p = EnsembleParams(k_min=4, k_max=7, seed=1)
    counts = np.bincount([draw_k(p, r) for r in range(100_000)], minlength=8)[4:]
    assert np.all(np.abs(counts / 1e5 - 0.25) <= 0.01)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_run_seeds_differ_from_draw_stream():
    p = EnsembleParams(seed=0)
    seeds = {run_seed(p, r) for r in range(100)}
    assert len(seeds) == 100
    assert mix64(1, 2) != mix64(2, 1)


# stacked bounds

@pytest.mark.parametrize("args, expected", [((5, 4, 30), (5, 20)), ((1, 1), (2, 2)),
                                            ((6, 7, 30), (7, 30)), ((3, 1), (3, 3))])
def test_stacked_bounds_examples(args, expected):
    assert stacked_k_bounds(*args) == expected


@given(st.integers(1, 40), st.integers(1, 40), st.integers(2, 60))
def test_stacked_bounds_formula(n_opt, n_sar, cap):
    lo, hi = stacked_k_bounds(n_opt, n_sar, cap)
    assert lo == max(n_opt, n_sar, 2)
    assert hi == max(min(n_opt * n_sar, cap), lo)
    EnsembleParams(k_min=lo, k_max=hi)


def test_stacked_bounds_reject_zero():
    with pytest.raises(ValueError):
        stacked_k_bounds(0, 3)


# co-association

def test_identical_runs_reproduce_partition():
    labels = np.array([0, 0, 1, 2, 1])
    C = accumulate([labels] * 4).matrix()
    assert np.array_equal(C, (labels[:, None] == labels[None, :]).astype(float))


def test_half_agreement():
    C = accumulate([np.array([0, 0, 1]), np.array([0, 1, 1])])
    assert C[0, 1] == 0.5 and C[1, 0] == 0.5 and C[1, 2] == 0.5 and C[0, 2] == 0.0
    assert C[2, 2] == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 25), st.integers(1, 8))
def test_accumulate_matches_brute_force(seed, n, runs):
    rng = np.random.default_rng(seed)
    sets = [rng.integers(0, 4, n) for _ in range(runs)]
    co = accumulate(sets)
    C = co.matrix()
    assert np.array_equal(C, C.T) and np.all(np.diag(C) == 1.0)
    for p in range(n):
        for q in range(n):
            assert C[p, q] == sum(s[p] == s[q] for s in sets) / runs
            assert co[p, q] == C[p, q]


def test_fuzzy_accumulation_of_hard_memberships_matches_hard():
    labels = [np.array([0, 1, 1, 2]), np.array([1, 1, 0, 0])]
    hard = accumulate(labels)
    soft = accumulate_fuzzy([np.eye(3)[lab].T for lab in labels])
    assert np.allclose(hard.condensed, soft.condensed)


def test_accumulate_errors():
    with pytest.raises(ValueError):
        accumulate([])
    with pytest.raises(ValueError):
        accumulate([np.zeros(3, int), np.zeros(4, int)])


# consensus

def test_two_perfect_blocks():
    labels = np.array([0, 0, 0, 1, 1, 1, 1])
    part = consensus(accumulate([labels]))
    assert part.k == 2 and np.array_equal(part.labels, labels)


def test_all_ones_is_one_cluster():
    part = consensus(accumulate([np.zeros(6, int)]))
    assert part.k == 1 and np.all(part.labels == 0)


def test_all_zeros_is_one_cluster():
    part = consensus(accumulate([np.arange(6)]))
    assert part.k == 1 and np.all(part.labels == 0)


def test_single_point():
    part = consensus(CoAssociation(np.zeros(0), 1, 1))
    assert part.k == 1 and part.labels.tolist() == [0]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 30), st.integers(1, 6))
def test_consensus_labels_valid_and_bounded_by_zero_blocks(seed, n, runs):
    rng = np.random.default_rng(seed)
    sets = [rng.integers(0, rng.integers(1, 5), n) for _ in range(runs)]
    part = consensus(accumulate(sets))
    assert part.k >= 1
    assert np.array_equal(np.unique(part.labels), np.arange(part.k))
    # points that always co-cluster form blocks at dissimilarity 0
    blocks = len({tuple(s[p] for s in sets) for p in range(n)})
    assert part.k <= blocks


def test_two_blob_recovery():
    X, truth = blobs(100, [[0, 0], [10, 0]])
    part = run_ensemble(X, EnsembleParams(k_min=2, k_max=5, runs=20, seed=4), FcmParams(k=2))
    assert part.k == 2
    assert adjusted_rand_score(truth, part.labels) >= 0.99
    assert len(part.draws) == 20 and set(part.draws) <= {2, 3, 4, 5}


def test_run_ensemble_deterministic():
    X, _ = blobs(40, [[0, 0], [6, 0], [0, 6]], seed=2)
    p = EnsembleParams(k_min=2, k_max=5, runs=6, seed=9)
    a = run_ensemble(X, p, FcmParams(k=2, metric="adaptive_mahalanobis"))
    b = run_ensemble(X, p, FcmParams(k=2, metric="adaptive_mahalanobis"))
    assert np.array_equal(a.labels, b.labels) and a.draws == b.draws


def test_gamma_populations():
    rng = np.random.default_rng(5)
    thetas = np.repeat([1.0, 4.0, 16.0], 300)
    X = rng.gamma(5.0, thetas / 5.0)[:, None]
    part = run_ensemble(X, EnsembleParams(k_min=2, k_max=7, runs=10, seed=1),
                        FcmParams(k=2, metric="hellinger_gamma", looks=5.0))
    assert part.k >= 2
    assert np.all(np.isin(part.labels, np.arange(part.k)))


def test_too_few_points():
    with pytest.raises(ValueError, match="k_max"):
        run_ensemble(np.zeros((3, 1)), EnsembleParams(), FcmParams(k=2))


@pytest.mark.parametrize("kwargs", [{"k_min": 1}, {"k_min": 5, "k_max": 4}, {"runs": 0}])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        EnsembleParams(**kwargs)
