import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import cohen_kappa_score, f1_score

from hetcd.evaluation import ConfusionCounts, confusion, metrics
from hetcd.raster import Mask


def test_perfect_prediction():
    truth = Mask(np.eye(5, dtype=bool))
    c = confusion(truth, truth)
    assert c.fp == 0 and c.fn == 0
    m = metrics(c)
    assert m.overall_accuracy == 1.0 and m.f1 == 1.0 and m.kappa == 1.0
    assert m.degenerate == ()


def test_all_false_prediction():
    truth = np.zeros((4, 4), bool)
    truth[1, 1:4] = True
    c = confusion(np.zeros((4, 4), bool), truth)
    assert (c.tp, c.fn) == (0, 3)


def test_random_pair_matches_pixel_loop():
    rng = np.random.default_rng(9)
    pred, truth = rng.random((10, 10)) < 0.4, rng.random((10, 10)) < 0.3
    tp = fp = fn = tn = 0
    for p, t in zip(pred.ravel(), truth.ravel()):
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    assert confusion(pred, truth) == ConfusionCounts(tp, fp, fn, tn)


def test_hand_worked_example():
    m = metrics(ConfusionCounts(tp=40, fp=10, fn=20, tn=30))
    assert m.overall_accuracy == pytest.approx(0.7)
    assert m.precision == pytest.approx(0.8)
    assert m.recall == pytest.approx(2 / 3)
    assert m.f1 == pytest.approx(0.7272727, abs=1e-6)
    assert m.kappa == pytest.approx(0.4)


def test_independent_prediction_has_zero_kappa():
    # truth and prediction each positive on half the pixels, overlap exactly a quarter
    m = metrics(ConfusionCounts(tp=25, fp=25, fn=25, tn=25))
    assert m.kappa == pytest.approx(0.0)


def test_degenerate_flags():
    nothing = metrics(ConfusionCounts(tp=0, fp=0, fn=0, tn=100))
    assert nothing.precision == 0.0 and nothing.recall == 0.0 and nothing.f1 == 0.0
    assert set(nothing.degenerate) == {"precision", "recall", "f1", "kappa"}
    # chance agreement 1 with perfect agreement
    assert nothing.kappa == 1.0
    everything = metrics(ConfusionCounts(tp=100, fp=0, fn=0, tn=0))
    assert everything.kappa == 1.0 and "kappa" in everything.degenerate


def test_empty_counts_rejected():
    with pytest.raises(ValueError):
        metrics(ConfusionCounts(0, 0, 0, 0))


def test_shape_mismatch():
    with pytest.raises(ValueError, match="shapes differ"):
        confusion(np.zeros((2, 3), bool), np.zeros((3, 2), bool))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_against_sklearn(seed):
    rng = np.random.default_rng(seed)
    pred = rng.random(200) < rng.random()
    truth = rng.random(200) < rng.random()
    m = metrics(confusion(pred[None, :], truth[None, :]))
    if "kappa" not in m.degenerate:
        assert m.kappa == pytest.approx(cohen_kappa_score(truth, pred), abs=1e-12)
    if "f1" not in m.degenerate:
        assert m.f1 == pytest.approx(f1_score(truth, pred), abs=1e-12)


def test_metrics_text_block():
    c = ConfusionCounts(tp=40, fp=10, fn=20, tn=30)
    text = metrics(c).to_text(c)
    lines = dict(line.split("=") for line in text.strip().splitlines())
    assert lines["tp"] == "40" and lines["kappa"] == "0.400000"
    assert lines["degenerate"] == "none"
