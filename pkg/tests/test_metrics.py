import math

import numpy as np
import pytest

from dyadicgp import metrics


def test_rmse_values():
    assert metrics.rmse([0.0, 0.0], [1.0, 0.0]) == pytest.approx(
        0.7071067811865476, abs=1e-15
    )
    assert metrics.rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def test_nlpd_unit_variance_identity():
    # with unit predictive variance the NLPD is mse/2 + ln(2 pi)/2
    y = np.array([0.0, 1.0, -2.0])
    mean = np.array([0.5, 1.0, -1.0])
    val = metrics.nlpd(y, mean, np.ones(3))
    mse = np.mean((y - mean) ** 2)
    assert val == pytest.approx(0.5 * mse + 0.9189385332046727, abs=1e-14)
    with pytest.raises(ValueError):
        metrics.nlpd(y, mean, np.array([1.0, 0.0, 1.0]))


def test_nlpd_scales_with_variance():
    y = np.zeros(1)
    mean = np.zeros(1)
    # residual-free: larger variance costs log-volume
    assert metrics.nlpd(y, mean, np.array([4.0])) - metrics.nlpd(
        y, mean, np.array([1.0])
    ) == pytest.approx(math.log(2.0), abs=1e-14)


def test_accuracy_and_categorical_nll():
    probs = np.array([[0.7, 0.3], [0.2, 0.8], [0.6, 0.4]])
    labels = np.array([0, 1, 1])
    assert metrics.accuracy(labels, probs) == pytest.approx(2.0 / 3.0)
    expected = -(math.log(0.7) + math.log(0.8) + math.log(0.4)) / 3.0
    assert metrics.nll_categorical(labels, probs) == pytest.approx(expected, abs=1e-14)
    # zero probability is floored, not inf
    bad = np.array([[1.0, 0.0]])
    assert np.isfinite(metrics.nll_categorical(np.array([1]), bad))


def test_ece_hand_example():
    # two bins: [0, .5] holds nothing, (.5, 1] everything except conf .55, .6
    # live in the same halves -> bins {.55, .6} and {.8, .9}
    probs = np.array([[0.1, 0.9], [0.2, 0.8], [0.4, 0.6], [0.45, 0.55]])
    labels = np.array([1, 1, 0, 1])
    assert metrics.ece(labels, probs, n_bins=2) == pytest.approx(0.0375, abs=1e-15)


def test_ece_perfect_and_worst_cases():
    # confident and always right: zero calibration error
    probs = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert metrics.ece(np.array([1, 0]), probs, n_bins=10) == pytest.approx(0.0)
    # confident and always wrong: error 1
    assert metrics.ece(np.array([0, 1]), probs, n_bins=10) == pytest.approx(1.0)


def test_ece_bin_edges_are_stable():
    # a confidence computed as 3/15 must land in the bin closed at 3/15 even
    # though 0.2 * 15 > 3 in floats
    conf = 3.0 / 15.0
    probs = np.column_stack([np.full(10, conf), 1 - np.full(10, conf)])
    labels = np.zeros(10, dtype=int)
    # prediction is argmax -> class 1 (1 - conf > conf), so hit rate 0 and the
    # reported confidence is 1 - conf
    val = metrics.ece(labels, probs, n_bins=15)
    assert val == pytest.approx(1 - conf, abs=1e-12)
    with pytest.raises(ValueError):
        metrics.ece(labels, probs, n_bins=0)
    with pytest.raises(ValueError):
        metrics.ece(labels, probs[:, 0], n_bins=2)


def test_ece_is_permutation_invariant():
    rng = np.random.default_rng(0)
    logits = rng.normal(0, 1, (40, 3))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    labels = rng.integers(0, 3, 40)
    base = metrics.ece(labels, probs)
    perm = rng.permutation(40)
    assert metrics.ece(labels[perm], probs[perm]) == pytest.approx(base, abs=1e-15)


def test_predictive_entropy_values():
    assert metrics.predictive_entropy(np.full((1, 4), 0.25))[0] == pytest.approx(
        math.log(4.0), abs=1e-12
    )
    assert metrics.predictive_entropy(np.array([[0.5, 0.5]]))[0] == pytest.approx(
        0.6931471805599453, abs=1e-15
    )
    assert metrics.predictive_entropy(np.array([[1.0, 0.0]]))[0] == pytest.approx(
        0.0, abs=1e-10
    )


def test_mutual_information_bounds():
    # identical draws mean no disagreement: MI = 0
    row = np.array([[0.3, 0.7], [0.9, 0.1]])
    stacked = np.stack([row, row, row])
    assert np.allclose(metrics.mutual_information(stacked), 0.0, atol=1e-12)
    # maximally disagreeing confident draws: MI = entropy of the mean = ln 2
    a = np.array([[1.0, 0.0]])
    b = np.array([[0.0, 1.0]])
    mi = metrics.mutual_information(np.stack([a, b]))
    assert mi[0] == pytest.approx(math.log(2.0), abs=1e-10)
    with pytest.raises(ValueError):
        metrics.mutual_information(row)


def test_auroc_values():
    scores = np.array([0.1, 0.4, 0.35, 0.8])
    positives = np.array([False, True, False, True])
    # pairs: (0.4 vs 0.1) win, (0.4 vs 0.35) win, (0.8 vs both) wins -> 4/4
    assert metrics.auroc(scores, positives) == pytest.approx(1.0)
    positives2 = np.array([False, False, True, True])
    # 0.35 beats 0.1 only; 0.8 beats both -> 3/4
    assert metrics.auroc(scores, positives2) == pytest.approx(0.75)
    # ties contribute half
    tied = metrics.auroc(np.array([0.5, 0.5]), np.array([True, False]))
    assert tied == pytest.approx(0.5)
    with pytest.raises(ValueError):
        metrics.auroc(scores, np.zeros(4, dtype=bool))


def test_auroc_matches_pair_counting():
    rng = np.random.default_rng(3)
    scores = rng.normal(0, 1, 60)
    scores[rng.integers(0, 60, 10)] = 0.25  # inject ties
    positives = rng.uniform(size=60) < 0.4
    pos = scores[positives]
    neg = scores[~positives]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    expected = wins / (pos.size * neg.size)
    assert metrics.auroc(scores, positives) == pytest.approx(expected, abs=1e-12)
