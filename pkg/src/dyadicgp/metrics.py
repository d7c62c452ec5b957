"""Evaluation metrics for probabilistic regression and classification.

Entropies are in nats.  ECE follows the equal-width binning convention with
the first bin closed at zero ([0, 1/M]) and the rest half-open ((k-1)/M, k/M],
so every confidence lands in exactly one bin.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def rmse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def nlpd(y_true, mean, variance) -> float:
    """Mean Gaussian negative log predictive density."""
    y_true = np.asarray(y_true, dtype=float)
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(variance <= 0):
        raise ValueError("predictive variances must be positive")
    return float(
        np.mean((y_true - mean) ** 2 / (2.0 * variance) + 0.5 * np.log(2.0 * np.pi * variance))
    )


def accuracy(labels, probs) -> float:
    labels = np.asarray(labels, dtype=int)
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def nll_categorical(labels, probs) -> float:
    """Mean negative log predictive probability of the true class."""
    labels = np.asarray(labels, dtype=int)
    probs = np.asarray(probs, dtype=float)
    picked = probs[np.arange(labels.size), labels]
    return float(-np.mean(np.log(np.maximum(picked, _EPS))))


def ece(labels, probs, n_bins: int = 15) -> float:
    """Expected calibration error with equal-width confidence bins."""
    labels = np.asarray(labels, dtype=int)
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2:
        raise ValueError("probs must be (n, classes)")
    if n_bins < 1:
        raise ValueError("need at least one bin")
    conf = probs.max(axis=1)
    pred = probs.argmax(axis=1)
    hit = (pred == labels).astype(float)
    # bin k covers (edges[k-1], edges[k]], except bin 0 which also includes 0;
    # searchsorted against the shared edge values avoids float-edge misbinning
    edges = np.arange(1, n_bins + 1) / n_bins
    idx = np.searchsorted(edges, conf, side="left")
    idx = np.clip(idx, 0, n_bins - 1)
    total = 0.0
    n = labels.size
    for k in range(n_bins):
        mask = idx == k
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        total += (cnt / n) * abs(hit[mask].mean() - conf[mask].mean())
    return float(total)


def predictive_entropy(probs) -> np.ndarray:
    """Entropy of each categorical row, in nats."""
    probs = np.asarray(probs, dtype=float)
    safe = np.maximum(probs, _EPS)
    return -np.sum(probs * np.log(safe), axis=-1)


def mutual_information(sample_probs) -> np.ndarray:
    """H(mean of draws) - mean(H of draws), clamped to be non-negative.

    sample_probs has shape (draws, n, classes); the result is (n,).
    """
    sample_probs = np.asarray(sample_probs, dtype=float)
    if sample_probs.ndim != 3:
        raise ValueError("sample_probs must be (draws, n, classes)")
    total = predictive_entropy(sample_probs.mean(axis=0))
    expected = predictive_entropy(sample_probs).mean(axis=0)
    return np.maximum(total - expected, 0.0)


def auroc(scores, positives) -> float:
    """Area under the ROC curve by rank statistic (ties averaged)."""
    scores = np.asarray(scores, dtype=float)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both positive and negative examples")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=float)
    ranks[order] = np.arange(1, scores.size + 1)
    # average ranks within tied groups
    sorted_scores = scores[order]
    start = 0
    for i in range(1, scores.size + 1):
        if i == scores.size or sorted_scores[i] != sorted_scores[start]:
            if i - start > 1:
                ranks[order[start:i]] = ranks[order[start:i]].mean()
            start = i
    rank_sum = ranks[positives].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
