"""Rank metrics on a 0-100 scale. Label 1 is the positive (anomalous) class
and higher scores mean "more positive"."""

from __future__ import annotations

import numpy as np


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels must have the same length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise ValueError("both classes must be present")
    return s, y.astype(np.int64)


def _sweep(s, y):
    """Cumulative TP and FP counts at each distinct score, highest first."""
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(1 - y_sorted)
    # last position of each block of tied scores
    ends = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s.size - 1]
    return tp[ends], fp[ends]


def auc(scores, labels) -> float:
    """P(random positive outranks random negative), ties count one half."""
    s, y = _check(scores, labels)
    ranks = _average_ranks(s)
    n_pos = y.sum()
    n_neg = y.size - n_pos
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(100.0 * u / (n_pos * n_neg))


def _average_ranks(s):
    order = np.argsort(s, kind="stable")
    s_sorted = s[order]
    ranks = np.empty(s.size)
    starts = np.r_[0, np.flatnonzero(np.diff(s_sorted) != 0) + 1]
    ends = np.r_[starts[1:], s.size]
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = (a + b + 1) / 2.0
    return ranks


def ap(scores, labels) -> float:
    """Average precision: sum over the descending sweep of delta-recall times precision."""
    s, y = _check(scores, labels)
    tp, fp = _sweep(s, y)
    precision = tp / (tp + fp)
    recall = tp / y.sum()
    delta = np.diff(np.r_[0.0, recall])
    return float(100.0 * np.sum(delta * precision))


def f1_at_ratio(scores, labels) -> float:
    """F1 when the top-k scores are called positive, k = number of true positives.

    Ties at the cut go to the lower original index.
    """
    s, y = _check(scores, labels)
    k = int(y.sum())
    top = np.argsort(-s, kind="stable")[:k]
    tp = int(y[top].sum())
    if tp == 0:
        return 0.0
    precision = tp / k
    recall = tp / k
    return float(100.0 * 2 * precision * recall / (precision + recall))


def recall_at_precision(scores, labels, p: float) -> float:
    """Largest recall among thresholds whose precision is at least ``p`` percent."""
    s, y = _check(scores, labels)
    tp, fp = _sweep(s, y)
    precision = tp / (tp + fp)
    ok = precision >= p / 100.0
    if not ok.any():
        return 0.0
    return float(100.0 * tp[ok].max() / y.sum())


def minority_positive(scores, labels):
    """Relabel so the test minority class is 1, flipping scores to match."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    if 2 * y.sum() > y.size:
        return -s, 1 - y
    return s, y
