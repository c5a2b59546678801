"""Ensemble data refinement.

Split the unlabeled rows into K disjoint folds, fit a one-class classifier
on each fold, score every row with every classifier, and mark a row as
anomalous (pseudo-label 1) if any classifier puts it in its top-gamma tail.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .occ import DEFAULT_SHRINKAGE, fit_views, gde_fit, gde_score, score_views


@dataclass(frozen=True)
class RefinementConfig:
    ensemble_count: int = 5
    gamma: float = 0.1
    partition_seed: int = 0
    shrinkage: float = DEFAULT_SHRINKAGE

    def __post_init__(self):
        if int(self.ensemble_count) != self.ensemble_count or self.ensemble_count < 1:
            raise ValueError(f"ensemble_count must be a positive integer, got {self.ensemble_count}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class RefinedSet:
    kept_indices: np.ndarray
    pseudo_labels: np.ndarray
    thresholds: np.ndarray
    fold_assignment: np.ndarray

    @property
    def rejected_indices(self) -> np.ndarray:
        return np.flatnonzero(self.pseudo_labels == 1)


def disjoint_partition(n: int, k: int, seed) -> list[np.ndarray]:
    """Randomly split ``range(n)`` into ``k`` sets whose sizes differ by at most one."""
    if k < 1 or n < k:
        raise ValueError(f"cannot split {n} rows into {k} non-empty folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]


def percentile_threshold(scores, gamma: float) -> float:
    """Largest eta such that ``mean(scores >= eta) >= gamma``.

    Returns ``inf`` for ``gamma == 0`` so that nothing is flagged.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("scores must be non-empty")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if gamma == 0.0:
        return float("inf")
    n = s.size
    # smallest tail count k with k / n >= gamma, evaluated the same way as the
    # defining inequality to stay exact under float rounding
    k = min(max(int(np.ceil(gamma * n)), 1), n)
    while k > 1 and (k - 1) / n >= gamma:
        k -= 1
    while k < n and k / n < gamma:
        k += 1
    return float(np.sort(s)[::-1][k - 1])


def aggregate_predictions(per_classifier_flags) -> np.ndarray:
    """Pseudo-label is 1 unless every classifier calls the row normal."""
    flags = [np.asarray(f, dtype=np.int64) for f in per_classifier_flags]
    if not flags:
        raise ValueError("need at least one classifier")
    if any(f.shape != flags[0].shape for f in flags):
        raise ValueError("flag sequences must have equal length")
    keep = np.ones_like(flags[0])
    for f in flags:
        keep = keep * (1 - f)
    return 1 - keep


def _fold_scores(Z: np.ndarray, fold: np.ndarray, shrinkage: float) -> np.ndarray:
    if Z.ndim == 2:
        return gde_score(gde_fit(Z[fold], shrinkage), Z)
    return score_views(fit_views(Z[fold], shrinkage), Z)


def refine_data(
    features: np.ndarray,
    feature_extractor: Callable[[np.ndarray], np.ndarray] | None,
    config: RefinementConfig,
    call_index: int = 0,
) -> RefinedSet:
    """One refinement pass over all rows of ``features``.

    ``feature_extractor`` maps the raw matrix to either an ``(n, dim)``
    matrix, scored by a single GDE per fold, or an ``(n, n_views, dim)``
    stack, scored by per-view GDEs with max-normality aggregation. ``None``
    means raw features. Partitions are drawn from
    ``(config.partition_seed, call_index)``.
    """
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    K = config.ensemble_count
    if n < 2 * K:
        raise ValueError(f"{n} rows are too few for {K} folds of at least 2 rows")
    Z = X if feature_extractor is None else np.asarray(feature_extractor(X))
    if Z.shape[0] != n:
        raise ValueError("feature extractor changed the number of rows")

    folds = disjoint_partition(n, K, [config.partition_seed, call_index])
    fold_assignment = np.empty(n, dtype=np.int64)
    thresholds = np.empty(K)
    flags = []
    for k, fold in enumerate(folds):
        fold_assignment[fold] = k
        scores = _fold_scores(Z, fold, config.shrinkage)
        thresholds[k] = percentile_threshold(scores, config.gamma)
        flags.append(scores >= thresholds[k])
    pseudo = aggregate_predictions(flags)
    return RefinedSet(
        kept_indices=np.flatnonzero(pseudo == 0),
        pseudo_labels=pseudo,
        thresholds=thresholds,
        fold_assignment=fold_assignment,
    )


def exclusion_rates(refined: RefinedSet, hidden_labels: Sequence[int]) -> tuple[float, float]:
    """Fraction of true anomalies and of true normals that were rejected.

    Diagnostics only; the hidden labels never feed back into fitting.
    """
    y = np.asarray(hidden_labels)
    rejected = refined.pseudo_labels == 1
    n_anom = int(np.sum(y == 1))
    n_norm = int(np.sum(y == 0))
    anom = float(np.sum(rejected & (y == 1)) / n_anom) if n_anom else float("nan")
    norm = float(np.sum(rejected & (y == 0)) / n_norm) if n_norm else float("nan")
    return anom, norm
