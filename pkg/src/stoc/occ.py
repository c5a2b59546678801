"""Gaussian density estimation (GDE) one-class classifier.

The anomaly score is the negative log-density with the ``(d/2) log 2pi``
constant dropped::

    score(x) = 0.5 * (x - mu)^T Sigma^{-1} (x - mu) + 0.5 * log det Sigma

All thresholds in this package are rank based, so the dropped constant
never matters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

DEFAULT_SHRINKAGE = 1e-3
DEGENERATE_VARIANCE = 1e-6


class GdeFitError(np.linalg.LinAlgError):
    """Covariance could not be factorized even at the largest shrinkage."""


@dataclass(frozen=True)
class GdeModel:
    mean: np.ndarray
    covariance_factor: np.ndarray  # lower Cholesky factor of the regularized covariance
    log_det: float
    shrinkage: float

    @property
    def dims(self) -> int:
        return self.mean.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        L = self.covariance_factor
        return L @ L.T

    def score(self, X: np.ndarray) -> np.ndarray:
        return gde_score(self, X)


def _shrinkage_ladder(start: float) -> list[float]:
    return [start] + [lam for lam in (1e-3, 1e-2, 1e-1) if lam > start]


def gde_fit(features: np.ndarray, shrinkage: float = DEFAULT_SHRINKAGE) -> GdeModel:
    """Fit mean and shrunk covariance ``(1-lam) S + lam (tr S / d) I``.

    ``S`` is the maximum-likelihood (divide by n) covariance. If the Cholesky
    factorization fails, ``lam`` is raised through powers of ten up to 0.1.
    When all rows are identical the covariance is ``1e-6 * I``.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    n, d = X.shape
    if n < 2 or d < 1:
        raise ValueError(f"GDE needs at least 2 rows and 1 column, got {X.shape}")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError(f"shrinkage must be in [0, 1], got {shrinkage}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")

    mean = X.mean(axis=0)
    centered = X - mean
    S = centered.T @ centered / n
    trace = float(np.trace(S))
    if trace <= 0.0:
        cov = DEGENERATE_VARIANCE * np.eye(d)
        L = np.linalg.cholesky(cov)
        return GdeModel(mean, L, float(2 * np.sum(np.log(np.diag(L)))), shrinkage)

    target = (trace / d) * np.eye(d)
    for lam in _shrinkage_ladder(shrinkage):
        cov = (1.0 - lam) * S + lam * target
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            continue
        diag = np.diag(L)
        if np.all(diag > 0) and np.all(np.isfinite(diag)):
            return GdeModel(mean, L, float(2 * np.sum(np.log(diag))), lam)
    raise GdeFitError(
        f"covariance of {n}x{d} data not positive definite at shrinkage 0.1"
    )


def gde_score(model: GdeModel, X: np.ndarray) -> np.ndarray:
    """Anomaly score for a vector (returns a float) or for each row of a matrix."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.ndim != 2 or X2.shape[1] != model.dims:
        raise ValueError(f"expected {model.dims} columns, got shape {X.shape}")
    if not np.all(np.isfinite(X2)):
        raise ValueError("query contains non-finite values")
    white = solve_triangular(
        model.covariance_factor, (X2 - model.mean).T, lower=True, check_finite=False
    )
    scores = 0.5 * np.einsum("ij,ij->j", white, white) + 0.5 * model.log_det
    return float(scores[0]) if single else scores


# Per-view ensembles: one GDE per transformation, aggregated by taking the
# highest normality, i.e. the lowest anomaly score.

def fit_views(views: np.ndarray, shrinkage: float = DEFAULT_SHRINKAGE) -> list[GdeModel]:
    """Fit one GDE per view of an ``(n, n_views, dim)`` stack."""
    views = np.asarray(views, dtype=np.float64)
    if views.ndim != 3:
        raise ValueError("views must have shape (n, n_views, dim)")
    return [gde_fit(views[:, m, :], shrinkage) for m in range(views.shape[1])]


def score_views(models: Sequence[GdeModel], views: np.ndarray) -> np.ndarray:
    """Per-row score ``-max_m normality_m`` where normality is ``-score``."""
    views = np.asarray(views, dtype=np.float64)
    if views.ndim != 3 or views.shape[1] != len(models):
        raise ValueError(
            f"expected (n, {len(models)}, dim) stack, got shape {views.shape}"
        )
    per_view = np.column_stack(
        [gde_score(model, views[:, m, :]) for m, model in enumerate(models)]
    )
    normality = -per_view
    return -normality.max(axis=1)
