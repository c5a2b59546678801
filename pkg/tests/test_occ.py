import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import gaussian_nll_no_const, shrunk_covariance
from stoc.occ import (
    DEGENERATE_VARIANCE,
    GdeModel,
    GdeFitError,
    fit_views,
    gde_fit,
    gde_score,
    score_views,
)


def test_symmetric_points_zero_shrinkage():
    g = gde_fit(np.array([[-1.0, 0], [1, 0], [0, -1], [0, 1]]), shrinkage=0.0)
    np.testing.assert_allclose(g.mean, [0, 0], atol=0)
    np.testing.assert_allclose(g.covariance, 0.5 * np.eye(2), atol=1e-15)


def test_more_dims_than_rows(rng):
    g = gde_fit(rng.standard_normal((3, 10)), shrinkage=0.1)
    assert np.all(np.diag(g.covariance_factor) > 0)


def test_repeated_point_degenerate_rule():
    g = gde_fit(np.tile([1.0, 2.0, 3.0], (5, 1)), shrinkage=0.5)
    np.testing.assert_allclose(g.covariance, DEGENERATE_VARIANCE * np.eye(3), rtol=1e-12)
    s = gde_score(g, np.array([[1.0, 2, 3], [1.1, 2, 3]]))
    assert np.all(np.isfinite(s)) and s[1] > s[0]


def test_shrinkage_escalates_when_singular(rng):
    # rank-deficient covariance; without shrinkage the factorization fails
    X = rng.standard_normal((4, 6))
    g = gde_fit(X, shrinkage=0.0)
    assert g.shrinkage >= 1e-3


def test_matches_covariance_oracle(rng):
    X = rng.standard_normal((30, 4)) @ rng.standard_normal((4, 4))
    g = gde_fit(X, shrinkage=0.05)
    mu, cov = shrunk_covariance(X, 0.05)
    np.testing.assert_allclose(g.mean, mu, rtol=1e-12)
    np.testing.assert_allclose(g.covariance, cov, rtol=1e-10, atol=1e-12)
    q = rng.standard_normal((7, 4))
    expected = [gaussian_nll_no_const(x, mu, cov) for x in q]
    np.testing.assert_allclose(gde_score(g, q), expected, rtol=1e-10)


def test_score_at_mean_is_half_log_det(rng):
    g = gde_fit(rng.standard_normal((20, 3)))
    assert gde_score(g, g.mean) == pytest.approx(0.5 * g.log_det, abs=1e-12)


def test_identity_distance_two_vs_one():
    # four symmetric points with lam 0 give covariance I/2; pin I via scaling
    X = math.sqrt(2) * np.array([[-1.0, 0], [1, 0], [0, -1], [0, 1]])
    g = gde_fit(X, shrinkage=0.0)
    np.testing.assert_allclose(g.covariance, np.eye(2), atol=1e-14)
    d1 = gde_score(g, np.array([1.0, 0.0]))
    d2 = gde_score(g, np.array([2.0, 0.0]))
    assert d2 - d1 == pytest.approx(1.5, abs=1e-12)


def test_one_dimensional_closed_form(rng):
    x = rng.normal(3.0, 2.0, 50)[:, None]
    g = gde_fit(x, shrinkage=0.0)
    mu, var = x.mean(), x.var()
    q = np.linspace(-5, 10, 11)
    nll = 0.5 * (q - mu) ** 2 / var + 0.5 * math.log(var)
    np.testing.assert_allclose(gde_score(g, q[:, None]), nll, rtol=1e-9, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 6))
def test_monotone_along_rays(seed, d):
    rng = np.random.default_rng(seed)
    g = gde_fit(rng.standard_normal((40, d)))
    direction = rng.standard_normal(d)
    ts = np.linspace(0, 5, 30)
    s = gde_score(g, g.mean + ts[:, None] * direction)
    assert np.all(np.diff(s) > 0)
    assert np.all(s >= gde_score(g, g.mean))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-100, 100))
def test_translation_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    X, q = rng.standard_normal((30, 3)), rng.standard_normal((5, 3))
    v = np.full(3, shift)
    a = gde_score(gde_fit(X), q)
    b = gde_score(gde_fit(X + v), q + v)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_rank_stable_under_covariance_rescaling(seed, scale):
    rng = np.random.default_rng(seed)
    X, q = rng.standard_normal((30, 3)), rng.standard_normal((20, 3))
    g = gde_fit(X)
    scaled = GdeModel(g.mean, g.covariance_factor * math.sqrt(scale),
                      g.log_det + 3 * math.log(scale), g.shrinkage)
    a, b = gde_score(g, q), gde_score(scaled, q)
    # scores differ by a positive rescale of the quadratic part plus a constant
    np.testing.assert_array_equal(np.argsort(a, kind="stable"), np.argsort(b, kind="stable"))


@pytest.mark.parametrize("X, match", [
    (np.zeros((1, 3)), "2 rows"),
    (np.zeros(3), "2-D"),
    (np.array([[0.0], [np.inf]]), "non-finite"),
])
def test_fit_rejects(X, match):
    with pytest.raises(ValueError, match=match):
        gde_fit(X)


def test_fit_error_type_is_linalg():
    assert issubclass(GdeFitError, np.linalg.LinAlgError)


def test_score_rejects_wrong_width(rng):
    g = gde_fit(rng.standard_normal((5, 2)))
    with pytest.raises(ValueError):
        gde_score(g, np.zeros((1, 3)))
    with pytest.raises(ValueError):
        gde_score(g, np.array([np.nan, 0.0]))


def test_views_take_lowest_score(rng):
    views = rng.standard_normal((50, 3, 2))
    models = fit_views(views)
    assert len(models) == 3
    q = rng.standard_normal((6, 3, 2))
    per = np.column_stack([gde_score(m, q[:, i]) for i, m in enumerate(models)])
    np.testing.assert_array_equal(score_views(models, q), per.min(axis=1))
