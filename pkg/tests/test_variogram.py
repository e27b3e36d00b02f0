"""Semivariogram estimation and model fitting against generated fields."""

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from tptkit.errors import ConfigError
from tptkit.variogram import (
    EmpiricalVariogram,
    VariogramModel,
    empirical_variogram,
    fit_variogram,
)


def test_model_conventions():
    vg = VariogramModel("exponential", nugget=0.5, sill=2.0, range_m=10_000.0)
    assert vg(0.0) == 0.0  # gamma(0) = 0 by convention
    assert abs(vg(1e-9) - 0.5) < 1e-6  # nugget applies for r > 0
    r = np.linspace(0, 100_000, 50)
    g = vg(r)
    assert np.all(np.diff(g) >= -1e-12)
    # covariance complements to the sill
    np.testing.assert_allclose(vg.covariance(r) + vg(r), 2.0)


def test_model_validation():
    with pytest.raises(ConfigError):
        VariogramModel("exp", 0.0, 1.0, 1.0)
    with pytest.raises(ConfigError):
        VariogramModel("exponential", 2.0, 1.0, 1.0)  # sill < nugget
    with pytest.raises(ConfigError):
        VariogramModel("exponential", 0.0, 1.0, -5.0)


def test_spherical_reaches_sill_at_range():
    vg = VariogramModel("spherical", 0.0, 3.0, 20_000.0)
    assert abs(vg(20_000.0) - 3.0) < 1e-12
    assert abs(vg(50_000.0) - 3.0) < 1e-12


def test_two_points_hand_semivariance():
    coords = np.array([[0.0, 0.0], [10_000.0, 0.0]])
    emp = empirical_variogram(coords, np.array([1.0, 3.0]), 5_000.0, 20_000.0)
    assert emp.lags.size == 1
    assert emp.semivariances[0] == 2.0  # 0.5 * (1 - 3)^2
    assert emp.pair_counts[0] == 1


def test_constant_field_zero_semivariance():
    rng = np.random.default_rng(0)
    coords = rng.uniform(0, 50_000, size=(30, 2))
    emp = empirical_variogram(coords, np.full(30, 7.0), 5_000.0, 80_000.0)
    np.testing.assert_array_equal(emp.semivariances, 0.0)


def test_fewer_than_two_points():
    with pytest.raises(ConfigError):
        empirical_variogram(np.array([[0.0, 0.0]]), np.array([1.0]), 1.0, 10.0)


def test_monte_carlo_matches_generator():
    # field drawn from the very model the estimator should recover
    true = VariogramModel("exponential", nugget=0.0, sill=1.0, range_m=50_000.0)
    rng = np.random.default_rng(12)
    coords = rng.uniform(0, 200_000.0, size=(150, 2))
    cov = true.covariance(squareform(pdist(coords)))
    cov[np.diag_indices(150)] += 1e-10
    chol = np.linalg.cholesky(cov)
    snapshots = (chol @ rng.standard_normal((150, 400))).T  # (n_t, n)
    emp = empirical_variogram(coords, snapshots, 10_000.0, 100_000.0)
    ok = emp.pair_counts >= 100
    rel = np.abs(emp.semivariances[ok] - true(emp.lags[ok])) / true(emp.lags[ok])
    assert rel.max() < 0.15


def test_fit_recovers_exact_parameters():
    true = VariogramModel("exponential", nugget=0.2, sill=1.7, range_m=40_000.0)
    lags = np.linspace(2_000.0, 150_000.0, 25)
    emp = EmpiricalVariogram(lags=lags, semivariances=true(lags),
                             pair_counts=np.full(25, 500))
    fit = fit_variogram(emp, "exponential")
    assert abs(fit.nugget - 0.2) < 0.01 * 1.7
    assert abs(fit.sill - 1.7) / 1.7 < 0.01
    assert abs(fit.range_m - 40_000.0) / 40_000.0 < 0.01


def test_fit_pure_nugget_pins_range():
    lags = np.linspace(2_000.0, 80_000.0, 12)
    emp = EmpiricalVariogram(lags=lags, semivariances=np.full(12, 0.8),
                             pair_counts=np.full(12, 200))
    fit = fit_variogram(emp, "exponential", range_bounds_m=(100.0, None))
    assert fit.range_m == 100.0
    assert abs(fit.sill - fit.nugget) < 1e-6
    assert abs(fit.nugget - 0.8) < 0.01


def test_fit_needs_three_bins():
    emp = EmpiricalVariogram(lags=np.array([1.0, 2.0]),
                             semivariances=np.array([0.5, 0.6]),
                             pair_counts=np.array([10, 10]))
    with pytest.raises(ConfigError):
        fit_variogram(emp)


def test_fit_budget_exhaustion_carries_best_iterate():
    from tptkit.errors import FitError

    true = VariogramModel("exponential", nugget=0.1, sill=2.0, range_m=30_000.0)
    lags = np.linspace(2_000.0, 120_000.0, 20)
    emp = EmpiricalVariogram(lags=lags, semivariances=true(lags) * (1 + 0.02),
                             pair_counts=np.full(20, 100))
    with pytest.raises(FitError) as exc:
        fit_variogram(emp, "exponential", max_nfev=1)
    assert exc.value.best is not None and len(exc.value.best) == 3
