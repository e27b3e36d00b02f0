"""Potential-temperature conversion and pressure-model fitting."""

import math

import numpy as np
import pytest

from tptkit.errors import FitError
from tptkit.height import (
    HeightAdjustModel,
    fit_pressure_model,
    from_potential,
    to_potential,
)


def test_factor_is_one_at_sea_level():
    assert HeightAdjustModel().factor(0.0) == 1.0


def test_to_potential_identity_at_z0():
    assert to_potential(2.5, 0.0) == 2.5


def test_to_potential_reference_value():
    # independent arithmetic: f = (exp(1000/8434))^0.2857
    f = math.exp(1000.0 / 8434.0) ** 0.2857
    assert abs(f - 1.0344) < 1e-3
    model = HeightAdjustModel(kappa=0.2857, scale_height_m=8434.0)
    got = to_potential(2.0, 1000.0, model)
    assert abs(got - 2.0 * f) < 1e-12
    assert abs(got - 2.0690) < 5e-4


def test_zero_maps_to_zero():
    assert to_potential(0.0, 1234.0) == 0.0


def test_round_trip_relative_error():
    rng = np.random.default_rng(0)
    model = HeightAdjustModel()
    z = rng.uniform(0.0, 2000.0, 500)
    x = rng.normal(0.0, 5.0, 500)
    back = from_potential(to_potential(x, z, model), z, model)
    np.testing.assert_allclose(back, x, rtol=1e-12)


def test_monotone_in_altitude():
    model = HeightAdjustModel()
    z = np.linspace(0.0, 3000.0, 50)
    f = model.factor(z)
    assert np.all(np.diff(f) > 0)


def test_sign_preserved():
    model = HeightAdjustModel()
    vals = np.array([-3.0, -0.1, 0.0, 0.1, 3.0])
    out = to_potential(vals, 968.0, model)
    assert np.array_equal(np.sign(out), np.sign(vals))


def test_fit_recovers_exact_scale_height():
    z = np.array([0.0, 200.0, 500.0, 968.0])
    p = 1000.0 * np.exp(-z / 8434.0)
    model = fit_pressure_model(z, p)
    assert abs(model.scale_height_m - 8434.0) / 8434.0 < 1e-3


def test_fit_degenerate_single_altitude():
    with pytest.raises(FitError):
        fit_pressure_model([0.0], [1000.0])
    with pytest.raises(FitError):
        fit_pressure_model([100.0, 100.0], [990.0, 991.0])


def test_fit_noisy_within_two_percent():
    rng = np.random.default_rng(99)
    z = rng.uniform(5.0, 1000.0, 60)
    p = 1000.0 * np.exp(-z / 8434.0) + rng.normal(0.0, 1.0, 60)
    model = fit_pressure_model(z, p)
    assert abs(model.scale_height_m - 8434.0) / 8434.0 < 0.02


def test_json_roundtrip(tmp_path):
    model = HeightAdjustModel(p0_hpa=1000.0, kappa=0.29, scale_height_m=8000.0)
    path = model.save(tmp_path / "model.json")
    assert HeightAdjustModel.load(path) == model
