"""Altitude compensation: turbulent temperature to turbulent potential temperature.

The conversion factor f(z) = (p0 / P(z))^kappa uses a barometric pressure
profile P(z) = p0 * exp(-z / H). H defaults to 8434 m and can be fitted
from station mean pressures; kappa defaults to dry-air R/Cp.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FitError

DEFAULT_KAPPA = 0.2857  # dry air R/Cp
DEFAULT_SCALE_HEIGHT_M = 8434.0


@dataclass(frozen=True)
class HeightAdjustModel:
    p0_hpa: float = 1000.0
    kappa: float = DEFAULT_KAPPA
    scale_height_m: float = DEFAULT_SCALE_HEIGHT_M

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise ConfigError(f"kappa must be in (0, 1), got {self.kappa}")
        if self.scale_height_m <= 0:
            raise ConfigError("scale height must be positive")
        if self.p0_hpa <= 0:
            raise ConfigError("reference pressure must be positive")

    def factor(self, z):
        """f(z) = (p0 / P(z))^kappa = exp(kappa * z / H); f(0) = 1."""
        z = np.asarray(z, dtype=np.float64)
        f = np.exp(self.kappa * z / self.scale_height_m)
        return float(f) if f.ndim == 0 else f

    def to_json(self) -> str:
        return json.dumps(
            {"p0_hpa": self.p0_hpa, "kappa": self.kappa, "scale_height_m": self.scale_height_m},
            sort_keys=True,
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(self.to_json() + "\n")
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path) -> "HeightAdjustModel":
        d = json.loads(Path(path).read_text())
        return cls(p0_hpa=d["p0_hpa"], kappa=d["kappa"], scale_height_m=d["scale_height_m"])


def fit_pressure_model(
    altitudes_m, mean_pressures_hpa, p0_hpa: float = 1000.0, kappa: float = DEFAULT_KAPPA
) -> HeightAdjustModel:
    """Fit the barometric scale height from station mean pressures.

    Least-squares through the origin on ln(P/p0) = -z/H. Needs at least
    two distinct altitudes, else the slope is unconstrained.
    """
    z = np.asarray(altitudes_m, dtype=np.float64)
    p = np.asarray(mean_pressures_hpa, dtype=np.float64)
    ok = np.isfinite(z) & np.isfinite(p) & (p > 0)
    z, p = z[ok], p[ok]
    if z.size < 2 or np.unique(z).size < 2:
        raise FitError("need pressure data at >= 2 distinct altitudes")
    y = np.log(p / p0_hpa)
    slope = float(np.dot(z, y) / np.dot(z, z))
    if slope >= 0:
        raise FitError(f"pressure does not decrease with altitude (slope {slope:.3g})", best=slope)
    return HeightAdjustModel(p0_hpa=p0_hpa, kappa=kappa, scale_height_m=-1.0 / slope)


def to_potential(tprime, z, model: HeightAdjustModel = HeightAdjustModel()):
    """theta' = T' * f(z). Scalars or arrays; z broadcasts against tprime."""
    return np.asarray(tprime, dtype=np.float64) * model.factor(z)


def from_potential(theta_prime, z, model: HeightAdjustModel = HeightAdjustModel()):
    return np.asarray(theta_prime, dtype=np.float64) / model.factor(z)
