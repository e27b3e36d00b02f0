"""Semivariogram estimation and model fitting.

Conventions: gamma(0) = 0; for r > 0, gamma(r) = nugget + psill * g(r/range)
with psill = sill - nugget. The exponential and gaussian ranges are
e-folding lengths (correlation exp(-r/range) resp. exp(-(r/range)^2)); the
spherical range is the exact cutoff. Covariance for r > 0 is sill -
gamma(r).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.distance import pdist, squareform

from .errors import ConfigError, FitError

KINDS = ("exponential", "spherical", "gaussian")


@dataclass(frozen=True)
class VariogramModel:
    kind: str
    nugget: float
    sill: float
    range_m: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown variogram kind {self.kind!r}")
        if self.nugget < 0 or self.sill < self.nugget or self.range_m <= 0:
            raise ConfigError(
                f"need 0 <= nugget <= sill and range > 0, got "
                f"({self.nugget}, {self.sill}, {self.range_m})"
            )

    def __call__(self, r):
        """Semivariance at separation r (metres). gamma(0) = 0 exactly."""
        r = np.asarray(r, dtype=np.float64)
        psill = self.sill - self.nugget
        h = r / self.range_m
        if self.kind == "exponential":
            g = 1.0 - np.exp(-h)
        elif self.kind == "gaussian":
            g = 1.0 - np.exp(-(h**2))
        else:
            g = np.where(h < 1.0, 1.5 * h - 0.5 * h**3, 1.0)
        out = np.where(r > 0.0, self.nugget + psill * g, 0.0)
        return float(out) if out.ndim == 0 else out

    def covariance(self, r):
        """C(r) = sill - gamma(r); C(0) = sill (nugget included at 0)."""
        r = np.asarray(r, dtype=np.float64)
        out = self.sill - self.__call__(r)
        return float(out) if out.ndim == 0 else out

    def correlation_matrix(self, coords: np.ndarray) -> np.ndarray:
        """Station covariance matrix implied by the model (dense)."""
        d = squareform(pdist(np.asarray(coords, dtype=np.float64)))
        return self.covariance(d)


@dataclass(frozen=True)
class EmpiricalVariogram:
    lags: np.ndarray          # mean pair distance per bin, metres
    semivariances: np.ndarray
    pair_counts: np.ndarray   # pairs x snapshots contributing per bin


def empirical_variogram(
    coords, values, bin_width_m: float, max_lag_m: float
) -> EmpiricalVariogram:
    """Binned semivariance of one or many snapshots at fixed locations.

    ``values`` is (n,) for a single snapshot or (n_t, n) for several; the
    squared differences are pooled across snapshots. Bins with zero pairs
    are omitted.
    """
    coords = np.asarray(coords, dtype=np.float64)
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n = coords.shape[0]
    if n < 2:
        raise ConfigError(f"need >= 2 points, got {n}")
    if values.shape[1] != n:
        raise ConfigError("values length does not match coordinates")
    if bin_width_m <= 0 or max_lag_m <= 0:
        raise ConfigError("bin_width_m and max_lag_m must be positive")

    d = pdist(coords)
    keep = d <= max_lag_m
    d = d[keep]
    if d.size == 0:
        raise ConfigError("no point pair within max_lag_m")
    # mean over snapshots of squared pair differences
    iu, ju = np.triu_indices(n, k=1)
    iu, ju = iu[keep], ju[keep]
    sq = np.mean((values[:, iu] - values[:, ju]) ** 2, axis=0)

    bins = np.minimum((d / bin_width_m).astype(np.int64), int(max_lag_m / bin_width_m))
    nbins = bins.max() + 1
    cnt = np.bincount(bins, minlength=nbins)
    dsum = np.bincount(bins, weights=d, minlength=nbins)
    ssum = np.bincount(bins, weights=sq, minlength=nbins)
    nonempty = cnt > 0
    n_t = values.shape[0]
    return EmpiricalVariogram(
        lags=dsum[nonempty] / cnt[nonempty],
        semivariances=0.5 * ssum[nonempty] / cnt[nonempty],
        pair_counts=cnt[nonempty] * n_t,
    )


def fit_variogram(
    emp: EmpiricalVariogram,
    kind: str = "exponential",
    range_bounds_m=(1.0, None),
    max_nfev: int = 2000,
) -> VariogramModel:
    """Weighted least squares over (nugget, psill, range).

    Weights are pair_count / lag^2, favouring short, well-populated lags.
    A pure-nugget result (psill ~ 0) pins the range at its lower bound.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown variogram kind {kind!r}")
    lags = np.asarray(emp.lags, dtype=np.float64)
    gammas = np.asarray(emp.semivariances, dtype=np.float64)
    counts = np.asarray(emp.pair_counts, dtype=np.float64)
    if lags.size < 3:
        raise ConfigError(f"need >= 3 nonempty bins to fit, got {lags.size}")

    lo = float(range_bounds_m[0])
    hi = float(range_bounds_m[1]) if range_bounds_m[1] is not None else 10.0 * lags.max()
    w = np.sqrt(counts / lags**2)

    gmax = max(gammas.max(), 1e-12)
    nugget0 = max(min(gammas[0], gmax), 0.0) * 0.5
    psill0 = max(gmax - nugget0, 1e-6 * gmax)
    # first lag where the structure reaches ~63% of its apparent sill
    reach = np.nonzero(gammas >= nugget0 + 0.632 * psill0)[0]
    range0 = float(np.clip(lags[reach[0]] if reach.size else lags.mean(), lo, hi))

    def resid(x):
        model = _model_unchecked(kind, x)
        return w * (model(lags) - gammas)

    result = least_squares(
        resid,
        x0=np.array([nugget0, psill0, range0]),
        bounds=(np.array([0.0, 0.0, lo]), np.array([np.inf, np.inf, hi])),
        max_nfev=max_nfev,
    )
    if not result.success:
        raise FitError(f"variogram fit did not converge: {result.message}", best=result.x)
    nugget, psill, range_m = result.x

    # Flat data admits any nugget/psill split with an unidentifiable range.
    # If the analytic pure-nugget solution explains the data essentially as
    # well as the full fit, pin the degenerate parameters deterministically.
    w2 = w**2
    nugget_star = float(np.sum(w2 * gammas) / np.sum(w2))
    sse_nugget = float(np.sum(w2 * (nugget_star - gammas) ** 2))
    sse_fit = float(np.sum(resid(result.x) ** 2))
    scale = float(np.sum(w2 * gammas**2)) + 1e-300
    if (sse_nugget - sse_fit) / scale < 1e-9:
        nugget, psill, range_m = nugget_star, 0.0, lo
    return VariogramModel(kind=kind, nugget=float(nugget), sill=float(nugget + psill),
                          range_m=float(range_m))


def _model_unchecked(kind, x):
    nugget, psill, range_m = x
    m = object.__new__(VariogramModel)
    object.__setattr__(m, "kind", kind)
    object.__setattr__(m, "nugget", float(nugget))
    object.__setattr__(m, "sill", float(nugget + psill))
    object.__setattr__(m, "range_m", float(max(range_m, 1e-12)))
    return m
