"""Temporal/spatial correlation statistics and standardization.

The temporal autocorrelation rho(s) = mean_t[x(t) x(t+s)] / mean_t[x(t)^2]
uses the full-record denominator; the integral time scale (ITS) is the
trapezoidal integral of rho up to its first zero crossing (or the max lag
when it never crosses). Mesh spatial correlations follow the
spatial-mean-removed, per-snapshot-normalized definition, averaged over
snapshots, reported only where at least 100 node pairs contribute.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateStatisticsError
from .gridding import MaskSet

MIN_PAIRS = 100

LONGITUDINAL = "longitudinal"  # offsets along easting (x)
LATITUDINAL = "latitudinal"    # offsets along northing (y)


@dataclass(frozen=True)
class AutocorrResult:
    station_id: str
    lags_hours: np.ndarray
    rho: np.ndarray
    its_hours: float


@dataclass(frozen=True)
class SpatialCorrResult:
    direction: str
    region: str              # "entire" or "inland"
    r_m: np.ndarray
    corr: np.ndarray
    pair_counts: np.ndarray


def autocorrelation(values: np.ndarray, max_lag: int) -> np.ndarray:
    """rho(s) for s = 0..max_lag; rho(0) = 1 exactly.

    Numerator means run over the overlapping samples at each lag; the
    denominator is the full-record second moment.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if max_lag < 0 or max_lag >= n:
        raise ConfigError(f"max_lag {max_lag} outside [0, {n})")
    denom = float(np.mean(x * x))
    if denom <= 0.0 or not np.isfinite(denom):
        raise DegenerateStatisticsError("zero-variance series has no autocorrelation")
    # full linear autocorrelation via FFT, then per-lag overlap normalization
    nfft = 1
    while nfft < 2 * n:
        nfft *= 2
    spec = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1]
    counts = n - np.arange(max_lag + 1)
    rho = (acov / counts) / denom
    rho[0] = 1.0
    return rho


def integral_time_scale(rho: np.ndarray, dt_hours: float) -> float:
    """Trapezoidal integral of rho, truncated at the first zero crossing."""
    rho = np.asarray(rho, dtype=np.float64)
    if rho.size == 0:
        raise ConfigError("empty autocorrelation")
    if abs(rho[0] - 1.0) > 1e-9:
        raise ConfigError(f"rho(0) must be 1, got {rho[0]}")
    negative = np.nonzero(rho < 0.0)[0]
    end = int(negative[0]) if negative.size else rho.size
    if end < 2:
        # rho drops below zero within the first step; half trapezoid to zero
        return float(0.5 * dt_hours)
    return float(np.trapezoid(rho[:end], dx=dt_hours))


def station_autocorrelation(
    station_id: str, values: np.ndarray, dt_hours: float, max_lag: int
) -> AutocorrResult:
    rho = autocorrelation(values, max_lag)
    return AutocorrResult(
        station_id=station_id,
        lags_hours=np.arange(max_lag + 1) * dt_hours,
        rho=rho,
        its_hours=integral_time_scale(rho, dt_hours),
    )


def spatial_correlation(
    fields, direction: str, masks: MaskSet, region: str = "entire", max_sep: int = None
) -> SpatialCorrResult:
    """Directional correlation R(r) of mesh snapshots over a mask region."""
    if direction not in (LONGITUDINAL, LATITUDINAL):
        raise ConfigError(f"direction must be longitudinal or latitudinal, got {direction!r}")
    if region == "entire":
        mask = masks.enlarged
    elif region == "inland":
        mask = masks.inland
    else:
        raise ConfigError(f"region must be 'entire' or 'inland', got {region!r}")
    if not np.any(mask):
        raise ConfigError("empty region mask")
    if not fields:
        raise ConfigError("no fields")

    grid = fields[0].grid
    ny, nx = mask.shape
    if max_sep is None:
        max_sep = (nx if direction == LONGITUDINAL else ny) - 1

    # pair masks per separation are time-invariant
    pair_masks = []
    counts = np.empty(max_sep + 1, dtype=np.int64)
    for k in range(max_sep + 1):
        if direction == LONGITUDINAL:
            pm = mask[:, : nx - k] & mask[:, k:] if k else mask
        else:
            pm = mask[: ny - k, :] & mask[k:, :] if k else mask
        pair_masks.append(pm)
        counts[k] = int(np.count_nonzero(pm))

    acc = np.zeros(max_sep + 1)
    used = 0
    for field in fields:
        v = field.values
        region_vals = v[mask]
        mean = region_vals.mean()
        var = region_vals.var()
        if var <= 0.0:
            warnings.warn(f"snapshot {field.timestamp} has zero spatial variance; skipped")
            continue
        dev = v - mean
        for k in range(max_sep + 1):
            pm = pair_masks[k]
            if counts[k] == 0:
                continue
            if direction == LONGITUDINAL:
                prod = dev[:, : nx - k] * dev[:, k:] if k else dev * dev
            else:
                prod = dev[: ny - k, :] * dev[k:, :] if k else dev * dev
            acc[k] += prod[pm].mean() / var
        used += 1
    if used == 0:
        raise DegenerateStatisticsError("every snapshot had zero spatial variance")

    corr = acc / used
    total_counts = counts * used
    keep = total_counts >= MIN_PAIRS
    seps = np.arange(max_sep + 1) * grid.dx_m
    return SpatialCorrResult(
        direction=direction,
        region=region,
        r_m=seps[keep],
        corr=corr[keep],
        pair_counts=total_counts[keep],
    )


@dataclass(frozen=True)
class StandardizeParams:
    mean: float
    std: float

    def __post_init__(self):
        if not np.isfinite(self.mean) or not np.isfinite(self.std) or self.std <= 0:
            raise DegenerateStatisticsError(f"bad standardization params ({self.mean}, {self.std})")


def standardize(values, params: StandardizeParams = None):
    """(values - mean) / std with population statistics; returns (out, params)."""
    values = np.asarray(values, dtype=np.float64)
    if params is None:
        std = float(values.std())  # population
        if std == 0.0:
            raise DegenerateStatisticsError("zero standard deviation; cannot standardize")
        params = StandardizeParams(mean=float(values.mean()), std=std)
    return (values - params.mean) / params.std, params


def destandardize(values, params: StandardizeParams):
    return np.asarray(values, dtype=np.float64) * params.std + params.mean
