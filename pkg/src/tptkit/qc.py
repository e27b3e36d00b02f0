"""Quality control and gap filling for station temperature series.

Rules: samples outside the historical extreme range are false; fluctuations
deviating from the climatological mean by more than the threshold are
false; false and null samples are replaced by linear interpolation between
the nearest valid neighbours, with series ends filled by averaging nearby
valid data.

Because the deviation check needs a climatology and the climatology is
computed from cleaned data, cleaning runs in two passes: range-QC and gap
fill first, a provisional climatology from that, then deviation-QC against
it and a final fill.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .climatology import clim_values, compute_climatology
from .core import (
    FLAG_EXTRAPOLATED,
    FLAG_RAW,
    FLAG_REPLACED,
    Dataset,
    ObservationSeries,
    celsius_to_kelvin,
)
from .errors import ConfigError, SeriesError


@dataclass(frozen=True)
class QcConfig:
    min_temp_c: float = -32.6
    max_temp_c: float = 41.0
    max_deviation_k: float = 20.0
    end_fill_window: int = 60  # samples averaged when extrapolating series ends
    climatology_window_days: int = 21

    def __post_init__(self):
        if self.min_temp_c >= self.max_temp_c:
            raise ConfigError("min_temp_c must be below max_temp_c")
        if self.max_deviation_k <= 0:
            raise ConfigError("max_deviation_k must be positive")
        if self.end_fill_window < 1:
            raise ConfigError("end_fill_window must be >= 1")


def range_flags(values_k: np.ndarray, cfg: QcConfig) -> np.ndarray:
    """True where a sample violates the absolute temperature bounds."""
    lo = celsius_to_kelvin(cfg.min_temp_c)
    hi = celsius_to_kelvin(cfg.max_temp_c)
    with np.errstate(invalid="ignore"):
        return np.isfinite(values_k) & ((values_k < lo) | (values_k > hi))


def deviation_flags(values_k: np.ndarray, clim_k: np.ndarray, cfg: QcConfig) -> np.ndarray:
    """True where |T - <T>| strictly exceeds the deviation threshold."""
    if values_k.shape != clim_k.shape:
        raise ConfigError("values and climatology lengths differ")
    with np.errstate(invalid="ignore"):
        return np.isfinite(values_k) & (np.abs(values_k - clim_k) > cfg.max_deviation_k)


def fill_gaps(values_k: np.ndarray, end_fill_window: int = 60):
    """Replace NaN runs; returns (filled values, provenance flags).

    Interior gaps are linearly interpolated between the nearest valid
    neighbours. Leading/trailing gaps take the mean of the nearest
    ``end_fill_window`` valid samples.
    """
    values_k = np.asarray(values_k, dtype=np.float64)
    n = values_k.size
    valid = np.isfinite(values_k)
    valid_idx = np.flatnonzero(valid)
    if valid_idx.size == 0:
        raise SeriesError("no valid sample in series; cannot fill")
    flags = np.where(valid, FLAG_RAW, FLAG_REPLACED).astype(np.uint8)
    filled = values_k.copy()
    gaps = np.flatnonzero(~valid)
    if gaps.size:
        filled[gaps] = np.interp(gaps, valid_idx, values_k[valid_idx])
    first, last = valid_idx[0], valid_idx[-1]
    if first > 0:
        filled[:first] = values_k[valid_idx[:end_fill_window]].mean()
        flags[:first] = FLAG_EXTRAPOLATED
    if last < n - 1:
        filled[last + 1 :] = values_k[valid_idx[-end_fill_window:]].mean()
        flags[last + 1 :] = FLAG_EXTRAPOLATED
    return filled, flags


@dataclass
class StationQc:
    station_id: str
    range_flagged: int = 0
    deviation_flagged: int = 0
    null_filled: int = 0
    duplicates: int = 0
    replaced_fraction: float = 0.0


@dataclass
class QcReport:
    stations: dict = field(default_factory=dict)  # station_id -> StationQc

    @property
    def replaced_fraction(self) -> float:
        total = sum(s.replaced_fraction for s in self.stations.values())
        return total / len(self.stations) if self.stations else 0.0

    def totals(self) -> dict:
        keys = ("range_flagged", "deviation_flagged", "null_filled", "duplicates")
        return {k: sum(getattr(s, k) for s in self.stations.values()) for k in keys}

    def to_json(self) -> str:
        payload = {
            "stations": {
                sid: {
                    "range_flagged": s.range_flagged,
                    "deviation_flagged": s.deviation_flagged,
                    "null_filled": s.null_filled,
                    "duplicates": s.duplicates,
                    "replaced_fraction": s.replaced_fraction,
                }
                for sid, s in sorted(self.stations.items())
            },
            "totals": self.totals(),
            "replaced_fraction": self.replaced_fraction,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(self.to_json() + "\n")
        tmp.replace(path)
        return path


def run_qc(dataset: Dataset, cfg: QcConfig = QcConfig(), duplicates: dict = None):
    """Two-pass QC over every station; returns (clean dataset, report).

    Pass 1: range-QC, gap fill, provisional climatology. Pass 2:
    deviation-QC against the provisional climatology on the original valid
    samples, final gap fill. Stations are processed independently and the
    report is assembled in station-id order.
    """
    clean_series = {}
    report = QcReport()
    for sid in dataset.station_ids:
        series = dataset.series[sid]
        raw = series.values
        nulls = int(np.count_nonzero(~np.isfinite(raw)))

        r_flags = range_flags(raw, cfg)
        pass1 = raw.copy()
        pass1[r_flags] = np.nan
        filled1, _ = fill_gaps(pass1, cfg.end_fill_window)
        provisional = compute_climatology(
            series.with_values(filled1), cfg.climatology_window_days
        )
        clim = clim_values(provisional, series.grid)

        d_flags = deviation_flags(pass1, clim, cfg)
        pass2 = pass1
        pass2[d_flags] = np.nan
        filled2, flags = fill_gaps(pass2, cfg.end_fill_window)

        clean_series[sid] = series.with_values(filled2, flags)
        replaced = int(np.count_nonzero(flags != FLAG_RAW))
        report.stations[sid] = StationQc(
            station_id=sid,
            range_flagged=int(np.count_nonzero(r_flags)),
            deviation_flagged=int(np.count_nonzero(d_flags)),
            null_filled=nulls,
            duplicates=int(duplicates.get(sid, 0)) if duplicates else 0,
            replaced_fraction=replaced / series.grid.count,
        )
    return dataset.with_series(clean_series), report
