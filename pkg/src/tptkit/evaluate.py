"""Forecast verification: station/mesh RMSE, slices, and external comparison.

Station errors are measured in temperature space after recomposition
(climatology plus predicted fluctuation against the measured temperature);
mesh errors stay in fluctuation space. The mesh metric nests the time-RMSE
inside the spatial mean: per-node RMSE over time first, then the average
over inland nodes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .core import Dataset, celsius_to_kelvin
from .errors import ConfigError, IngestError, RangeError, ShapeError


def rmse_station(pred_fluct, truth_temp, clim) -> float:
    """sqrt(mean_t((<T> + pred' - T)^2)) for one station."""
    pred_fluct = np.asarray(pred_fluct, dtype=np.float64)
    truth_temp = np.asarray(truth_temp, dtype=np.float64)
    clim = np.asarray(clim, dtype=np.float64)
    if not pred_fluct.shape == truth_temp.shape == clim.shape:
        raise ShapeError(
            f"rmse_station shapes differ: {pred_fluct.shape}, {truth_temp.shape}, {clim.shape}"
        )
    if pred_fluct.size == 0:
        raise ConfigError("rmse_station needs at least one sample")
    resid = clim + pred_fluct - truth_temp
    return float(np.sqrt(np.mean(resid**2)))


def rmse_station_set(pred_fluct, truth_temp, clim) -> np.ndarray:
    """Per-station RMSE for (N_t, N_s) arrays."""
    pred_fluct = np.asarray(pred_fluct, dtype=np.float64)
    if pred_fluct.ndim != 2:
        raise ShapeError("expected (N_t, N_s) arrays")
    resid = np.asarray(clim) + pred_fluct - np.asarray(truth_temp)
    return np.sqrt(np.mean(resid**2, axis=0))


def rmse_aggregate(per_station) -> float:
    """Plain mean of the per-station errors."""
    per_station = np.asarray(per_station, dtype=np.float64)
    if per_station.size == 0:
        raise ConfigError("no per-station errors to aggregate")
    return float(per_station.mean())


def rmse_mesh(pred_fields, truth_fields, inland) -> float:
    """Spatial mean over inland nodes of each node's time-RMSE."""
    pred = np.asarray(pred_fields, dtype=np.float64)
    truth = np.asarray(truth_fields, dtype=np.float64)
    inland = np.asarray(inland, dtype=bool)
    if pred.shape != truth.shape:
        raise ShapeError(f"mesh shapes differ: {pred.shape} vs {truth.shape}")
    if pred.ndim != 3 or pred.shape[1:] != inland.shape:
        raise ConfigError("fields must be (N_t, ny, nx) matching the mask")
    if not inland.any():
        raise ConfigError("empty inland mask")
    node_rmse = np.sqrt(np.mean((pred - truth) ** 2, axis=0))
    return float(node_rmse[inland].mean())


def per_instance_rmse(pred, truth, mask=None) -> np.ndarray:
    """RMSE of each snapshot over its (optionally masked) support."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"shapes differ: {pred.shape} vs {truth.shape}")
    sq = (pred - truth) ** 2
    flat = sq.reshape(sq.shape[0], -1)
    if mask is not None:
        m = np.asarray(mask, dtype=bool).reshape(-1)
        flat = flat[:, m]
    return np.sqrt(flat.mean(axis=1))


@dataclass(frozen=True)
class BestWorst:
    best_timestamp: object
    worst_timestamp: object
    best_index: int
    worst_index: int
    per_instance: np.ndarray


def best_worst(timestamps, pred, truth, mask=None) -> BestWorst:
    """Instances with the smallest/largest masked RMSE; ties pick the earliest."""
    errors = per_instance_rmse(pred, truth, mask)
    if errors.size == 0:
        raise ConfigError("no instances")
    bi = int(np.argmin(errors))
    wi = int(np.argmax(errors))
    return BestWorst(
        best_timestamp=timestamps[bi],
        worst_timestamp=timestamps[wi],
        best_index=bi,
        worst_index=wi,
        per_instance=errors,
    )


def slice_monthly(months, pred_fluct, truth_temp, clim):
    """Aggregate RMSE per calendar month; empty months are NaN.

    ``months`` holds 1..12 per evaluated timestamp; arrays are (N_t, N_s).
    Returns (rmse[12], sample_count[12]).
    """
    months = np.asarray(months, dtype=np.int64)
    pred_fluct = np.asarray(pred_fluct, dtype=np.float64)
    out = np.full(12, np.nan)
    counts = np.zeros(12, dtype=np.int64)
    for m in range(1, 13):
        rows = months == m
        counts[m - 1] = int(np.count_nonzero(rows))
        if counts[m - 1] == 0:
            continue
        per_station = rmse_station_set(
            pred_fluct[rows], np.asarray(truth_temp)[rows], np.asarray(clim)[rows]
        )
        out[m - 1] = rmse_aggregate(per_station)
    return out, counts


def station_density(stations, radius_km: float = 30.0) -> np.ndarray:
    """Number of other stations within the planar radius of each station."""
    coords = np.array([[s.easting, s.northing] for s in stations])
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    within = dist <= radius_km * 1000.0
    np.fill_diagonal(within, False)
    return within.sum(axis=1).astype(np.int64)


def scatter_extract(stations, rmse_i, its_hours, radius_km: float = 30.0):
    """Rows (station_id, rmse_i, its_hours, altitude_m, density_30km)."""
    rmse_i = np.asarray(rmse_i, dtype=np.float64)
    its_hours = np.asarray(its_hours, dtype=np.float64)
    if not len(stations) == rmse_i.size == its_hours.size:
        raise ShapeError("stations, rmse, and ITS lengths differ")
    density = station_density(stations, radius_km)
    return [
        {
            "station_id": s.id,
            "rmse_k": float(rmse_i[i]),
            "its_hours": float(its_hours[i]),
            "altitude_m": float(s.altitude_m),
            "density_30km": int(density[i]),
        }
        for i, s in enumerate(stations)
    ]


@dataclass
class ExternalComparison:
    lead_hours: int
    station_ids: list
    per_station: np.ndarray     # RMSE_i over matched pairs (NaN if none matched)
    aggregate: float            # mean over stations with at least one match
    coverage: float             # matched pairs / (n_s * n_t)
    matched_pairs: int


def compare_external(forecast_csv, truth: Dataset, lead_hours: int) -> ExternalComparison:
    """Score an external forecast file with the same station metric.

    Rows are ``timestamp_utc,station_id,lead_h,temp_c`` where the timestamp
    is the *valid* time being predicted. Pairs absent from the file or off
    the truth grid are excluded and reported through the coverage fraction.
    """
    path = Path(forecast_csv)
    ids = truth.station_ids
    pos = {sid: i for i, sid in enumerate(ids)}
    grid = truth.grid
    n_s, n_t = len(ids), grid.count
    sq_sum = np.zeros(n_s)
    n_matched = np.zeros(n_s, dtype=np.int64)
    truth_matrix = truth.values_matrix()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"timestamp_utc", "station_id", "lead_h", "temp_c"}
        if reader.fieldnames is None or not need.issubset(set(reader.fieldnames)):
            raise IngestError(f"{path}: expected columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                if int(row["lead_h"]) != lead_hours:
                    continue
                sid = row["station_id"].strip()
                if sid not in pos:
                    continue
                ts = datetime.strptime(row["timestamp_utc"].replace("Z", "+0000"),
                                       "%Y-%m-%dT%H:%M:%S%z").astimezone(timezone.utc)
                try:
                    t = grid.index_of(ts)
                except RangeError:
                    continue
                pred_k = celsius_to_kelvin(float(row["temp_c"]))
                i = pos[sid]
                truth_k = truth_matrix[i, t]
                if not np.isfinite(truth_k):
                    continue
                sq_sum[i] += (pred_k - truth_k) ** 2
                n_matched[i] += 1
            except (KeyError, ValueError) as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
    with np.errstate(invalid="ignore", divide="ignore"):
        per_station = np.sqrt(sq_sum / n_matched)
    covered = n_matched > 0
    if not covered.any():
        raise ConfigError(f"{path}: no (station, timestamp) pair matched the truth grid")
    return ExternalComparison(
        lead_hours=lead_hours,
        station_ids=ids,
        per_station=per_station,
        aggregate=float(per_station[covered].mean()),
        coverage=float(n_matched.sum() / (n_s * n_t)),
        matched_pairs=int(n_matched.sum()),
    )


@dataclass
class EvalReport:
    """Everything the report files need, in plot-ready form."""

    lead_hours: int
    n_t: int
    n_s: int
    station_ids: list
    per_station: np.ndarray
    aggregate: float
    mesh_rmse: float = None
    monthly: np.ndarray = None
    monthly_counts: np.ndarray = None
    scatter: list = field(default_factory=list)
    best_worst: BestWorst = None

    def __post_init__(self):
        expected = rmse_aggregate(self.per_station)
        if abs(expected - self.aggregate) > 1e-12 * max(1.0, abs(expected)):
            raise ConfigError("aggregate RMSE must equal the mean of per-station RMSE")

    def summary_dict(self) -> dict:
        d = {
            "lead_hours": self.lead_hours,
            "n_t": self.n_t,
            "n_s": self.n_s,
            "rmse_k": self.aggregate,
        }
        if self.mesh_rmse is not None:
            d["mesh_rmse_k"] = self.mesh_rmse
        if self.best_worst is not None:
            d["best_timestamp"] = str(self.best_worst.best_timestamp)
            d["worst_timestamp"] = str(self.best_worst.worst_timestamp)
        return d


def write_report(report: EvalReport, out_dir) -> Path:
    """Write summary.json, rmse_station.csv, monthly.csv, scatter.csv,
    best_worst.json under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    (out / "summary.json").write_text(
        json.dumps(report.summary_dict(), indent=2, sort_keys=True) + "\n"
    )
    with open(out / "rmse_station.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "rmse_k"])
        for sid, r in zip(report.station_ids, report.per_station):
            w.writerow([sid, repr(float(r))])
    if report.monthly is not None:
        with open(out / "monthly.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["month", "rmse_k", "n_samples"])
            for m in range(12):
                val = report.monthly[m]
                w.writerow([m + 1, "" if np.isnan(val) else repr(float(val)),
                            int(report.monthly_counts[m])])
    if report.scatter:
        with open(out / "scatter.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["station_id", "rmse_k", "its_hours", "altitude_m", "density_30km"])
            for row in report.scatter:
                w.writerow([row["station_id"], repr(row["rmse_k"]), repr(row["its_hours"]),
                            repr(row["altitude_m"]), row["density_30km"]])
    if report.best_worst is not None:
        payload = {
            "best_timestamp": str(report.best_worst.best_timestamp),
            "worst_timestamp": str(report.best_worst.worst_timestamp),
            "best_rmse_k": float(report.best_worst.per_instance[report.best_worst.best_index]),
            "worst_rmse_k": float(report.best_worst.per_instance[report.best_worst.worst_index]),
        }
        (out / "best_worst.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return out
