"""Synthetic station corpus with known ground truth for every stage.

Temperature is built as a calendar-keyed periodic part (yearly plus daily
sinusoids), a lapse-rate altitude offset, a spatially correlated AR(1)
fluctuation field sampled from a configured variogram, and optional i.i.d.
noise. The planted components are returned alongside the dataset so tests
can verify climatology extraction, ITS estimation, kriging retrieval, and
forecasting baselines against exact references.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .climatology import N_DAY_SLOTS, _slot_indices
from .core import DOMAIN_BBOX, Dataset, ObservationSeries, StationMeta, TimeGrid
from .errors import ConfigError
from .gridding import GridSpec
from .projection import project
from .variogram import VariogramModel


@dataclass(frozen=True)
class SynthConfig:
    n_stations: int = 366
    bbox: tuple = DOMAIN_BBOX
    start: str = "2019-01-01T00:00:00"
    step_minutes: int = 60
    count: int = 8760
    base_temp_k: float = 285.0
    yearly_amplitude_k: float = 10.0
    daily_amplitude_k: float = 3.0
    phi_range: tuple = (0.96, 0.98)     # per-step AR(1) coefficient bounds
    variogram_kind: str = "exponential"
    sill_k2: float = 4.0
    range_km: float = 50.0
    nugget_k2: float = 0.0
    lapse_rate_k_per_m: float = 0.0065
    noise_k: float = 0.0                # extra i.i.d. noise on top of the AR field
    emit_pressure: bool = True
    emit_humidity: bool = False
    pressure_noise_hpa: float = 0.5
    scale_height_m: float = 8434.0
    mesh_nx: int = 32
    mesh_dx_m: float = None  # None: smallest 100 m multiple covering the bbox
    land_radius_km: float = 15.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.phi_range
        if not (0.0 <= lo <= hi < 1.0):
            raise ConfigError(f"phi_range must satisfy 0 <= lo <= hi < 1, got {self.phi_range}")
        if self.sill_k2 < 0 or self.nugget_k2 < 0:
            raise ConfigError("sill and nugget must be nonnegative")
        if self.n_stations < 2:
            raise ConfigError("need at least 2 stations")


@dataclass
class GroundTruth:
    slot_means: np.ndarray       # (366, slots_per_day), shared periodic part
    altitude_offsets: np.ndarray  # per station, added to the periodic part
    fluct: np.ndarray            # (n_stations, count) planted fluctuation
    phi: np.ndarray
    its_hours: np.ndarray
    land: np.ndarray
    grid_spec: GridSpec
    scale_height_m: float
    pressure_hpa: dict = field(default_factory=dict)
    rh_pct: dict = field(default_factory=dict)


def _station_layout(cfg: SynthConfig, rng) -> list:
    lat_min, lat_max, lon_min, lon_max = cfg.bbox
    width = len(str(cfg.n_stations))
    lats = rng.uniform(lat_min, lat_max, cfg.n_stations)
    lons = rng.uniform(lon_min, lon_max, cfg.n_stations)
    # coastal-lowland bulk with a mountain tail, clipped to a 5-968 m span
    low = 5.0 + rng.exponential(scale=70.0, size=cfg.n_stations)
    tall = rng.uniform(300.0, 968.0, cfg.n_stations)
    alt = np.where(rng.uniform(size=cfg.n_stations) < 0.85, low, tall)
    alt = np.clip(alt, 5.0, 968.0)
    stations = []
    for i in range(cfg.n_stations):
        e, n = project(float(lats[i]), float(lons[i]))
        stations.append(
            StationMeta(
                id=f"S{i + 1:0{width}d}",
                lat=float(lats[i]),
                lon=float(lons[i]),
                easting=e,
                northing=n,
                altitude_m=float(alt[i]),
            )
        )
    return stations


def _ar1_field(cfg: SynthConfig, coords, rng):
    """Stationary AR(1) in time with spatially correlated innovations."""
    n, t = coords.shape[0], cfg.count
    phi = rng.uniform(cfg.phi_range[0], cfg.phi_range[1], size=n)
    if cfg.sill_k2 == 0.0:
        return np.zeros((n, t)), phi
    vg = VariogramModel(cfg.variogram_kind, cfg.nugget_k2, cfg.sill_k2,
                        cfg.range_km * 1000.0)
    cov = vg.correlation_matrix(coords)
    cov[np.diag_indices(n)] += 1e-10 * cfg.sill_k2
    chol = np.linalg.cholesky(cov)
    x = np.empty((n, t))
    x[:, 0] = chol @ rng.standard_normal(n)
    scale = np.sqrt(1.0 - phi**2)
    innov = rng.standard_normal((t - 1, n)) if t > 1 else np.empty((0, n))
    for k in range(1, t):
        x[:, k] = phi * x[:, k - 1] + scale * (chol @ innov[k - 1])
    return x, phi


def _mesh_dx(cfg: SynthConfig) -> float:
    if cfg.mesh_dx_m is not None:
        return cfg.mesh_dx_m
    lat_min, lat_max, lon_min, lon_max = cfg.bbox
    corners = [project(lat, lon) for lat in (lat_min, lat_max) for lon in (lon_min, lon_max)]
    es = [c[0] for c in corners]
    ns = [c[1] for c in corners]
    span = max(max(es) - min(es), max(ns) - min(ns))
    return float(np.ceil(span / (cfg.mesh_nx - 1) / 100.0) * 100.0)


def _land_grid(cfg: SynthConfig, stations) -> tuple:
    spec = GridSpec.for_bbox(cfg.bbox, nx=cfg.mesh_nx, ny=cfg.mesh_nx, dx_m=_mesh_dx(cfg))
    nodes = spec.node_coords()
    coords = np.array([[s.easting, s.northing] for s in stations])
    d2 = ((nodes[:, None, :] - coords[None, :, :]) ** 2).sum(-1)
    land = (np.sqrt(d2.min(axis=1)) <= cfg.land_radius_km * 1000.0).reshape(
        spec.ny, spec.nx
    )
    return land, spec


def generate(cfg: SynthConfig):
    """Build (Dataset, GroundTruth) deterministically from config + seed."""
    rng = np.random.default_rng(cfg.seed)
    stations = _station_layout(cfg, rng)
    start = datetime.fromisoformat(cfg.start).replace(tzinfo=timezone.utc)
    grid = TimeGrid(start=start, step_minutes=cfg.step_minutes, count=cfg.count)

    spd = grid.slots_per_day
    day_slots = np.arange(N_DAY_SLOTS)
    tod = np.arange(spd) * grid.step_minutes
    slot_means = (
        cfg.base_temp_k
        + cfg.yearly_amplitude_k * np.sin(2 * np.pi * day_slots / N_DAY_SLOTS)[:, None]
        + cfg.daily_amplitude_k * np.sin(2 * np.pi * tod / 1440.0)[None, :]
    )
    rows, cols, _ = _slot_indices(grid)
    periodic = slot_means[rows, cols]  # (count,)

    coords = np.array([[s.easting, s.northing] for s in stations])
    fluct, phi = _ar1_field(cfg, coords, rng)
    if cfg.noise_k > 0:
        fluct = fluct + cfg.noise_k * rng.standard_normal(fluct.shape)

    offsets = -cfg.lapse_rate_k_per_m * np.array([s.altitude_m for s in stations])
    temps = periodic[None, :] + offsets[:, None] + fluct

    pressure = {}
    if cfg.emit_pressure:
        for i, s in enumerate(stations):
            base = 1000.0 * np.exp(-s.altitude_m / cfg.scale_height_m)
            pressure[s.id] = base + cfg.pressure_noise_hpa * rng.standard_normal(cfg.count)

    humidity = {}
    if cfg.emit_humidity:
        # warm anomalies dry the air a little; clipped to a plausible band
        for i, s in enumerate(stations):
            rh = 70.0 - 3.0 * fluct[i] + 5.0 * rng.standard_normal(cfg.count)
            humidity[s.id] = np.clip(rh, 5.0, 100.0)

    land, spec = _land_grid(cfg, stations)
    series = {
        s.id: ObservationSeries(s.id, grid, temps[i]) for i, s in enumerate(stations)
    }
    dataset = Dataset(grid, stations, series)
    dt_hours = cfg.step_minutes / 60.0
    with np.errstate(divide="ignore"):
        its = np.where(phi > 0, -dt_hours / np.log(np.maximum(phi, 1e-300)), dt_hours / 2)
    truth = GroundTruth(
        slot_means=slot_means,
        altitude_offsets=offsets,
        fluct=fluct,
        phi=phi,
        its_hours=its,
        land=land,
        grid_spec=spec,
        scale_height_m=cfg.scale_height_m,
        pressure_hpa=pressure,
        rh_pct=humidity,
    )
    return dataset, truth


@dataclass
class CorruptionLog:
    null_slots: list
    range_slots: list
    deviation_slots: list

    @property
    def total(self) -> int:
        return len(self.null_slots) + len(self.range_slots) + len(self.deviation_slots)


def corrupt(dataset: Dataset, fraction: float, seed: int = 0, deviation_k: float = 25.0):
    """Deterministically inject nulls, range spikes, and >20 K deviations.

    Returns (corrupted dataset, CorruptionLog of (station_idx, t) slots per
    kind). End samples are left intact so interior interpolation stays the
    exercised repair path. ``deviation_k`` sets the planted deviation
    magnitude (> 20 K so the deviation rule fires).
    """
    if not 0.0 <= fraction <= 0.05:
        raise ConfigError(f"corruption fraction must be in [0, 0.05], got {fraction}")
    if deviation_k <= 20.0:
        raise ConfigError("deviation_k must exceed the 20 K threshold")
    ids = dataset.station_ids
    n, t = len(ids), dataset.grid.count
    total = int(round(fraction * n * t))
    if total == 0:
        return dataset, CorruptionLog([], [], [])
    rng = np.random.default_rng(seed)
    interior = np.arange(n * t).reshape(n, t)[:, 1 : t - 1].reshape(-1)
    chosen = rng.choice(interior, size=min(total, interior.size), replace=False)
    kinds = np.arange(chosen.size) % 3
    values = dataset.values_matrix().copy()
    log = CorruptionLog([], [], [])
    for slot, kind in zip(chosen, kinds):
        i, j = divmod(int(slot), t)
        if kind == 0:
            values[i, j] = np.nan
            log.null_slots.append((i, j))
        elif kind == 1:
            spike = 330.0 if (i + j) % 2 == 0 else 230.0  # far outside [-32.6, 41] C
            values[i, j] = spike
            log.range_slots.append((i, j))
        else:
            values[i, j] += deviation_k if (i + j) % 2 == 0 else -deviation_k
            log.deviation_slots.append((i, j))
    series = {
        sid: dataset.series[sid].with_values(values[i]) for i, sid in enumerate(ids)
    }
    return dataset.with_series(series), log
