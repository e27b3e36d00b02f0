"""Shared data model: time grids, stations, observation series, datasets.

All temperatures are Kelvin internally; file I/O converts to/from Celsius
at the boundary (see :mod:`tptkit.ingest`). Timestamps are UTC throughout.
All container types are immutable after construction and safe to share
across parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import ConfigError, RangeError

CELSIUS_OFFSET = 273.15

# Default domain bounding box (South Korean peninsula); synthetic domains
# may override it wherever a bbox parameter is accepted.
DOMAIN_BBOX = (33.041, 38.710, 124.839, 131.945)  # lat_min, lat_max, lon_min, lon_max

MINUTES_PER_DAY = 1440

# Split labels. Assignment arrays hold these as uint8.
TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")

# Sample provenance flags carried by ObservationSeries.flags.
FLAG_RAW, FLAG_REPLACED, FLAG_EXTRAPOLATED = 0, 1, 2


def celsius_to_kelvin(values):
    return np.asarray(values, dtype=np.float64) + CELSIUS_OFFSET


def kelvin_to_celsius(values):
    return np.asarray(values, dtype=np.float64) - CELSIUS_OFFSET


def _as_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform UTC time grid: ``start + i * step`` for ``i in range(count)``.

    The step must divide a day evenly so that every sample has a stable
    time-of-day slot; this is what makes calendar-keyed climatology
    well defined.
    """

    start: datetime
    step_minutes: int
    count: int

    def __post_init__(self):
        object.__setattr__(self, "start", _as_utc(self.start))
        if self.step_minutes < 1:
            raise ConfigError(f"step_minutes must be >= 1, got {self.step_minutes}")
        if MINUTES_PER_DAY % self.step_minutes != 0:
            raise ConfigError(
                f"step_minutes must divide {MINUTES_PER_DAY} evenly, got {self.step_minutes}"
            )
        if self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")
        if self.start.second or self.start.microsecond:
            raise ConfigError("grid start must be aligned to a whole minute")

    @property
    def slots_per_day(self) -> int:
        return MINUTES_PER_DAY // self.step_minutes

    @property
    def step(self) -> timedelta:
        return timedelta(minutes=self.step_minutes)

    def time_at(self, index: int) -> datetime:
        if not 0 <= index < self.count:
            raise RangeError(f"index {index} outside [0, {self.count})")
        return self.start + timedelta(minutes=self.step_minutes * int(index))

    def index_of(self, ts: datetime) -> int:
        """Exact grid index of a timestamp; RangeError if off-grid or outside."""
        delta = _as_utc(ts) - self.start
        total_min = delta // timedelta(minutes=1)
        if delta != timedelta(minutes=total_min):
            raise RangeError(f"timestamp {ts} not aligned to whole minutes")
        if total_min % self.step_minutes != 0:
            raise RangeError(f"timestamp {ts} not on the {self.step_minutes}-minute grid")
        idx = total_min // self.step_minutes
        if not 0 <= idx < self.count:
            raise RangeError(f"timestamp {ts} outside the grid span")
        return int(idx)

    def times(self):
        """All grid timestamps, in order."""
        return [self.start + timedelta(minutes=self.step_minutes * i) for i in range(self.count)]


def to_calendar(grid: TimeGrid, index: int):
    """Calendar tuple ``(year, day_of_year, hour, minute)`` of a grid index.

    Day-of-year is the true 1-based ordinal day within that year, so
    Feb 29 only ever appears in leap years.
    """
    ts = grid.time_at(index)
    return ts.year, ts.timetuple().tm_yday, ts.hour, ts.minute


def from_calendar(grid: TimeGrid, year: int, day_of_year: int, hour: int, minute: int) -> int:
    """Inverse of :func:`to_calendar`; RangeError if not on the grid."""
    ts = datetime(year, 1, 1, tzinfo=timezone.utc) + timedelta(
        days=day_of_year - 1, hours=hour, minutes=minute
    )
    if ts.year != year:
        raise RangeError(f"day_of_year {day_of_year} not valid in {year}")
    return grid.index_of(ts)


def calendar_fields(grid: TimeGrid):
    """Vectorized calendar decomposition of every grid index.

    Returns int arrays (year, month, day, minute_of_day), each of length
    ``grid.count``.
    """
    start = np.datetime64(grid.start.replace(tzinfo=None), "m")
    times = start + np.arange(grid.count, dtype=np.int64) * np.timedelta64(
        grid.step_minutes, "m"
    )
    days = times.astype("datetime64[D]")
    months = times.astype("datetime64[M]")
    years = times.astype("datetime64[Y]")
    year = years.astype(np.int64) + 1970
    month = (months - years.astype("datetime64[M]")).astype(np.int64) + 1
    day = (days - months.astype("datetime64[D]")).astype(np.int64) + 1
    minute_of_day = (times - days.astype("datetime64[m]")).astype(np.int64)
    return year, month, day, minute_of_day


@dataclass(frozen=True)
class StationMeta:
    """Station identity, projected location, and altitude."""

    id: str
    lat: float
    lon: float
    easting: float
    northing: float
    altitude_m: float

    def __post_init__(self):
        if self.altitude_m < 0:
            raise ConfigError(f"station {self.id}: altitude {self.altitude_m} < 0")

    def in_bbox(self, bbox=DOMAIN_BBOX) -> bool:
        lat_min, lat_max, lon_min, lon_max = bbox
        return lat_min <= self.lat <= lat_max and lon_min <= self.lon <= lon_max


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ObservationSeries:
    """One station's fixed-step series, aligned to a TimeGrid.

    ``values`` may hold NaN before gap filling; after QC every sample is
    finite. ``flags`` records sample provenance (raw / replaced /
    extrapolated).
    """

    station_id: str
    grid: TimeGrid
    values: np.ndarray
    flags: np.ndarray = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.count,):
            raise ConfigError(
                f"series {self.station_id}: {values.shape} != ({self.grid.count},)"
            )
        object.__setattr__(self, "values", _freeze(values))
        flags = self.flags
        if flags is None:
            flags = np.zeros(self.grid.count, dtype=np.uint8)
        else:
            flags = np.asarray(flags, dtype=np.uint8)
            if flags.shape != (self.grid.count,):
                raise ConfigError(f"series {self.station_id}: flags shape mismatch")
        object.__setattr__(self, "flags", _freeze(flags))

    def with_values(self, values, flags=None) -> "ObservationSeries":
        return ObservationSeries(
            self.station_id, self.grid, values, self.flags if flags is None else flags
        )


@dataclass(frozen=True)
class Dataset:
    """Stations plus their aligned series (temperatures or derived anomalies)."""

    grid: TimeGrid
    stations: tuple
    series: dict  # station_id -> ObservationSeries, insertion order = station order
    split_assignment: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate station ids")
        if set(self.series) != set(ids):
            raise ConfigError("series keys do not match station ids")
        if self.split_assignment is not None:
            sa = np.asarray(self.split_assignment, dtype=np.uint8)
            if sa.shape != (self.grid.count,):
                raise ConfigError("split_assignment length != grid.count")
            object.__setattr__(self, "split_assignment", _freeze(sa))

    @property
    def station_ids(self):
        return [s.id for s in self.stations]

    def values_matrix(self) -> np.ndarray:
        """(n_stations, count) matrix in station order."""
        return np.vstack([self.series[s.id].values for s in self.stations])

    def station_index(self, station_id: str) -> int:
        for i, s in enumerate(self.stations):
            if s.id == station_id:
                return i
        raise RangeError(f"unknown station {station_id}")

    def with_series(self, series: dict, split_assignment=None) -> "Dataset":
        return Dataset(
            self.grid,
            self.stations,
            series,
            self.split_assignment if split_assignment is None else split_assignment,
        )

    def split_indices(self, label: int) -> np.ndarray:
        if self.split_assignment is None:
            raise ConfigError("dataset has no split assignment; run split_dataset first")
        return np.nonzero(self.split_assignment == label)[0]


def split_dataset(dataset: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> Dataset:
    """Assign each input-time sample to train/val/test by seeded permutation.

    Counts per label land within one sample of ``fraction * count``; the
    same seed reproduces the identical assignment bit for bit.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise ConfigError("fractions must have exactly three entries")
    if any(f < 0 for f in fractions):
        raise ConfigError(f"negative fraction in {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)}")

    n = dataset.grid.count
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.round(np.cumsum(fractions) * n).astype(np.int64)
    assignment = np.empty(n, dtype=np.uint8)
    assignment[perm[: bounds[0]]] = TRAIN
    assignment[perm[bounds[0] : bounds[1]]] = VAL
    assignment[perm[bounds[1] :]] = TEST
    return Dataset(dataset.grid, dataset.stations, dataset.series, assignment)
