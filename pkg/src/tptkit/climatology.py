"""Periodic-mean extraction and temperature decomposition.

The climatological mean is keyed by calendar slot (month-day x time of
day), averaged over all available years with an extra boxcar over
neighbouring days (21 by default) for smoothness. Slots are keyed by
(month, day) rather than raw day-of-year so that Feb 29 owns a slot that
is averaged over leap years only; 366 day-slots are always exposed.
Normalization always uses the actual number of contributing samples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, ObservationSeries, TimeGrid, calendar_fields, _freeze
from .errors import ConfigError, StationLookupError

N_DAY_SLOTS = 366

# cumulative days before each month in a leap year
_CUM_LEAP = np.array([0, 31, 60, 91, 121, 152, 182, 213, 244, 274, 305, 335], dtype=np.int64)
_DAYS_IN_MONTH_LEAP = (31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)


def day_slot(month: int, day: int) -> int:
    """1-based calendar day slot; Feb 29 -> 60, Mar 1 -> 61 in every year."""
    if not 1 <= month <= 12 or not 1 <= day <= _DAYS_IN_MONTH_LEAP[month - 1]:
        raise ConfigError(f"invalid month/day ({month}, {day})")
    return int(_CUM_LEAP[month - 1] + day)


def slot_to_mmdd(slot: int) -> str:
    if not 1 <= slot <= N_DAY_SLOTS:
        raise ConfigError(f"day slot {slot} outside [1, {N_DAY_SLOTS}]")
    month = int(np.searchsorted(_CUM_LEAP, slot, side="left"))
    day = slot - int(_CUM_LEAP[month - 1])
    return f"{month:02d}{day:02d}"


@dataclass(frozen=True)
class ClimatologyTable:
    """Per-station periodic mean, indexed by (day slot, time-of-day slot)."""

    station_id: str
    step_minutes: int
    means: np.ndarray   # (366, slots_per_day) Kelvin
    counts: np.ndarray  # contributing samples per slot
    years_used: tuple
    window_days: int

    def __post_init__(self):
        spd = 1440 // self.step_minutes
        if self.means.shape != (N_DAY_SLOTS, spd) or self.counts.shape != (N_DAY_SLOTS, spd):
            raise ConfigError(f"climatology table shape mismatch for {self.station_id}")
        if not np.all(np.isfinite(self.means)):
            raise ConfigError(f"non-finite climatology slot for {self.station_id}")
        object.__setattr__(self, "means", _freeze(np.asarray(self.means, dtype=np.float64)))
        object.__setattr__(self, "counts", _freeze(np.asarray(self.counts, dtype=np.int64)))
        object.__setattr__(self, "years_used", tuple(self.years_used))


def _slot_indices(grid: TimeGrid):
    """(day_slot_row, tod_col) arrays for every grid index."""
    year, month, day, minute_of_day = calendar_fields(grid)
    if np.any(minute_of_day % grid.step_minutes != 0):
        raise ConfigError("grid start is not aligned to its own time-of-day slots")
    rows = _CUM_LEAP[month - 1] + day - 1
    cols = minute_of_day // grid.step_minutes
    return rows, cols, year


def compute_climatology(series: ObservationSeries, window_days: int = 21) -> ClimatologyTable:
    """Slot means of a series with a wrapping day-window boxcar.

    Every slot is the mean over all samples whose (month, day) falls within
    ``window_days`` centred on the slot's day (wrapping across the year
    boundary) and whose time of day matches. Missing samples (NaN) simply
    do not contribute.
    """
    if window_days < 1 or window_days % 2 == 0:
        raise ConfigError(f"window_days must be odd and >= 1, got {window_days}")
    grid = series.grid
    span_days = grid.count * grid.step_minutes / 1440.0
    if span_days < 365.0:
        raise ConfigError(f"series spans {span_days:.1f} days; climatology needs >= 1 year")

    rows, cols, years = _slot_indices(grid)
    spd = grid.slots_per_day
    sums = np.zeros((N_DAY_SLOTS, spd))
    counts = np.zeros((N_DAY_SLOTS, spd), dtype=np.int64)
    valid = np.isfinite(series.values)
    np.add.at(sums, (rows[valid], cols[valid]), series.values[valid])
    np.add.at(counts, (rows[valid], cols[valid]), 1)

    half = (window_days - 1) // 2
    wsums = np.zeros_like(sums)
    wcounts = np.zeros_like(counts)
    for off in range(-half, half + 1):
        wsums += np.roll(sums, -off, axis=0)
        wcounts += np.roll(counts, -off, axis=0)

    if np.any(wcounts == 0):
        empty = int(np.count_nonzero(wcounts == 0))
        raise ConfigError(f"{empty} climatology slots have no contributing samples")
    means = wsums / wcounts
    return ClimatologyTable(
        station_id=series.station_id,
        step_minutes=grid.step_minutes,
        means=means,
        counts=wcounts,
        years_used=tuple(sorted(set(int(y) for y in np.unique(years)))),
        window_days=window_days,
    )


def compute_tables(dataset: Dataset, window_days: int = 21) -> dict:
    """Climatology table per station, keyed by station id."""
    return {
        sid: compute_climatology(dataset.series[sid], window_days)
        for sid in dataset.station_ids
    }


def clim_values(table: ClimatologyTable, grid: TimeGrid) -> np.ndarray:
    """<T> evaluated at every index of ``grid``."""
    if grid.step_minutes != table.step_minutes:
        raise ConfigError(
            f"grid step {grid.step_minutes} != table step {table.step_minutes}"
        )
    rows, cols, _ = _slot_indices(grid)
    return table.means[rows, cols]


def decompose(series: ObservationSeries, table: ClimatologyTable) -> ObservationSeries:
    """Fluctuation series T' = T - <T>; recompose() restores T exactly."""
    if table.station_id != series.station_id:
        raise StationLookupError(
            f"table is for {table.station_id}, series for {series.station_id}"
        )
    return series.with_values(series.values - clim_values(table, series.grid))


def recompose(anomaly: ObservationSeries, table: ClimatologyTable) -> ObservationSeries:
    if table.station_id != anomaly.station_id:
        raise StationLookupError(
            f"table is for {table.station_id}, series for {anomaly.station_id}"
        )
    return anomaly.with_values(anomaly.values + clim_values(table, anomaly.grid))


def decompose_dataset(dataset: Dataset, tables: dict) -> Dataset:
    missing = [sid for sid in dataset.station_ids if sid not in tables]
    if missing:
        raise StationLookupError(f"no climatology table for stations {missing}")
    return dataset.with_series(
        {sid: decompose(dataset.series[sid], tables[sid]) for sid in dataset.station_ids}
    )


def climatology_forecast(shape) -> np.ndarray:
    """The climatology baseline predicts zero fluctuation everywhere."""
    return np.zeros(shape)


def save_table(table: ClimatologyTable, directory) -> Path:
    """Write `<station_id>.csv` with columns mmdd,slot_minute,mean_k."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{table.station_id}.csv"
    tmp = path.with_suffix(".csv.tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mmdd", "slot_minute", "mean_k"])
        for slot in range(1, N_DAY_SLOTS + 1):
            mmdd = slot_to_mmdd(slot)
            for col in range(table.means.shape[1]):
                writer.writerow(
                    [mmdd, col * table.step_minutes, repr(float(table.means[slot - 1, col]))]
                )
    tmp.replace(path)
    return path


def load_table(path, station_id: str = None) -> ClimatologyTable:
    path = Path(path)
    sid = station_id if station_id is not None else path.stem
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append((row["mmdd"], int(row["slot_minute"]), float(row["mean_k"])))
    slot_minutes = sorted(set(r[1] for r in rows))
    step = slot_minutes[1] - slot_minutes[0] if len(slot_minutes) > 1 else 1440
    spd = 1440 // step
    means = np.full((N_DAY_SLOTS, spd), np.nan)
    for mmdd, minute, mean_k in rows:
        slot = day_slot(int(mmdd[:2]), int(mmdd[2:]))
        means[slot - 1, minute // step] = mean_k
    return ClimatologyTable(
        station_id=sid,
        step_minutes=step,
        means=means,
        counts=np.zeros((N_DAY_SLOTS, spd), dtype=np.int64),
        years_used=(),
        window_days=0,
    )
