"""Calendar arithmetic, series containers, and dataset splitting."""

from datetime import datetime, timezone

import numpy as np
import pytest

from tptkit.core import (
    TEST,
    TRAIN,
    VAL,
    Dataset,
    ObservationSeries,
    StationMeta,
    TimeGrid,
    calendar_fields,
    from_calendar,
    split_dataset,
    to_calendar,
)
from tptkit.errors import ConfigError, RangeError


def _grid(start="2000-01-01T00:00", step=60, count=100):
    return TimeGrid(datetime.fromisoformat(start), step, count)


# independent calendar oracle: explicit Gregorian day counting, no datetime
_DAYS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)


def _is_leap(y):
    return y % 4 == 0 and (y % 100 != 0 or y % 400 == 0)


def _manual_calendar(year0, minutes_from_jan1):
    day, rem = divmod(minutes_from_jan1, 1440)
    year = year0
    while True:
        ydays = 366 if _is_leap(year) else 365
        if day < ydays:
            break
        day -= ydays
        year += 1
    return year, day + 1, rem // 60, rem % 60


def test_to_calendar_identity_at_origin():
    grid = _grid()
    assert to_calendar(grid, 0) == (2000, 1, 0, 0)


def test_to_calendar_leap_day():
    # index 24*59 lands on Feb 29 of leap year 2000
    grid = _grid(count=24 * 366)
    idx = 24 * 59
    assert to_calendar(grid, idx) == _manual_calendar(2000, idx * 60)
    assert to_calendar(grid, idx) == (2000, 60, 0, 0)


def test_to_calendar_non_leap_day60_is_march1():
    grid = _grid(start="2001-01-01T00:00", count=24 * 365)
    idx = 24 * 59
    assert to_calendar(grid, idx) == _manual_calendar(2001, idx * 60)
    # day-of-year 60 in 2001 is Mar 1; Feb 29 never appears
    assert to_calendar(grid, idx) == (2001, 60, 0, 0)


@pytest.mark.parametrize("start,step", [("2000-01-01T00:00", 60), ("2003-06-15T12:30", 10)])
def test_calendar_oracle_random_indices(start, step):
    grid = _grid(start=start, step=step, count=200000)
    rng = np.random.default_rng(42)
    base = datetime.fromisoformat(start)
    base_min = base.hour * 60 + base.minute
    doy0 = (base - datetime(base.year, 1, 1)).days
    for idx in rng.integers(0, grid.count, size=200):
        got = to_calendar(grid, int(idx))
        want = _manual_calendar(base.year, doy0 * 1440 + base_min + int(idx) * step)
        assert got == want


def test_calendar_round_trip():
    grid = _grid(step=30, count=26 * 366 * 48)
    rng = np.random.default_rng(7)
    for idx in rng.integers(0, grid.count, size=300):
        y, d, h, m = to_calendar(grid, int(idx))
        assert from_calendar(grid, y, d, h, m) == int(idx)


def test_to_calendar_out_of_range():
    grid = _grid(count=10)
    with pytest.raises(RangeError):
        to_calendar(grid, 10)
    with pytest.raises(RangeError):
        to_calendar(grid, -1)


def test_grid_step_must_divide_day():
    with pytest.raises(ConfigError):
        TimeGrid(datetime(2000, 1, 1), 7, 10)
    with pytest.raises(ConfigError):
        TimeGrid(datetime(2000, 1, 1), 0, 10)


def test_calendar_fields_matches_to_calendar():
    grid = _grid(start="2004-02-27T23:00", step=60, count=100)
    year, month, day, mod = calendar_fields(grid)
    for idx in (0, 1, 25, 49, 99):
        y, d, h, m = to_calendar(grid, idx)
        assert year[idx] == y
        assert mod[idx] == h * 60 + m
        ts = grid.time_at(idx)
        assert (month[idx], day[idx]) == (ts.month, ts.day)


def _dataset(count=1000):
    grid = _grid(count=count)
    st = StationMeta("A", 36.0, 127.0, 1000.0, 2000.0, 10.0)
    series = {"A": ObservationSeries("A", grid, np.zeros(count))}
    return Dataset(grid, [st], series)


def test_split_counts_exact():
    d = split_dataset(_dataset(1000), (0.8, 0.1, 0.1), seed=7)
    counts = np.bincount(d.split_assignment, minlength=3)
    assert tuple(counts) == (800, 100, 100)


def test_split_degenerate_all_train():
    d = split_dataset(_dataset(50), (1.0, 0.0, 0.0), seed=1)
    assert np.all(d.split_assignment == TRAIN)


def test_split_deterministic():
    a = split_dataset(_dataset(777), seed=3)
    b = split_dataset(_dataset(777), seed=3)
    assert np.array_equal(a.split_assignment, b.split_assignment)
    c = split_dataset(_dataset(777), seed=4)
    assert not np.array_equal(a.split_assignment, c.split_assignment)


def test_split_partition_within_one():
    for n in (10, 33, 101, 997):
        d = split_dataset(_dataset(n), (0.8, 0.1, 0.1), seed=0)
        counts = np.bincount(d.split_assignment, minlength=3)
        assert counts.sum() == n  # every sample exactly one label
        for frac, got in zip((0.8, 0.1, 0.1), counts):
            assert abs(got - frac * n) <= 1.0


def test_split_negative_fraction():
    with pytest.raises(ConfigError):
        split_dataset(_dataset(10), (1.2, -0.1, -0.1), seed=0)


def test_station_meta_validation():
    with pytest.raises(ConfigError):
        StationMeta("X", 36.0, 127.0, 0.0, 0.0, -5.0)
    s = StationMeta("X", 36.0, 127.0, 0.0, 0.0, 5.0)
    assert s.in_bbox()
    assert not StationMeta("Y", 50.0, 127.0, 0.0, 0.0, 5.0).in_bbox()


def test_series_immutable_and_validated():
    grid = _grid(count=5)
    s = ObservationSeries("A", grid, np.arange(5.0))
    with pytest.raises(ValueError):
        s.values[0] = 99.0
    with pytest.raises(ConfigError):
        ObservationSeries("A", grid, np.arange(4.0))
