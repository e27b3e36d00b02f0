"""CSV ingestion: station metadata and observation alignment."""

from datetime import datetime

import numpy as np
import pytest

from tptkit.core import TimeGrid, celsius_to_kelvin
from tptkit.errors import IngestError
from tptkit.ingest import ingest, ingest_extras, read_station_meta, write_observations, write_station_meta

META = """id,lat,lon,easting,northing,altitude_m
S01,37.5,127.0,950000.0,1945000.0,25.0
S02,36.0,128.5,,,”fixme”
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_read_meta_projects_missing_coordinates(tmp_path):
    text = (
        "id,lat,lon,easting,northing,altitude_m\n"
        "S02,36.0,128.5,,,120.0\n"
        "S01,37.5,127.0,950000.0,1945000.0,25.0\n"
    )
    stations = read_station_meta(_write(tmp_path, "meta.csv", text))
    assert [s.id for s in stations] == ["S01", "S02"]  # sorted by id
    assert stations[0].easting == 950000.0
    s2 = stations[1]
    assert s2.easting > 1_000_000.0  # east of the central meridian
    assert s2.altitude_m == 120.0


def test_read_meta_bad_row_reports_line(tmp_path):
    text = "id,lat,lon,easting,northing,altitude_m\nS01,37.5,abc,,,10.0\n"
    with pytest.raises(IngestError, match="meta.csv:2"):
        read_station_meta(_write(tmp_path, "meta.csv", text))


def _basic_corpus(tmp_path, obs_rows):
    meta = _write(
        tmp_path,
        "meta.csv",
        "id,lat,lon,easting,northing,altitude_m\n"
        "S01,37.5,127.0,950000.0,1945000.0,25.0\n"
        "S02,36.0,128.5,1100000.0,1780000.0,120.0\n",
    )
    obs = _write(tmp_path, "obs.csv", "timestamp_utc,station_id,temp_c\n" + obs_rows)
    return meta, obs


def test_ingest_two_stations_24_rows(tmp_path):
    rows = []
    for h in range(24):
        rows.append(f"2020-01-01T{h:02d}:00:00Z,S01,{h / 2:.1f}")
        rows.append(f"2020-01-01T{h:02d}:00:00Z,S02,-{h / 4:.2f}")
    meta, obs = _basic_corpus(tmp_path, "\n".join(rows) + "\n")
    grid = TimeGrid(datetime(2020, 1, 1), 60, 24)
    ds = ingest(meta, obs, grid)
    assert set(ds.series) == {"S01", "S02"}
    assert ds.series["S01"].values.shape == (24,)
    np.testing.assert_allclose(ds.series["S01"].values[2], celsius_to_kelvin(1.0))


def test_unknown_station_errors_by_name(tmp_path):
    meta, obs = _basic_corpus(tmp_path, "2020-01-01T00:00:00Z,999,10.0\n")
    grid = TimeGrid(datetime(2020, 1, 1), 60, 24)
    with pytest.raises(IngestError, match="999"):
        ingest(meta, obs, grid)


def test_duplicate_timestamp_last_write_wins(tmp_path):
    rows = (
        "2020-01-01T00:00:00Z,S01,10.0\n"
        "2020-01-01T00:00:00Z,S01,12.0\n"
        "2020-01-01T01:00:00Z,S02,5.0\n"
    )
    meta, obs = _basic_corpus(tmp_path, rows)
    grid = TimeGrid(datetime(2020, 1, 1), 60, 2)
    ds, extras = ingest_extras(meta, obs, grid)
    np.testing.assert_allclose(ds.series["S01"].values[0], celsius_to_kelvin(12.0))
    assert extras.duplicate_counts == {"S01": 1, "S02": 0}


def test_missing_timestamps_are_nan(tmp_path):
    meta, obs = _basic_corpus(tmp_path, "2020-01-01T05:00:00Z,S01,3.0\n")
    grid = TimeGrid(datetime(2020, 1, 1), 60, 12)
    ds = ingest(meta, obs, grid)
    vals = ds.series["S01"].values
    assert np.isnan(vals[0]) and np.isfinite(vals[5])
    assert np.all(np.isnan(ds.series["S02"].values))


def test_optional_pressure_column(tmp_path):
    meta = _write(
        tmp_path,
        "meta.csv",
        "id,lat,lon,easting,northing,altitude_m\nS01,37.5,127.0,1.0,2.0,25.0\n",
    )
    obs = _write(
        tmp_path,
        "obs.csv",
        "timestamp_utc,station_id,temp_c,pressure_hpa\n"
        "2020-01-01T00:00:00Z,S01,10.0,998.7\n",
    )
    grid = TimeGrid(datetime(2020, 1, 1), 60, 2)
    _, extras = ingest_extras(meta, obs, grid)
    assert extras.pressure_hpa["S01"][0] == 998.7
    assert np.isnan(extras.pressure_hpa["S01"][1])


def test_write_read_roundtrip(tmp_path):
    rows = "\n".join(
        f"2020-01-01T{h:02d}:00:00Z,S01,{10 + 0.25 * h:.4f}" for h in range(24)
    )
    meta, obs = _basic_corpus(tmp_path, rows + "\n")
    grid = TimeGrid(datetime(2020, 1, 1), 60, 24)
    ds = ingest(meta, obs, grid)
    out_obs = write_observations(ds, tmp_path / "out.csv")
    out_meta = write_station_meta(ds.stations, tmp_path / "meta2.csv")
    ds2 = ingest(out_meta, out_obs, grid)
    np.testing.assert_allclose(
        ds2.series["S01"].values, ds.series["S01"].values, atol=1e-4
    )


def test_malformed_obs_row_reports_line(tmp_path):
    meta, obs = _basic_corpus(tmp_path, "2020-01-01T00:00:00Z,S01,not_a_number\n")
    grid = TimeGrid(datetime(2020, 1, 1), 60, 24)
    with pytest.raises(IngestError, match="obs.csv:2"):
        ingest(meta, obs, grid)
