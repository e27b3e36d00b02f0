"""CSV ingestion of station metadata and raw observations.

Station metadata CSV: ``id,lat,lon,easting,northing,altitude_m`` with
easting/northing optional (computed by projection when absent).
Observation CSV: ``timestamp_utc,station_id,temp_c[,pressure_hpa][,rh_pct]``
with RFC 3339 timestamps. Temperatures are converted to Kelvin on read.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    DOMAIN_BBOX,
    Dataset,
    ObservationSeries,
    StationMeta,
    TimeGrid,
    celsius_to_kelvin,
    kelvin_to_celsius,
)
from .errors import IngestError, RangeError
from .projection import project

META_HEADER = ["id", "lat", "lon", "easting", "northing", "altitude_m"]
OBS_HEADER = ["timestamp_utc", "station_id", "temp_c"]


def read_station_meta(path, bbox=DOMAIN_BBOX) -> list:
    """Parse the station metadata CSV; projects lat/lon when easting is blank."""
    path = Path(path)
    stations = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:3]] != META_HEADER[:3]:
            raise IngestError(f"{path}: expected header starting {META_HEADER[:3]}")
        for lineno, row in enumerate(reader, start=2):
            try:
                lat, lon = float(row["lat"]), float(row["lon"])
                e_raw = (row.get("easting") or "").strip()
                n_raw = (row.get("northing") or "").strip()
                if e_raw and n_raw:
                    easting, northing = float(e_raw), float(n_raw)
                else:
                    easting, northing = project(lat, lon, bbox=bbox)
                stations.append(
                    StationMeta(
                        id=row["id"].strip(),
                        lat=lat,
                        lon=lon,
                        easting=easting,
                        northing=northing,
                        altitude_m=float(row["altitude_m"]),
                    )
                )
            except (KeyError, ValueError, RangeError) as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
    if not stations:
        raise IngestError(f"{path}: no stations")
    return sorted(stations, key=lambda s: s.id)


def write_station_meta(stations, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(META_HEADER)
        for s in stations:
            writer.writerow([s.id, repr(s.lat), repr(s.lon), repr(s.easting),
                             repr(s.northing), repr(s.altitude_m)])
    tmp.replace(path)
    return path


@dataclass(frozen=True)
class IngestExtras:
    """Optional observation columns and per-station duplicate counts."""

    pressure_hpa: dict  # station_id -> ndarray aligned to grid (NaN where absent)
    rh_pct: dict
    duplicate_counts: dict


def _parse_timestamps(raw: list) -> np.ndarray:
    cleaned = [t[:-1] if t.endswith("Z") else t for t in raw]
    try:
        return np.array(cleaned, dtype="datetime64[s]")
    except ValueError as exc:
        raise IngestError(f"bad timestamp in observations: {exc}") from exc


def ingest(meta_csv, obs_csv, grid: TimeGrid, bbox=DOMAIN_BBOX):
    """Build a Dataset aligned to ``grid`` from the two CSV files.

    Missing timestamps are NaN. Duplicate (station, timestamp) rows follow
    last-write-wins, with the count reported through :func:`ingest_extras`.
    """
    dataset, _ = ingest_extras(meta_csv, obs_csv, grid, bbox=bbox)
    return dataset


def ingest_extras(meta_csv, obs_csv, grid: TimeGrid, bbox=DOMAIN_BBOX):
    stations = read_station_meta(meta_csv, bbox=bbox)
    id_to_pos = {s.id: i for i, s in enumerate(stations)}
    n = len(stations)

    ts_raw, sid_col, temp_col = [], [], []
    press_col, rh_col = [], []
    obs_csv = Path(obs_csv)
    with open(obs_csv, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != OBS_HEADER:
            raise IngestError(f"{obs_csv}: expected header starting {OBS_HEADER}")
        has_press = len(header) > 3 and header[3].strip() == "pressure_hpa"
        has_rh = "rh_pct" in [h.strip() for h in header[3:]]
        rh_idx = [h.strip() for h in header].index("rh_pct") if has_rh else -1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3:
                raise IngestError(f"{obs_csv}:{lineno}: expected >= 3 fields, got {len(row)}")
            sid = row[1].strip()
            if sid not in id_to_pos:
                raise IngestError(f"{obs_csv}:{lineno}: unknown station id {sid!r}")
            ts_raw.append(row[0].strip())
            sid_col.append(id_to_pos[sid])
            try:
                temp_col.append(float(row[2]) if row[2].strip() != "" else np.nan)
                if has_press:
                    press_col.append(float(row[3]) if row[3].strip() != "" else np.nan)
                if has_rh:
                    rh_col.append(float(row[rh_idx]) if row[rh_idx].strip() != "" else np.nan)
            except ValueError as exc:
                raise IngestError(f"{obs_csv}:{lineno}: {exc}") from exc

    times = _parse_timestamps(ts_raw)
    start = np.datetime64(grid.start.replace(tzinfo=None), "s")
    offsets = (times - start) / np.timedelta64(60 * grid.step_minutes, "s")
    idx = np.rint(offsets).astype(np.int64)
    on_grid = (offsets == idx) & (idx >= 0) & (idx < grid.count)
    if not np.all(on_grid):
        bad = int(np.argmin(on_grid))
        raise IngestError(f"{obs_csv}: timestamp {ts_raw[bad]} not on the ingest grid")

    sid_arr = np.asarray(sid_col, dtype=np.int64)
    # last-write-wins for duplicate (station, timestamp) rows: keep the last
    # file position of each key and count the shadowed rows per station
    keys = sid_arr * grid.count + idx
    order = np.lexsort((np.arange(keys.size), keys))
    sorted_keys = keys[order]
    is_last = np.append(sorted_keys[1:] != sorted_keys[:-1], True)
    keep = order[is_last]
    dup_counts = np.zeros(n, dtype=np.int64)
    shadowed = order[~is_last]
    if shadowed.size:
        np.add.at(dup_counts, sid_arr[shadowed], 1)

    values = np.full((n, grid.count), np.nan)
    values[sid_arr[keep], idx[keep]] = celsius_to_kelvin(np.asarray(temp_col))[keep]

    def _optional(col):
        out = np.full((n, grid.count), np.nan)
        if col:
            out[sid_arr[keep], idx[keep]] = np.asarray(col, dtype=np.float64)[keep]
        return out

    press = _optional(press_col) if has_press else None
    rh = _optional(rh_col) if has_rh else None

    series = {
        s.id: ObservationSeries(s.id, grid, values[i]) for i, s in enumerate(stations)
    }
    extras = IngestExtras(
        pressure_hpa={s.id: press[i] for i, s in enumerate(stations)} if press is not None else {},
        rh_pct={s.id: rh[i] for i, s in enumerate(stations)} if rh is not None else {},
        duplicate_counts={s.id: int(dup_counts[i]) for i, s in enumerate(stations)},
    )
    return Dataset(grid, stations, series), extras


def write_observations(dataset: Dataset, path, pressure=None, rh=None) -> Path:
    """Write observations back out in the ingest format (Kelvin -> Celsius)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(OBS_HEADER)
    if pressure:
        header.append("pressure_hpa")
    if rh:
        header.append("rh_pct")
    times = dataset.grid.times()
    stamps = [t.strftime("%Y-%m-%dT%H:%M:%SZ") for t in times]
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in dataset.stations:
            vals_c = kelvin_to_celsius(dataset.series[s.id].values)
            p = pressure.get(s.id) if pressure else None
            r = rh.get(s.id) if rh else None
            for i, stamp in enumerate(stamps):
                v = vals_c[i]
                row = [stamp, s.id, "" if np.isnan(v) else f"{v:.4f}"]
                if pressure:
                    row.append("" if p is None or np.isnan(p[i]) else f"{p[i]:.3f}")
                if rh:
                    row.append("" if r is None or np.isnan(r[i]) else f"{r[i]:.2f}")
                writer.writerow(row)
    tmp.replace(path)
    return path
