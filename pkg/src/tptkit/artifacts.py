"""On-disk artifact formats shared by the CLI stages.

Every artifact is a flat little-endian binary next to a JSON sidecar, and
every write goes through a temp file plus rename so re-runs are atomic.
Datasets round-trip exactly (float64 bit patterns preserved).
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .core import Dataset, ObservationSeries, StationMeta, TimeGrid
from .errors import ConfigError
from .ingest import read_station_meta, write_station_meta


def _write_json(path: Path, payload: dict):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    tmp.replace(path)


def _write_bin(path: Path, arr: np.ndarray):
    tmp = path.with_name(path.name + ".tmp")
    np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tofile(tmp)
    tmp.replace(path)


def missing_artifact(path, producer: str):
    return ConfigError(f"missing artifact {path}; run `tptkit {producer}` first")


def save_dataset(dataset: Dataset, path, extra: dict = None) -> Path:
    """values+flags binary, station CSV, and a JSON sidecar with the grid."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_bin(path, dataset.values_matrix())
    flags = np.vstack([dataset.series[s.id].flags for s in dataset.stations])
    _write_bin(path.with_name(path.name + ".flags"), flags)
    write_station_meta(dataset.stations, path.with_name(path.name + ".stations.csv"))
    sidecar = {
        "station_ids": dataset.station_ids,
        "start": dataset.grid.start.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "step_minutes": dataset.grid.step_minutes,
        "count": dataset.grid.count,
        "has_split": dataset.split_assignment is not None,
    }
    if extra:
        sidecar.update(extra)
    if dataset.split_assignment is not None:
        _write_bin(path.with_name(path.name + ".split"), dataset.split_assignment)
    _write_json(path.with_name(path.name + ".json"), sidecar)
    return path


def load_dataset(path, producer: str = "qc") -> Dataset:
    path = Path(path)
    side_path = path.with_name(path.name + ".json")
    if not path.exists() or not side_path.exists():
        raise missing_artifact(path, producer)
    side = json.loads(side_path.read_text())
    grid = TimeGrid(
        start=datetime.strptime(side["start"], "%Y-%m-%dT%H:%M:%SZ").replace(
            tzinfo=timezone.utc
        ),
        step_minutes=side["step_minutes"],
        count=side["count"],
    )
    ids = side["station_ids"]
    values = np.fromfile(path, dtype="<f8").reshape(len(ids), grid.count)
    flags = np.fromfile(path.with_name(path.name + ".flags"), dtype="<u1").reshape(
        len(ids), grid.count
    )
    stations = read_station_meta(path.with_name(path.name + ".stations.csv"))
    by_id = {s.id: s for s in stations}
    stations = tuple(by_id[i] for i in ids)
    series = {
        sid: ObservationSeries(sid, grid, values[k], flags[k]) for k, sid in enumerate(ids)
    }
    split = None
    split_path = path.with_name(path.name + ".split")
    if side.get("has_split") and split_path.exists():
        split = np.fromfile(split_path, dtype="<u1")
    return Dataset(grid, stations, series, split)


def save_station_predictions(path, pred, timestamps, station_ids, lead_hours,
                             extra: dict = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != (len(timestamps), len(station_ids)):
        raise ConfigError("prediction matrix shape does not match sidecar lists")
    _write_bin(path, pred)
    payload = {
        "kind": "station",
        "lead_hours": lead_hours,
        "timestamps": list(timestamps),
        "station_ids": list(station_ids),
    }
    if extra:
        payload.update(extra)
    _write_json(path.with_name(path.name + ".json"), payload)
    return path


def load_station_predictions(path, producer: str = "predict"):
    path = Path(path)
    side_path = path.with_name(path.name + ".json")
    if not path.exists() or not side_path.exists():
        raise missing_artifact(path, producer)
    side = json.loads(side_path.read_text())
    pred = np.fromfile(path, dtype="<f8").reshape(
        len(side["timestamps"]), len(side["station_ids"])
    )
    return pred, side


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def update_manifest(directory, stage: str, entry: dict) -> Path:
    """Record per-stage config hash and seed; content is run-deterministic."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {"stages": {}}
    manifest["stages"][stage] = entry
    _write_json(path, manifest)
    return path
