"""Mesh sequence persistence: flat binary values plus a JSON sidecar.

The data file holds row-major float64 little-endian frames concatenated in
timestamp order; the sidecar carries ``{nx, ny, dx_m, origin_e, origin_n,
timestamps[]}``. Land masks are stored as CSV of 0/1 rows.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .gridding import GridSpec, MeshField


def _stamp(ts: datetime) -> str:
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def _unstamp(s: str) -> datetime:
    return datetime.strptime(s, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def write_fields(fields, path) -> Path:
    """Write a MeshField sequence as `<path>` + `<path>.json` sidecar."""
    if not fields:
        raise ConfigError("no fields to write")
    grid = fields[0].grid
    for f in fields:
        if f.grid != grid:
            raise ConfigError("all fields must share one grid")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.stack([f.values for f in fields]).astype("<f8")
    tmp = path.with_name(path.name + ".tmp")
    data.tofile(tmp)
    tmp.replace(path)
    sidecar = {
        "nx": grid.nx,
        "ny": grid.ny,
        "dx_m": grid.dx_m,
        "origin_e": grid.origin_e,
        "origin_n": grid.origin_n,
        "timestamps": [_stamp(f.timestamp) for f in fields],
    }
    side_path = path.with_name(path.name + ".json")
    side_tmp = side_path.with_name(side_path.name + ".tmp")
    side_tmp.write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
    side_tmp.replace(side_path)
    return path


def read_fields(path):
    """Read a MeshField sequence written by :func:`write_fields`."""
    path = Path(path)
    sidecar = json.loads(path.with_name(path.name + ".json").read_text())
    grid = GridSpec(
        nx=sidecar["nx"],
        ny=sidecar["ny"],
        dx_m=sidecar["dx_m"],
        origin_e=sidecar["origin_e"],
        origin_n=sidecar["origin_n"],
    )
    stamps = sidecar["timestamps"]
    raw = np.fromfile(path, dtype="<f8")
    expected = len(stamps) * grid.ny * grid.nx
    if raw.size != expected:
        raise ConfigError(f"{path}: {raw.size} values, sidecar implies {expected}")
    frames = raw.reshape(len(stamps), grid.ny, grid.nx)
    return [
        MeshField(grid=grid, timestamp=_unstamp(s), values=frames[i])
        for i, s in enumerate(stamps)
    ]


def write_land_mask(land: np.ndarray, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    np.savetxt(tmp, np.asarray(land, dtype=np.int8), fmt="%d", delimiter=",")
    tmp.replace(path)
    return path


def read_land_mask(path) -> np.ndarray:
    return np.loadtxt(Path(path), dtype=np.int64, delimiter=",").astype(bool)
