"""Uniform mesh handling: grid geometry, land masks, bilinear sampling.

Grid nodes are cell centres at (origin_e + ix*dx, origin_n + iy*dy) and
field arrays are indexed [iy, ix] row-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np
from scipy import ndimage

from .core import _freeze
from .errors import ConfigError, RangeError
from .projection import project


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    dx_m: float
    origin_e: float
    origin_n: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("grid needs at least 2x2 nodes")
        if self.dx_m <= 0:
            raise ConfigError("dx_m must be positive")

    @property
    def dy_m(self) -> float:
        return self.dx_m

    def node_coords(self):
        """(N, 2) easting/northing of all nodes, row-major [iy, ix] order."""
        xs = self.origin_e + np.arange(self.nx) * self.dx_m
        ys = self.origin_n + np.arange(self.ny) * self.dx_m
        ee, nn = np.meshgrid(xs, ys)
        return np.column_stack([ee.ravel(), nn.ravel()])

    def extent(self):
        return (
            self.origin_e,
            self.origin_e + (self.nx - 1) * self.dx_m,
            self.origin_n,
            self.origin_n + (self.ny - 1) * self.dx_m,
        )

    @classmethod
    def for_bbox(cls, bbox, nx: int = 128, ny: int = 128, dx_m: float = 5000.0) -> "GridSpec":
        """Grid centred on the projected bbox; errors if it cannot cover it."""
        lat_min, lat_max, lon_min, lon_max = bbox
        corners = [
            project(lat, lon)
            for lat in (lat_min, lat_max)
            for lon in (lon_min, lon_max)
        ]
        es = [c[0] for c in corners]
        ns = [c[1] for c in corners]
        span_e, span_n = max(es) - min(es), max(ns) - min(ns)
        if (nx - 1) * dx_m < span_e or (ny - 1) * dx_m < span_n:
            raise ConfigError(
                f"{nx}x{ny} grid at {dx_m} m cannot cover projected bbox "
                f"({span_e:.0f} x {span_n:.0f} m)"
            )
        origin_e = 0.5 * (max(es) + min(es)) - 0.5 * (nx - 1) * dx_m
        origin_n = 0.5 * (max(ns) + min(ns)) - 0.5 * (ny - 1) * dx_m
        return cls(nx=nx, ny=ny, dx_m=dx_m, origin_e=origin_e, origin_n=origin_n)


@dataclass(frozen=True)
class MaskSet:
    """Land mask plus its coastal enlargement; inland is the loss region."""

    land: np.ndarray      # (ny, nx) bool
    enlarged: np.ndarray  # land dilated by the coastal buffer
    buffer_km: float

    def __post_init__(self):
        land = np.asarray(self.land, dtype=bool)
        enlarged = np.asarray(self.enlarged, dtype=bool)
        if land.shape != enlarged.shape:
            raise ConfigError("land and enlarged mask shapes differ")
        if np.any(land & ~enlarged):
            raise ConfigError("land mask not contained in enlarged mask")
        object.__setattr__(self, "land", _freeze(land))
        object.__setattr__(self, "enlarged", _freeze(enlarged))

    @property
    def inland(self) -> np.ndarray:
        return self.land

    @property
    def n_inland(self) -> int:
        return int(np.count_nonzero(self.land))


def build_masks(land_grid: np.ndarray, grid: GridSpec, buffer_km: float = 30.0) -> MaskSet:
    """Dilate land by a centre-to-centre Euclidean buffer (default 30 km).

    At 5 km resolution a 30 km buffer adds six rings of sea nodes around
    the coast.
    """
    land = np.asarray(land_grid, dtype=bool)
    if land.shape != (grid.ny, grid.nx):
        raise ConfigError(f"land grid {land.shape} != (ny, nx) = ({grid.ny}, {grid.nx})")
    if buffer_km <= 0:
        enlarged = land.copy()
    elif land.all():
        enlarged = land.copy()
    else:
        dist = ndimage.distance_transform_edt(~land, sampling=(grid.dy_m, grid.dx_m))
        enlarged = dist <= buffer_km * 1000.0 + 1e-6
    return MaskSet(land=land, enlarged=enlarged, buffer_km=buffer_km)


@dataclass(frozen=True)
class MeshField:
    """One kriged snapshot on the mesh; exactly 0 outside the enlarged mask."""

    grid: GridSpec
    timestamp: datetime
    values: np.ndarray  # (ny, nx)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.ny, self.grid.nx):
            raise ConfigError(f"field shape {values.shape} != grid ({self.grid.ny}, {self.grid.nx})")
        object.__setattr__(self, "values", _freeze(values))


def sample_bilinear(values: np.ndarray, grid: GridSpec, easting, northing):
    """Bilinear blend of the four nodes surrounding each query point."""
    values = np.asarray(values, dtype=np.float64)
    e = np.atleast_1d(np.asarray(easting, dtype=np.float64))
    n = np.atleast_1d(np.asarray(northing, dtype=np.float64))
    fx = (e - grid.origin_e) / grid.dx_m
    fy = (n - grid.origin_n) / grid.dx_m
    eps = 1e-9
    if np.any(fx < -eps) or np.any(fx > grid.nx - 1 + eps) or np.any(
        fy < -eps
    ) or np.any(fy > grid.ny - 1 + eps):
        raise RangeError("query point outside grid extent")
    fx = np.clip(fx, 0.0, grid.nx - 1.0)
    fy = np.clip(fy, 0.0, grid.ny - 1.0)
    ix = np.minimum(fx.astype(np.int64), grid.nx - 2)
    iy = np.minimum(fy.astype(np.int64), grid.ny - 2)
    tx = fx - ix
    ty = fy - iy
    v00 = values[iy, ix]
    v01 = values[iy, ix + 1]
    v10 = values[iy + 1, ix]
    v11 = values[iy + 1, ix + 1]
    out = (
        v00 * (1 - tx) * (1 - ty)
        + v01 * tx * (1 - ty)
        + v10 * (1 - tx) * ty
        + v11 * tx * ty
    )
    return float(out[0]) if np.isscalar(easting) or np.asarray(easting).ndim == 0 else out
