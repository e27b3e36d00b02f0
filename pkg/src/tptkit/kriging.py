"""Ordinary kriging of station values onto the uniform mesh.

The station-geometry system

    [ Gamma  1 ] [ lambda ]   [ gamma(stations, target) ]
    [ 1^T    0 ] [ mu     ] = [ 1                        ]

is factorized once per station layout and reused for every target node and
every timestamp. Weights sum to 1 by the Lagrange constraint, and with a
zero nugget the estimator honours station values exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import ConfigError, NumericError
from .gridding import GridSpec, MaskSet, MeshField
from .variogram import VariogramModel


class KrigingSolver:
    """Reusable ordinary-kriging solver for a fixed station layout."""

    def __init__(self, coords, vg: VariogramModel):
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 2:
            raise ConfigError("need an (n >= 2, 2) coordinate array")
        d = squareform(pdist(coords))
        dup = np.argwhere((d < 1e-9) & ~np.eye(coords.shape[0], dtype=bool))
        if dup.size:
            a, b = int(dup[0, 0]), int(dup[0, 1])
            raise NumericError(f"duplicate station coordinates at rows {a} and {b}")
        self.coords = coords
        self.vg = vg
        n = coords.shape[0]
        a = np.zeros((n + 1, n + 1))
        a[:n, :n] = vg(d)
        a[n, :n] = 1.0
        a[:n, n] = 1.0
        try:
            self._lu = lu_factor(a)
        except Exception as exc:  # singular geometry
            raise NumericError(f"kriging system is singular: {exc}") from exc
        self.n = n

    def weights(self, targets):
        """(n, m) weights and (m,) Lagrange multipliers for target points."""
        targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        m = targets.shape[0]
        rhs = np.empty((self.n + 1, m))
        rhs[: self.n] = self.vg(cdist(self.coords, targets))
        rhs[self.n] = 1.0
        sol = lu_solve(self._lu, rhs)
        return sol[: self.n], sol[self.n]

    def estimate(self, values, targets=None, weights=None):
        """Kriged estimates; ``values`` is (n,) or (n_t, n) for many snapshots."""
        if weights is None:
            if targets is None:
                raise ConfigError("pass either targets or precomputed weights")
            weights, _ = self.weights(targets)
        values = np.asarray(values, dtype=np.float64)
        return values @ weights


def krige_field(
    station_values,
    coords,
    vg: VariogramModel,
    grid: GridSpec,
    masks: MaskSet,
    timestamp=None,
    solver: KrigingSolver = None,
    node_weights=None,
) -> MeshField:
    """Krige one snapshot onto the masked mesh (0 outside the enlarged mask)."""
    fields = krige_fields(
        np.atleast_2d(station_values), coords, vg, grid, masks,
        timestamps=[timestamp], solver=solver, node_weights=node_weights,
    )
    return fields[0]


def mask_node_weights(solver: KrigingSolver, grid: GridSpec, masks: MaskSet):
    """Precompute the (n_stations, n_masked_nodes) weight matrix."""
    nodes = grid.node_coords()[masks.enlarged.ravel()]
    w, _ = solver.weights(nodes)
    return w


def krige_fields(
    values_matrix,
    coords,
    vg: VariogramModel,
    grid: GridSpec,
    masks: MaskSet,
    timestamps=None,
    solver: KrigingSolver = None,
    node_weights=None,
):
    """Krige many snapshots with one factorization; returns list of MeshField."""
    values_matrix = np.atleast_2d(np.asarray(values_matrix, dtype=np.float64))
    if solver is None:
        solver = KrigingSolver(coords, vg)
    if node_weights is None:
        node_weights = mask_node_weights(solver, grid, masks)
    estimates = values_matrix @ node_weights  # (n_t, n_masked)
    n_t = values_matrix.shape[0]
    if timestamps is None:
        timestamps = [None] * n_t
    flat_mask = masks.enlarged.ravel()
    fields = []
    for t in range(n_t):
        buf = np.zeros(grid.ny * grid.nx)
        buf[flat_mask] = estimates[t]
        fields.append(MeshField(grid=grid, timestamp=timestamps[t],
                                values=buf.reshape(grid.ny, grid.nx)))
    return fields


def roundtrip_report(
    values_matrix, coords, vg: VariogramModel, grid: GridSpec, masks: MaskSet
):
    """Krige -> bilinear-retrieve error at the stations themselves.

    Returns (per_station_rmse, mean_rmse) over all snapshots in
    ``values_matrix`` (n_t, n_stations).
    """
    from .gridding import sample_bilinear

    values_matrix = np.atleast_2d(np.asarray(values_matrix, dtype=np.float64))
    coords = np.asarray(coords, dtype=np.float64)
    fields = krige_fields(values_matrix, coords, vg, grid, masks)
    sq = np.zeros(coords.shape[0])
    for t, field in enumerate(fields):
        retrieved = sample_bilinear(field.values, grid, coords[:, 0], coords[:, 1])
        sq += (retrieved - values_matrix[t]) ** 2
    per_station = np.sqrt(sq / values_matrix.shape[0])
    return per_station, float(per_station.mean())
