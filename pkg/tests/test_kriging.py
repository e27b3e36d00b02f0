"""Ordinary-kriging system against brute-force dense solves."""

import numpy as np
import pytest

from tptkit.errors import NumericError
from tptkit.gridding import GridSpec, MaskSet, build_masks
from tptkit.kriging import KrigingSolver, krige_field, krige_fields, roundtrip_report
from tptkit.variogram import VariogramModel

VG = VariogramModel("exponential", nugget=0.0, sill=2.0, range_m=30_000.0)


def _all_land(grid):
    return build_masks(np.ones((grid.ny, grid.nx), dtype=bool), grid, buffer_km=0.0)


def test_exact_at_station_coincident_node():
    grid = GridSpec(nx=5, ny=5, dx_m=10_000.0, origin_e=0.0, origin_n=0.0)
    coords = np.array([[20_000.0, 20_000.0], [0.0, 40_000.0], [40_000.0, 0.0]])
    values = np.array([3.7, -1.2, 0.4])
    field = krige_field(values, coords, VG, grid, _all_land(grid))
    # node (2, 2) coincides with station 0
    assert abs(field.values[2, 2] - 3.7) < 1e-6


def test_symmetric_pair_weights_half_half():
    solver = KrigingSolver(np.array([[0.0, 0.0], [20_000.0, 0.0]]), VG)
    w, mu = solver.weights(np.array([[10_000.0, 0.0]]))
    np.testing.assert_allclose(w[:, 0], [0.5, 0.5], atol=1e-12)


def test_three_station_weights_match_dense_solve():
    rng = np.random.default_rng(3)
    coords = rng.uniform(0, 60_000.0, size=(3, 2))
    targets = rng.uniform(0, 60_000.0, size=(8, 2))
    solver = KrigingSolver(coords, VG)
    w, mu = solver.weights(targets)
    # oracle: assemble and solve the 4x4 augmented system per node
    for j, node in enumerate(targets):
        a = np.ones((4, 4))
        a[3, 3] = 0.0
        for p in range(3):
            for q in range(3):
                a[p, q] = VG(np.linalg.norm(coords[p] - coords[q]))
        rhs = np.append(
            [VG(np.linalg.norm(coords[p] - node)) for p in range(3)], 1.0
        )
        sol = np.linalg.solve(a, rhs)
        np.testing.assert_allclose(w[:, j], sol[:3], atol=1e-9)
        np.testing.assert_allclose(mu[j], sol[3], atol=1e-9)


def test_weights_sum_to_one_every_node():
    rng = np.random.default_rng(4)
    coords = rng.uniform(0, 300_000.0, size=(40, 2))
    grid = GridSpec(nx=16, ny=16, dx_m=20_000.0, origin_e=0.0, origin_n=0.0)
    solver = KrigingSolver(coords, VG)
    w, _ = solver.weights(grid.node_coords())
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-10)


def test_translation_invariance():
    rng = np.random.default_rng(5)
    coords = rng.uniform(0, 100_000.0, size=(12, 2))
    values = rng.normal(size=12)
    targets = rng.uniform(0, 100_000.0, size=(20, 2))
    base = KrigingSolver(coords, VG).estimate(values, targets)
    shift = np.array([123_456.0, -98_765.0])
    moved = KrigingSolver(coords + shift, VG).estimate(values, targets + shift)
    np.testing.assert_allclose(moved, base, atol=1e-9)


def test_masked_nodes_exactly_zero():
    grid = GridSpec(nx=8, ny=8, dx_m=10_000.0, origin_e=0.0, origin_n=0.0)
    land = np.zeros((8, 8), dtype=bool)
    land[3:5, 3:5] = True
    masks = build_masks(land, grid, buffer_km=10.0)
    rng = np.random.default_rng(6)
    coords = rng.uniform(20_000.0, 50_000.0, size=(5, 2))
    field = krige_field(rng.normal(size=5), coords, VG, grid, masks)
    outside = ~masks.enlarged
    assert np.all(field.values[outside] == 0.0)
    assert np.all(np.isfinite(field.values[masks.enlarged]))


def test_duplicate_stations_rejected():
    coords = np.array([[0.0, 0.0], [10.0, 10.0], [10.0, 10.0]])
    with pytest.raises(NumericError, match="rows 1 and 2"):
        KrigingSolver(coords, VG)


def test_factorization_reused_across_snapshots():
    rng = np.random.default_rng(7)
    coords = rng.uniform(0, 80_000.0, size=(10, 2))
    grid = GridSpec(nx=6, ny=6, dx_m=16_000.0, origin_e=0.0, origin_n=0.0)
    masks = _all_land(grid)
    values = rng.normal(size=(4, 10))
    batch = krige_fields(values, coords, VG, grid, masks)
    singles = [krige_field(values[t], coords, VG, grid, masks) for t in range(4)]
    for got, want in zip(batch, singles):
        # BLAS blocking differs between the batched and single matmuls
        np.testing.assert_allclose(got.values, want.values, rtol=1e-12, atol=1e-12)


def test_roundtrip_zero_for_node_coincident_stations():
    grid = GridSpec(nx=6, ny=6, dx_m=10_000.0, origin_e=0.0, origin_n=0.0)
    masks = _all_land(grid)
    nodes = grid.node_coords()
    coords = nodes[[7, 14, 21, 28]]
    rng = np.random.default_rng(8)
    values = rng.normal(size=(3, 4))
    per_station, mean = roundtrip_report(values, coords, VG, grid, masks)
    assert mean < 1e-6
    assert np.all(per_station < 1e-6)
