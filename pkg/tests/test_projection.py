"""Projection against an independently derived transverse-Mercator series.

The oracle below follows the classic USGS map-projections working manual
formulation (meridian-arc power series in the eccentricity plus the
tan/cos expansion in longitude offset), which shares no code or algebra
with the production implementation's third-flattening series.
"""

import math

import numpy as np
import pytest

from tptkit.errors import RangeError
from tptkit.projection import project

A = 6378137.0
F = 1.0 / 298.257222101
E2 = F * (2.0 - F)
EP2 = E2 / (1.0 - E2)
K0 = 0.9996
LON0 = math.radians(127.5)
LAT0 = math.radians(38.0)
FE, FN = 1_000_000.0, 2_000_000.0


def _meridian_arc(phi):
    return A * (
        (1 - E2 / 4 - 3 * E2**2 / 64 - 5 * E2**3 / 256) * phi
        - (3 * E2 / 8 + 3 * E2**2 / 32 + 45 * E2**3 / 1024) * math.sin(2 * phi)
        + (15 * E2**2 / 256 + 45 * E2**3 / 1024) * math.sin(4 * phi)
        - (35 * E2**3 / 3072) * math.sin(6 * phi)
    )


def snyder_tm(lat_deg, lon_deg):
    phi = math.radians(lat_deg)
    lam = math.radians(lon_deg)
    n = A / math.sqrt(1 - E2 * math.sin(phi) ** 2)
    t = math.tan(phi) ** 2
    c = EP2 * math.cos(phi) ** 2
    a_ = (lam - LON0) * math.cos(phi)
    m = _meridian_arc(phi)
    m0 = _meridian_arc(LAT0)
    x = K0 * n * (
        a_
        + (1 - t + c) * a_**3 / 6
        + (5 - 18 * t + t**2 + 72 * c - 58 * EP2) * a_**5 / 120
    )
    y = K0 * (
        m
        - m0
        + n
        * math.tan(phi)
        * (
            a_**2 / 2
            + (5 - t + 9 * c + 4 * c**2) * a_**4 / 24
            + (61 - 58 * t + t**2 + 600 * c - 330 * EP2) * a_**6 / 720
        )
    )
    return FE + x, FN + y


def test_origin_maps_to_false_offsets():
    e, n = project(38.0, 127.5)
    assert abs(e - 1_000_000.0) < 1e-6
    assert abs(n - 2_000_000.0) < 1e-6


def test_seoul_against_independent_series():
    e, n = project(37.5665, 126.9780)
    oe, on = snyder_tm(37.5665, 126.9780)
    assert abs(e - oe) < 1.0
    assert abs(n - on) < 1.0
    # frozen values computed with the oracle above
    assert abs(e - 953901.17) < 1.0
    assert abs(n - 1952032.08) < 1.0


def test_domain_grid_within_one_metre():
    lats = np.linspace(33.041, 38.710, 7)
    lons = np.linspace(124.839, 131.945, 7)
    for lat in lats:
        for lon in lons:
            e, n = project(float(lat), float(lon))
            oe, on = snyder_tm(float(lat), float(lon))
            assert math.hypot(e - oe, n - on) < 1.0


def test_easting_monotone_in_longitude():
    es = [project(36.0, lon)[0] for lon in np.linspace(125.0, 131.0, 13)]
    assert all(b > a for a, b in zip(es, es[1:]))


def test_bbox_enforcement():
    bbox = (33.041, 38.710, 124.839, 131.945)
    with pytest.raises(RangeError):
        project(40.0, 127.0, bbox=bbox)
    with pytest.raises(RangeError):
        project(36.0, 124.0, bbox=bbox)


def test_vectorized_matches_scalar():
    lats = np.array([34.0, 36.5, 38.0])
    lons = np.array([126.0, 127.5, 129.0])
    ee, nn = project(lats, lons)
    for i in range(3):
        e, n = project(float(lats[i]), float(lons[i]))
        assert abs(ee[i] - e) < 1e-9
        assert abs(nn[i] - n) < 1e-9
