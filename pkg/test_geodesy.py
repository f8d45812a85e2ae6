"""
Tests for WGS-84 conversions and local offsets
"""

import math
import warnings

import numpy as np
import pytest

from src.vehicle_tracker.errors import NearSingularAxis, OutOfRangeCoordinate, TooFarApart
from src.vehicle_tracker.geodesy import (
    WGS84_A,
    WGS84_B,
    EcefPoint,
    GeodeticPoint,
    ecef_to_geodetic,
    enu_offset_m,
    enu_offsets_m,
    enu_rotation,
    geodetic_to_ecef,
    meridian_radius,
    offset_to_geodetic,
)


class TestEcef:
    def test_equator_prime_meridian(self):
        p = geodetic_to_ecef(GeodeticPoint(0.0, 0.0, 0.0))
        assert p.x == pytest.approx(6378137.0, abs=1e-6)
        assert p.y == pytest.approx(0.0, abs=1e-6)
        assert p.z == pytest.approx(0.0, abs=1e-6)

    def test_north_pole(self):
        p = geodetic_to_ecef(GeodeticPoint(90.0, 0.0, 0.0))
        assert p.z == pytest.approx(WGS84_B, abs=1e-3)
        assert abs(p.x) < 1e-6

    def test_equator_east(self):
        p = geodetic_to_ecef(GeodeticPoint(0.0, 90.0, 100.0))
        assert p.y == pytest.approx(WGS84_A + 100.0, abs=1e-6)

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeCoordinate):
            geodetic_to_ecef(GeodeticPoint(91.0, 0.0))
        with pytest.raises(OutOfRangeCoordinate):
            geodetic_to_ecef(GeodeticPoint(0.0, 181.0))

    def test_round_trip_random(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            p = GeodeticPoint(
                float(rng.uniform(-89.9, 89.9)),
                float(rng.uniform(-180.0, 180.0)),
                float(rng.uniform(-500.0, 30000.0)),
            )
            back = ecef_to_geodetic(geodetic_to_ecef(p))
            assert back.lat_deg == pytest.approx(p.lat_deg, abs=1e-9)
            lon_diff = (back.lon_deg - p.lon_deg + 180.0) % 360.0 - 180.0
            assert abs(lon_diff) < 1e-9
            assert back.alt_m == pytest.approx(p.alt_m, abs=1e-3)

    def test_pole_altitude_well_defined(self):
        back = ecef_to_geodetic(geodetic_to_ecef(GeodeticPoint(-90.0, 0.0, 250.0)))
        assert back.lat_deg == pytest.approx(-90.0, abs=1e-9)
        assert back.alt_m == pytest.approx(250.0, abs=1e-3)

    def test_polar_axis_warns_and_returns_zero_longitude(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            p = ecef_to_geodetic(EcefPoint(0.1, 0.2, WGS84_B + 10.0))
        assert any(issubclass(w.category, NearSingularAxis) for w in caught)
        assert p.lon_deg == 0.0
        assert p.lat_deg == pytest.approx(90.0, abs=1e-5)


class TestLocalOffsets:
    def test_zero_offset(self):
        ref = GeodeticPoint(40.0, 44.5)
        assert enu_offset_m(ref, ref) == (0.0, 0.0)

    def test_one_arcminute_north_at_equator(self):
        east, north = enu_offset_m(GeodeticPoint(0.0, 0.0), GeodeticPoint(1.0 / 60.0, 0.0))
        assert east == 0.0
        assert north == pytest.approx(1842.9, abs=0.1)
        assert north == pytest.approx(math.radians(1.0 / 60.0) * meridian_radius(0.0))

    def test_antisymmetric_for_small_offsets(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            a = GeodeticPoint(float(rng.uniform(-60, 60)), float(rng.uniform(-170, 170)))
            b = GeodeticPoint(a.lat_deg + float(rng.uniform(-1e-5, 1e-5)), a.lon_deg + float(rng.uniform(-1e-5, 1e-5)))
            e1, n1 = enu_offset_m(a, b)
            e2, n2 = enu_offset_m(b, a)
            assert e1 == pytest.approx(-e2, abs=1e-4)
            assert n1 == pytest.approx(-n2, abs=1e-4)

    def test_matches_rotated_ecef_difference(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            ref = GeodeticPoint(float(rng.uniform(-70, 70)), float(rng.uniform(-170, 170)))
            p = GeodeticPoint(ref.lat_deg + float(rng.uniform(-1e-6, 1e-6)), ref.lon_deg + float(rng.uniform(-1e-6, 1e-6)))
            d = np.subtract(geodetic_to_ecef(p), geodetic_to_ecef(ref))
            enu = enu_rotation(ref) @ d
            east, north = enu_offset_m(ref, p)
            assert east == pytest.approx(enu[0], abs=1e-6)
            assert north == pytest.approx(enu[1], abs=1e-6)

    def test_dateline_wrap(self):
        east, _ = enu_offset_m(GeodeticPoint(0.0, 179.9999), GeodeticPoint(0.0, -179.9999))
        assert east == pytest.approx(math.radians(0.0002) * WGS84_A, rel=1e-6)

    def test_too_far_apart(self):
        with pytest.raises(TooFarApart):
            enu_offset_m(GeodeticPoint(0.0, 0.0), GeodeticPoint(1.5, 0.0))
        with pytest.raises(TooFarApart):
            enu_offsets_m(GeodeticPoint(0.0, 0.0), [0.0, 0.2], [0.0, 1.2])

    def test_vectorized_matches_scalar(self):
        ref = GeodeticPoint(40.0, 44.5)
        lats = [40.001, 39.999, 40.0005]
        lons = [44.5, 44.502, 44.4991]
        out = enu_offsets_m(ref, lats, lons)
        for (e, n), lat, lon in zip(out, lats, lons):
            assert (e, n) == pytest.approx(enu_offset_m(ref, GeodeticPoint(lat, lon)))

    def test_offset_to_geodetic_inverts(self):
        ref = GeodeticPoint(-33.9, 151.2, 12.0)
        p = offset_to_geodetic(ref, 350.0, -125.0)
        assert p.alt_m == 12.0
        assert enu_offset_m(ref, p) == pytest.approx((350.0, -125.0), abs=1e-6)
