"""
WGS-84 coordinate conversions
Geodetic <-> ECEF and local tangent-plane offsets in meters
"""

import math
import warnings
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from .errors import NearSingularAxis, OutOfRangeCoordinate, TooFarApart

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

# local tangent-plane validity window, degrees per axis
MAX_LOCAL_OFFSET_DEG = 1.0


class GeodeticPoint(NamedTuple):
    lat_deg: float
    lon_deg: float
    alt_m: float = 0.0


class EcefPoint(NamedTuple):
    x: float
    y: float
    z: float


def _check_geodetic(p: GeodeticPoint) -> None:
    if not (-90.0 <= p.lat_deg <= 90.0) or not (-180.0 <= p.lon_deg <= 180.0):
        raise OutOfRangeCoordinate(f"Geodetic point out of range: {p}")


def prime_vertical_radius(lat_deg: float) -> float:
    """N(phi), radius of curvature in the prime vertical"""
    s = math.sin(math.radians(lat_deg))
    return WGS84_A / math.sqrt(1.0 - WGS84_E2 * s * s)


def meridian_radius(lat_deg: float) -> float:
    """M(phi), radius of curvature in the meridian"""
    s = math.sin(math.radians(lat_deg))
    return WGS84_A * (1.0 - WGS84_E2) / (1.0 - WGS84_E2 * s * s) ** 1.5


def geodetic_to_ecef(p: GeodeticPoint) -> EcefPoint:
    """
    Closed-form WGS-84 forward transform.

    Args:
        p (GeodeticPoint): Latitude/longitude in degrees, altitude above the ellipsoid in meters.

    Returns:
        EcefPoint: Earth-centered Earth-fixed coordinates in meters.
    """
    _check_geodetic(p)
    lat = math.radians(p.lat_deg)
    lon = math.radians(p.lon_deg)
    n = prime_vertical_radius(p.lat_deg)
    cos_lat = math.cos(lat)
    return EcefPoint(
        (n + p.alt_m) * cos_lat * math.cos(lon),
        (n + p.alt_m) * cos_lat * math.sin(lon),
        (n * (1.0 - WGS84_E2) + p.alt_m) * math.sin(lat),
    )


def ecef_to_geodetic(p: EcefPoint, max_iterations: int = 50) -> GeodeticPoint:
    """
    Iterative WGS-84 inverse transform.

    Within 1 m of the polar axis longitude is undefined: a NearSingularAxis
    warning is issued and longitude 0 returned.

    Args:
        p (EcefPoint): ECEF coordinates in meters.
        max_iterations (int): Latitude iteration cap.

    Returns:
        GeodeticPoint: Latitude/longitude in degrees and ellipsoidal altitude in meters.
    """
    x, y, z = p
    r = math.hypot(x, y)
    if r < 1.0:
        warnings.warn(NearSingularAxis(f"Point {p} is within 1 m of the polar axis"), stacklevel=2)
        lon = 0.0
    else:
        lon = math.atan2(y, x)

    lat = math.atan2(z, r * (1.0 - WGS84_E2))
    for _ in range(max_iterations):
        s = math.sin(lat)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * s * s)
        new_lat = math.atan2(z + WGS84_E2 * n * s, r)
        if abs(new_lat - lat) < 1e-15:
            lat = new_lat
            break
        lat = new_lat

    s = math.sin(lat)
    # height form that stays well conditioned at the poles
    alt = r * math.cos(lat) + z * s - WGS84_A * math.sqrt(1.0 - WGS84_E2 * s * s)
    return GeodeticPoint(math.degrees(lat), math.degrees(lon), alt)


def _wrap_lon_delta(delta_deg: float) -> float:
    return (delta_deg + 180.0) % 360.0 - 180.0


def enu_offset_m(ref: GeodeticPoint, p: GeodeticPoint) -> Tuple[float, float]:
    """
    East/north offset of p from ref on the tangent plane at ref.

    Args:
        ref (GeodeticPoint): Reference point.
        p (GeodeticPoint): Point within 1 degree of ref on each axis.

    Returns:
        Tuple[float, float]: (east_m, north_m).
    """
    d_lat = p.lat_deg - ref.lat_deg
    d_lon = _wrap_lon_delta(p.lon_deg - ref.lon_deg)
    if abs(d_lat) >= MAX_LOCAL_OFFSET_DEG or abs(d_lon) >= MAX_LOCAL_OFFSET_DEG:
        raise TooFarApart(f"{p} is more than {MAX_LOCAL_OFFSET_DEG} deg from {ref}")
    east = math.radians(d_lon) * prime_vertical_radius(ref.lat_deg) * math.cos(math.radians(ref.lat_deg))
    north = math.radians(d_lat) * meridian_radius(ref.lat_deg)
    return east, north


def enu_offsets_m(ref: GeodeticPoint, lats: Sequence[float], lons: Sequence[float]) -> np.ndarray:
    """Vectorized enu_offset_m; returns an (n, 2) array of east/north meters."""
    d_lat = np.asarray(lats, dtype=float) - ref.lat_deg
    d_lon = (np.asarray(lons, dtype=float) - ref.lon_deg + 180.0) % 360.0 - 180.0
    if d_lat.size and (np.max(np.abs(d_lat)) >= MAX_LOCAL_OFFSET_DEG or np.max(np.abs(d_lon)) >= MAX_LOCAL_OFFSET_DEG):
        raise TooFarApart(f"Track extends more than {MAX_LOCAL_OFFSET_DEG} deg from {ref}")
    east = np.radians(d_lon) * prime_vertical_radius(ref.lat_deg) * math.cos(math.radians(ref.lat_deg))
    north = np.radians(d_lat) * meridian_radius(ref.lat_deg)
    return np.column_stack((east, north))


def offset_to_geodetic(ref: GeodeticPoint, east_m: float, north_m: float) -> GeodeticPoint:
    """Inverse of enu_offset_m; altitude is carried over from ref."""
    lat = ref.lat_deg + math.degrees(north_m / meridian_radius(ref.lat_deg))
    lon_scale = prime_vertical_radius(ref.lat_deg) * math.cos(math.radians(ref.lat_deg))
    lon = _wrap_lon_delta(ref.lon_deg + math.degrees(east_m / lon_scale))
    return GeodeticPoint(lat, lon, ref.alt_m)


def enu_rotation(ref: GeodeticPoint) -> np.ndarray:
    """3x3 matrix whose rows are the east, north and up unit vectors at ref, in ECEF"""
    lat = math.radians(ref.lat_deg)
    lon = math.radians(ref.lon_deg)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])
