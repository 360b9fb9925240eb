"""Geodetic primitives: WGS84 points, local tangent-plane (ENU) conversion,
and great-circle (haversine) distance.

All polygon geometry at plant scale is done on a local equirectangular
tangent plane; errors are negligible for sub-kilometer extents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# IUGG mean Earth radius, meters.
MEAN_EARTH_RADIUS_M = 6_371_008.8

# Local-tangent linearization is only trusted out to this range.
MAX_TANGENT_RANGE_M = 100_000.0


class GeodesyError(ValueError):
    """Raised for invalid geodetic inputs or out-of-range tangent-plane use."""


def _normalize_lon(lon: float) -> float:
    """Wrap longitude into [-180, 180)."""
    lon = math.fmod(lon + 180.0, 360.0)
    if lon < 0:
        lon += 360.0
    return lon - 180.0


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 point. Longitude is normalized to [-180, 180) on construction."""

    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise GeodesyError(f"latitude out of range: {self.lat}")
        if not math.isfinite(self.lon) or not math.isfinite(self.alt):
            raise GeodesyError("non-finite longitude or altitude")
        object.__setattr__(self, "lon", _normalize_lon(self.lon))


@dataclass(frozen=True)
class EnuOffset:
    east: float
    north: float
    up: float = 0.0

    def __post_init__(self):
        if not all(map(math.isfinite, (self.east, self.north, self.up))):
            raise GeodesyError("non-finite ENU component")

    def horizontal_norm(self) -> float:
        return math.hypot(self.east, self.north)


@dataclass(frozen=True)
class EarthModel:
    radius: float = MEAN_EARTH_RADIUS_M

    def __post_init__(self):
        if self.radius <= 0:
            raise GeodesyError("earth radius must be positive")


DEFAULT_EARTH = EarthModel()


@dataclass(frozen=True)
class GeoPolygon:
    """Ordered ring of WGS84 vertices; the closing edge is implied."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple(self.vertices)
        if len(verts) < 3:
            raise GeodesyError("polygon needs at least 3 vertices")
        for a, b in zip(verts, verts[1:]):
            if a.lat == b.lat and a.lon == b.lon:
                raise GeodesyError("consecutive duplicate polygon vertices")
        object.__setattr__(self, "vertices", verts)


def haversine_distance(a: GeoPoint, b: GeoPoint, earth: EarthModel = DEFAULT_EARTH) -> float:
    """Great-circle distance in meters between two points on the mean sphere."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlmb = math.radians(b.lon - a.lon)
    s = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    # Guard tiny negative / >1 excursions from roundoff.
    s = min(1.0, max(0.0, s))
    return 2.0 * earth.radius * math.asin(math.sqrt(s))


def geo_to_enu(origin: GeoPoint, p: GeoPoint, earth: EarthModel = DEFAULT_EARTH) -> EnuOffset:
    """Equirectangular tangent-plane offset of ``p`` relative to ``origin``.

    East is scaled by the cosine of the *midpoint* latitude, which keeps the
    approximation second-order accurate (sub-1e-6 relative error against the
    great-circle distance for baselines under 1 km at survey latitudes).
    """
    lat_mid = math.radians((origin.lat + p.lat) / 2.0)
    east = earth.radius * math.cos(lat_mid) * math.radians(p.lon - origin.lon)
    north = earth.radius * math.radians(p.lat - origin.lat)
    if math.hypot(east, north) > MAX_TANGENT_RANGE_M:
        raise GeodesyError("points farther than 100 km apart: tangent plane invalid")
    return EnuOffset(east=east, north=north, up=p.alt - origin.alt)


def enu_to_geo(origin: GeoPoint, off: EnuOffset, earth: EarthModel = DEFAULT_EARTH) -> GeoPoint:
    """Exact algebraic inverse of :func:`geo_to_enu`'s linearization."""
    if off.horizontal_norm() > MAX_TANGENT_RANGE_M:
        raise GeodesyError("offset exceeds 100 km: tangent plane invalid")
    lat = origin.lat + math.degrees(off.north / earth.radius)
    lat_mid = math.radians((origin.lat + lat) / 2.0)
    lon = origin.lon + math.degrees(off.east / (earth.radius * math.cos(lat_mid)))
    return GeoPoint(lat=lat, lon=lon, alt=origin.alt + off.up)


def polygon_centroid(poly: GeoPolygon, earth: EarthModel = DEFAULT_EARTH):
    """Area-weighted centroid of a polygon, computed on the ENU plane anchored
    at the first vertex and mapped back to WGS84.

    Returns (centroid: GeoPoint, degenerate: bool). Zero-area polygons fall
    back to the vertex mean and are flagged degenerate.
    """
    anchor = poly.vertices[0]
    pts = [geo_to_enu(anchor, v, earth) for v in poly.vertices]
    xy = [(p.east, p.north) for p in pts]
    area2 = 0.0
    cx = 0.0
    cy = 0.0
    n = len(xy)
    for i in range(n):
        x0, y0 = xy[i]
        x1, y1 = xy[(i + 1) % n]
        cross = x0 * y1 - x1 * y0
        area2 += cross
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    if abs(area2) < 1e-12:
        mx = sum(x for x, _ in xy) / n
        my = sum(y for _, y in xy) / n
        return enu_to_geo(anchor, EnuOffset(east=mx, north=my), earth), True
    cx /= 3.0 * area2
    cy /= 3.0 * area2
    return enu_to_geo(anchor, EnuOffset(east=cx, north=cy), earth), False
