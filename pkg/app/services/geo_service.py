"""
Spherical geometry used by every stage: great-circle distance, bounding-box
centroids and containment, and weighted spherical centers.

Distances use the haversine formula on a sphere of radius 6371.0088 km (IUGG
mean radius). Antimeridian boxes (west > east) are handled as the union of
[west, 180] and [-180, east].
"""

import math
from typing import Sequence, Union

import numpy as np

from app.models import BoundingBox, GeoPoint

EARTH_RADIUS_KM = 6371.0088
KM_PER_DEGREE = EARTH_RADIUS_KM * math.pi / 180.0


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km between two coordinate pairs."""
    # Canonical argument order makes the result bit-identical under swapping.
    if (lat1, lon1) > (lat2, lon2):
        lat1, lon1, lat2, lon2 = lat2, lon2, lat1, lon1
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, a)))


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    return haversine(a.lat, a.lon, b.lat, b.lon)


def centroid(box: BoundingBox) -> GeoPoint:
    """
    Midpoint of the latitude and longitude ranges. For antimeridian boxes the
    longitude midpoint runs eastward from west across 180 and is renormalized
    to [-180, 180).
    """
    lat = (box.south + box.north) / 2.0
    if not box.crosses_antimeridian:
        return GeoPoint(lat=lat, lon=(box.west + box.east) / 2.0)
    span = (box.east + 360.0) - box.west
    lon = box.west + span / 2.0
    if lon >= 180.0:
        lon -= 360.0
    return GeoPoint(lat=lat, lon=lon)


def _lon_interval(box: BoundingBox) -> tuple[float, float]:
    """Longitude extent on an unwrapped axis: east may exceed 180."""
    if box.crosses_antimeridian:
        return box.west, box.east + 360.0
    return box.west, box.east


def _lon_aliases(lon: float) -> tuple[float, ...]:
    # -180 and 180 are the same meridian
    if abs(lon) == 180.0:
        return (-180.0, 180.0)
    return (lon,)


def _contains_point(outer: BoundingBox, p: GeoPoint) -> bool:
    if not outer.south <= p.lat <= outer.north:
        return False
    for lon in _lon_aliases(p.lon):
        if outer.crosses_antimeridian:
            if lon >= outer.west or lon <= outer.east:
                return True
        elif outer.west <= lon <= outer.east:
            return True
    return False


def _contains_box(outer: BoundingBox, inner: BoundingBox) -> bool:
    if not (outer.south <= inner.south and inner.north <= outer.north):
        return False
    ow, oe = _lon_interval(outer)
    if oe - ow >= 360.0:
        return True
    iw, ie = _lon_interval(inner)
    if ie - iw >= 360.0:
        return False
    for shift in (0.0, 360.0, -360.0):
        if ow <= iw + shift and ie + shift <= oe:
            return True
    return False


def contains(outer: BoundingBox, inner: Union[BoundingBox, GeoPoint]) -> bool:
    """True iff inner lies entirely within outer; boundaries count as inside."""
    if isinstance(inner, GeoPoint):
        return _contains_point(outer, inner)
    return _contains_box(outer, inner)


def weighted_center(points: Sequence[GeoPoint], weights: Sequence[float]) -> GeoPoint:
    """
    Weighted mean position on the sphere (mean of unit vectors, projected back).
    Falls back to equal weights when all weights are zero.
    """
    if not points:
        raise ValueError("weighted_center needs at least one point")
    lat = np.radians([p.lat for p in points])
    lon = np.radians([p.lon for p in points])
    w = np.asarray(weights, dtype=float)
    if not np.any(w > 0):
        w = np.ones_like(lat)
    xyz = np.column_stack((np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)))
    x, y, z = np.average(xyz, axis=0, weights=w)
    if math.hypot(x, y) == 0 and z == 0:
        # antipodal cancellation; no meaningful center
        return points[int(np.argmax(w))]
    return GeoPoint(
        lat=float(np.clip(np.degrees(math.atan2(z, math.hypot(x, y))), -90.0, 90.0)),
        lon=float(np.clip(np.degrees(math.atan2(y, x)), -180.0, 180.0)),
    )
