"""Country assignment by point-in-polygon lookup with nearest-centroid fallback.

Boundaries load from a GeoJSON FeatureCollection whose features carry a
two-letter country code in properties["code"] (ISO 3166-1 alpha-2). Rings are
stored as (lat, lon) vertex lists, closed first==last. Containment is planar
even-odd ray casting in lat/lon space; polygons crossing the +-180 meridian
are split at load time so queries never have to reason about wraparound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

EARTH_RADIUS_KM = 6371.0

# Rings whose endpoints differ by at most this are auto-closed.
RING_CLOSE_TOLERANCE_DEG = 1e-9


class BoundaryError(ValueError):
    """Bad boundary file: unclosed ring, duplicate code, missing geometry."""


Point = tuple[float, float]  # (lat, lon)
Ring = list[Point]


def haversine(p1: Point, p2: Point) -> float:
    """Great-circle distance in kilometers between (lat, lon) points, R = 6371 km."""
    lat1, lon1 = p1
    lat2, lon2 = p2
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.atan2(math.sqrt(a), math.sqrt(1.0 - a))


@dataclass
class CountryPolygon:
    """One polygon: outer ring plus optional holes, with a precomputed bbox."""

    rings: list[Ring]
    lat_min: float = 0.0
    lat_max: float = 0.0
    lon_min: float = 0.0
    lon_max: float = 0.0

    def __post_init__(self):
        if not self.rings or not self.rings[0]:
            raise BoundaryError("polygon has no outer ring")
        lats = [p[0] for ring in self.rings for p in ring]
        lons = [p[1] for ring in self.rings for p in ring]
        self.lat_min, self.lat_max = min(lats), max(lats)
        self.lon_min, self.lon_max = min(lons), max(lons)

    def bbox_contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max


@dataclass
class CountryShape:
    code: str
    name: str
    polygons: list[CountryPolygon]
    centroid: Point = (0.0, 0.0)


@dataclass
class CountryPolygonSet:
    """Immutable after load; lookups are pure and parallel-safe."""

    countries: list[CountryShape] = field(default_factory=list)

    def __post_init__(self):
        self.countries.sort(key=lambda c: c.code)
        codes = [c.code for c in self.countries]
        if len(codes) != len(set(codes)):
            raise BoundaryError("duplicate country codes in set")

    def codes(self) -> list[str]:
        return [c.code for c in self.countries]

    def get(self, code: str) -> CountryShape:
        for c in self.countries:
            if c.code == code:
                return c
        raise KeyError(code)


def _on_segment(lat: float, lon: float, a: Point, b: Point) -> bool:
    (y1, x1), (y2, x2) = a, b
    cross = (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1)
    if cross != 0.0:
        return False
    return min(x1, x2) <= lon <= max(x1, x2) and min(y1, y2) <= lat <= max(y1, y2)


def point_in_polygon(lat: float, lon: float, polygon: CountryPolygon) -> bool:
    """Even-odd ray casting over all rings (holes included); boundary counts as inside.

    The crossing test uses the half-open edge rule (strict comparison on both
    endpoints' latitudes) so shared vertices are never double-counted.
    """
    inside = False
    for ring in polygon.rings:
        for i in range(len(ring) - 1):
            a, b = ring[i], ring[i + 1]
            if _on_segment(lat, lon, a, b):
                return True
            (y1, x1), (y2, x2) = a, b
            if (y1 > lat) != (y2 > lat):
                x_int = x1 + (lat - y1) * (x2 - x1) / (y2 - y1)
                if lon < x_int:
                    inside = not inside
    return inside


def country_contains(lat: float, lon: float, country: CountryShape) -> bool:
    for polygon in country.polygons:
        if polygon.bbox_contains(lat, lon) and point_in_polygon(lat, lon, polygon):
            return True
    return False


def assign_country(
    lat: float,
    lon: float,
    pset: CountryPolygonSet,
    fallback_km: float = 25.0,
) -> Optional[str]:
    """Country code for a point, or None if unassignable.

    First containing polygon wins; candidates are bbox-prefiltered and tried
    in ascending code order so shared borders resolve deterministically. If
    no polygon contains the point, the nearest country by centroid-to-point
    haversine within fallback_km wins.
    """
    for country in pset.countries:
        for polygon in country.polygons:
            if polygon.bbox_contains(lat, lon) and point_in_polygon(lat, lon, polygon):
                return country.code
    best: Optional[str] = None
    best_dist = fallback_km
    for country in pset.countries:
        dist = haversine((lat, lon), country.centroid)
        if dist < best_dist or (dist == best_dist and best is None):
            best = country.code
            best_dist = dist
    return best


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _close_ring(ring: Ring, feature_name: str) -> Ring:
    if len(ring) < 3:
        raise BoundaryError(f"feature {feature_name!r}: ring has fewer than 3 vertices")
    first, last = ring[0], ring[-1]
    if first == last:
        return ring
    if abs(first[0] - last[0]) <= RING_CLOSE_TOLERANCE_DEG and abs(first[1] - last[1]) <= RING_CLOSE_TOLERANCE_DEG:
        return ring + [first]
    raise BoundaryError(f"feature {feature_name!r}: ring is not closed")


def _ring_crosses_antimeridian(ring: Ring) -> bool:
    return any(abs(ring[i + 1][1] - ring[i][1]) > 180.0 for i in range(len(ring) - 1))


def _unwrap_ring(ring: Ring) -> Ring:
    # Shift negative longitudes by +360 so a crossing ring becomes continuous.
    return [(lat, lon + 360.0 if lon < 0 else lon) for lat, lon in ring]


def _clip_ring_halfplane(ring: Ring, keep_west: bool, boundary: float = 180.0) -> Ring:
    """Sutherland-Hodgman clip of a closed ring against lon <= boundary (west)
    or lon >= boundary (east). Returns a closed ring, possibly empty."""

    def inside(p: Point) -> bool:
        return p[1] <= boundary if keep_west else p[1] >= boundary

    def intersect(a: Point, b: Point) -> Point:
        t = (boundary - a[1]) / (b[1] - a[1])
        return (a[0] + t * (b[0] - a[0]), boundary)

    out: Ring = []
    pts = ring[:-1]
    for i in range(len(pts)):
        cur, nxt = pts[i], pts[(i + 1) % len(pts)]
        if inside(cur):
            out.append(cur)
            if not inside(nxt):
                out.append(intersect(cur, nxt))
        elif inside(nxt):
            out.append(intersect(cur, nxt))
    if len(out) < 3:
        return []
    if out[0] != out[-1]:
        out.append(out[0])
    return out


def split_polygon_at_antimeridian(rings: list[Ring]) -> list[list[Ring]]:
    """Split a polygon whose edges cross +-180 into west and east parts.

    Non-crossing polygons come back unchanged (single part).
    """
    if not any(_ring_crosses_antimeridian(r) for r in rings):
        return [rings]
    unwrapped = [_unwrap_ring(r) for r in rings]
    west_rings = []
    east_rings = []
    for ring in unwrapped:
        west = _clip_ring_halfplane(ring, keep_west=True)
        east = _clip_ring_halfplane(ring, keep_west=False)
        if west:
            west_rings.append(west)
        if east:
            east_rings.append([(lat, lon - 360.0) for lat, lon in east])
    parts = []
    if west_rings:
        parts.append(west_rings)
    if east_rings:
        parts.append(east_rings)
    return parts


def _ring_area_centroid(ring: Ring) -> tuple[float, Point]:
    """Unsigned shoelace area (deg^2) and centroid of a closed ring in lat/lon."""
    area2 = 0.0
    cx = 0.0
    cy = 0.0
    for i in range(len(ring) - 1):
        (y1, x1), (y2, x2) = ring[i], ring[i + 1]
        cross = x1 * y2 - x2 * y1
        area2 += cross
        cx += (x1 + x2) * cross
        cy += (y1 + y2) * cross
    if area2 == 0.0:
        lat = sum(p[0] for p in ring[:-1]) / (len(ring) - 1)
        lon = sum(p[1] for p in ring[:-1]) / (len(ring) - 1)
        return 0.0, (lat, lon)
    centroid = (cy / (3.0 * area2), cx / (3.0 * area2))
    return abs(area2) / 2.0, centroid


def _country_centroid(polygons: list[CountryPolygon]) -> Point:
    total = 0.0
    acc_lat = 0.0
    acc_lon = 0.0
    for polygon in polygons:
        for k, ring in enumerate(polygon.rings):
            area, (clat, clon) = _ring_area_centroid(ring)
            weight = area if k == 0 else -area
            total += weight
            acc_lat += weight * clat
            acc_lon += weight * clon
    if total == 0.0:
        pts = [p for poly in polygons for p in poly.rings[0][:-1]]
        return (
            sum(p[0] for p in pts) / len(pts),
            sum(p[1] for p in pts) / len(pts),
        )
    return (acc_lat / total, acc_lon / total)


def _rings_from_geojson(coords: Sequence, feature_name: str) -> list[Ring]:
    rings: list[Ring] = []
    for raw_ring in coords:
        ring = [(float(lat), float(lon)) for lon, lat in raw_ring]
        rings.append(_close_ring(ring, feature_name))
    return rings


def load_boundaries(path: Path | str) -> CountryPolygonSet:
    """Load a GeoJSON FeatureCollection of country polygons.

    Each feature needs properties["code"] (alpha-2) and a Polygon or
    MultiPolygon geometry with [lon, lat] coordinates. Polygons crossing the
    antimeridian are split; bounding boxes and area-weighted centroids are
    precomputed.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("type") != "FeatureCollection":
        raise BoundaryError(f"{path}: expected a GeoJSON FeatureCollection")

    countries: dict[str, CountryShape] = {}
    for feature in doc.get("features", []):
        props = feature.get("properties") or {}
        code = props.get("code")
        if not code:
            raise BoundaryError(f"{path}: feature missing properties.code")
        code = str(code).upper()
        name = str(props.get("name", code))
        if code in countries:
            raise BoundaryError(f"{path}: duplicate country code {code!r}")
        geometry = feature.get("geometry") or {}
        gtype = geometry.get("type")
        if gtype == "Polygon":
            polygon_coords = [geometry["coordinates"]]
        elif gtype == "MultiPolygon":
            polygon_coords = geometry["coordinates"]
        else:
            raise BoundaryError(f"{path}: feature {code!r} has unsupported geometry {gtype!r}")

        polygons: list[CountryPolygon] = []
        for coords in polygon_coords:
            rings = _rings_from_geojson(coords, code)
            for part in split_polygon_at_antimeridian(rings):
                polygons.append(CountryPolygon(rings=part))
        shape = CountryShape(code=code, name=name, polygons=polygons)
        shape.centroid = _country_centroid(polygons)
        countries[code] = shape

    return CountryPolygonSet(countries=list(countries.values()))
