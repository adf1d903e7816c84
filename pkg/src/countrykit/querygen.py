"""Keyword-by-city crawl queries and per-city geographic bounding boxes.

Keyword queries are the full cross product "{city name} {keyword}" (e.g.
"London church"). Bounding boxes are half-width boxes around a city's GPS
location on a spherical earth; boxes crossing the antimeridian are split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

EARTH_RADIUS_M = 6_371_000.0

# Longitude scaling is clamped at high latitudes so city boxes near the poles
# stay finite.
_MAX_LAT_FOR_LON_SCALE = 85.0


class CityTableError(ValueError):
    """Malformed city table row."""


@dataclass(frozen=True)
class City:
    name: str
    country_code: str
    lat: float
    lon: float
    population: int

    def validate(self) -> None:
        if self.population < 0:
            raise CityTableError(f"population negative: {self.population}")
        if not (-90.0 <= self.lat <= 90.0):
            raise CityTableError(f"lat out of range: {self.lat}")
        if not (-180.0 <= self.lon < 180.0):
            raise CityTableError(f"lon out of range: {self.lon}")


@dataclass(frozen=True)
class GeoBBox:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if self.lat_min > self.lat_max:
            raise ValueError("lat_min > lat_max")
        if not (-90.0 <= self.lat_min and self.lat_max <= 90.0):
            raise ValueError("latitude bounds out of range")
        if not (-180.0 <= self.lon_min and self.lon_max <= 180.0):
            raise ValueError("longitude bounds out of range")

    def contains(self, lat: float, lon: float) -> bool:
        return (
            self.lat_min <= lat <= self.lat_max
            and self.lon_min <= lon <= self.lon_max
        )


@dataclass(frozen=True)
class QueryCounts:
    raw: int
    deduplicated: int


def load_city_table(path: Path | str, min_population: int = 1000) -> list[City]:
    """Load the tab-separated city table, keeping cities with population >= min_population.

    Columns: name, country_code, lat, lon, population. Lines starting with
    '#' are comments.
    """
    path = Path(path)
    cities: list[City] = []
    with path.open("r", encoding="utf-8") as f:
        for row_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise CityTableError(f"row {row_no}: expected 5 columns, got {len(parts)}")
            name, country_code, lat_s, lon_s, pop_s = parts
            try:
                city = City(
                    name=name.strip(),
                    country_code=country_code.strip().upper(),
                    lat=float(lat_s),
                    lon=float(lon_s),
                    population=int(pop_s),
                )
                city.validate()
            except (ValueError, CityTableError) as e:
                raise CityTableError(f"row {row_no}: {e}") from e
            if city.population >= min_population:
                cities.append(city)
    return cities


def load_keywords(path: Path | str) -> list[str]:
    """One keyword per line, UTF-8; blank lines and '#' comments skipped."""
    path = Path(path)
    keywords = []
    with path.open("r", encoding="utf-8") as f:
        for line in f:
            word = line.strip()
            if word and not word.startswith("#"):
                keywords.append(word)
    return keywords


def keyword_queries(cities: Sequence[City], keywords: Sequence[str]) -> Iterator[str]:
    """Yield the full cross product as "{city name} {keyword}", city-major order."""
    if not keywords:
        raise ValueError("keyword list is empty")
    if not cities:
        raise ValueError("city list is empty")
    for city in cities:
        for keyword in keywords:
            yield f"{city.name} {keyword}"


def raw_query_count(n_cities: int, n_keywords: int) -> int:
    """Raw query count is exactly |cities| * |keywords|."""
    return n_cities * n_keywords


def count_queries(cities: Sequence[City], keywords: Sequence[str]) -> QueryCounts:
    """Raw and exact-string-deduplicated counts for the cross product.

    The dedup count enumerates unique (name, keyword) strings, so duplicate
    city names collapse; the raw count is the arithmetic product.
    """
    raw = raw_query_count(len(cities), len(keywords))
    unique_names = {c.name for c in cities}
    unique_keywords = set(keywords)
    deduplicated = len({f"{n} {k}" for n in unique_names for k in unique_keywords})
    return QueryCounts(raw=raw, deduplicated=deduplicated)


def _normalize_lon(lon: float) -> float:
    lon = math.fmod(lon + 180.0, 360.0)
    if lon < 0:
        lon += 360.0
    return lon - 180.0


def bbox_around(lat: float, lon: float, half_width_km: float) -> list[GeoBBox]:
    """Boxes of +-half_width_km around a point on a spherical earth.

    dlat = d * 180 / (pi * R); dlon = dlat / cos(lat), with lat clamped to
    +-85 degrees for the longitude term. Latitude bounds are clamped to the
    poles; a box crossing the +-180 meridian is split into two boxes.
    """
    if not (-90.0 <= lat <= 90.0):
        raise ValueError(f"lat out of range: {lat}")
    if half_width_km <= 0:
        raise ValueError(f"half_width_km must be positive: {half_width_km}")
    lon = _normalize_lon(lon)

    d_m = half_width_km * 1000.0
    dlat = d_m * 180.0 / (math.pi * EARTH_RADIUS_M)
    lat_for_scale = max(-_MAX_LAT_FOR_LON_SCALE, min(_MAX_LAT_FOR_LON_SCALE, lat))
    dlon = dlat / math.cos(math.radians(lat_for_scale))

    lat_min = max(-90.0, lat - dlat)
    lat_max = min(90.0, lat + dlat)

    if dlon >= 180.0:
        return [GeoBBox(lat_min, lat_max, -180.0, 180.0)]

    lon_lo = lon - dlon
    lon_hi = lon + dlon
    if lon_lo < -180.0:
        return [
            GeoBBox(lat_min, lat_max, lon_lo + 360.0, 180.0),
            GeoBBox(lat_min, lat_max, -180.0, lon_hi),
        ]
    if lon_hi > 180.0:
        return [
            GeoBBox(lat_min, lat_max, lon_lo, 180.0),
            GeoBBox(lat_min, lat_max, -180.0, lon_hi - 360.0),
        ]
    return [GeoBBox(lat_min, lat_max, lon_lo, lon_hi)]


def city_bboxes(cities: Iterable[City], half_width_km: float = 10.0) -> Iterator[tuple[City, list[GeoBBox]]]:
    for city in cities:
        yield city, bbox_around(city.lat, city.lon, half_width_km)
