"""
Geonames ingestion, grid spatial index and the two-pass location matcher.

Matching follows a fixed order: a place is first matched against populated
places (feature class P) of at least MIN_CITY_POPULATION people, and only
when no such city lies within the radius against every gazetteer entry.
Distances are strict (< radius) and ties go to the lowest geoname_id.
"""

import math
import logging
import threading
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Protocol, Union

from cachetools import LRUCache

from app.models import GazetteerEntry, GeoPoint, LocRef, MatchResult, FEATURE_CLASSES, UNMATCHED
from app.services.geo_service import EARTH_RADIUS_KM, centroid, haversine
from app.utils.files import decode_line

log = logging.getLogger("mobility.gazetteer")

GEONAMES_FIELD_COUNT = 19

EntryPredicate = Callable[[GazetteerEntry], bool]


@dataclass
class GazetteerLoad:
    entries: list[GazetteerEntry] = field(default_factory=list)
    skipped: int = 0
    duplicate_ids: int = 0
    unknown_classes: Counter = field(default_factory=Counter)


def parse_gazetteer_line(line: str) -> Optional[GazetteerEntry]:
    """Parse one allCountries row; None when the row is malformed."""
    parts = line.rstrip("\r\n").split("\t")
    if len(parts) != GEONAMES_FIELD_COUNT:
        return None
    try:
        geoname_id = int(parts[0])
        lat = float(parts[4])
        lon = float(parts[5])
        population = int(parts[14]) if parts[14] else 0
    except ValueError:
        return None
    if geoname_id <= 0 or population < 0:
        return None
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        return None
    return GazetteerEntry(
        geoname_id=geoname_id,
        name=parts[1],
        lat=lat,
        lon=lon,
        feature_class=parts[6],
        feature_code=parts[7],
        country_code=parts[8],
        population=population,
    )


def parse_gazetteer(lines: Iterable[Union[bytes, str]]) -> GazetteerLoad:
    """
    Parse Geonames tab-separated text or raw bytes. Malformed lines, lines that
    are not valid UTF-8 and repeated geoname ids are skipped and counted, never
    fatal.
    """
    load = GazetteerLoad()
    seen: set[int] = set()
    for raw in lines:
        if not raw.strip():
            continue
        line = decode_line(raw)
        entry = parse_gazetteer_line(line) if line is not None else None
        if entry is None:
            load.skipped += 1
            log.debug("Skipping malformed gazetteer line: %.80r", raw)
            continue
        if entry.geoname_id in seen:
            load.duplicate_ids += 1
            continue
        seen.add(entry.geoname_id)
        if entry.feature_class not in FEATURE_CLASSES:
            load.unknown_classes[entry.feature_class] += 1
        load.entries.append(entry)

    if load.skipped or load.duplicate_ids:
        log.warning("Gazetteer: skipped %d malformed lines and %d duplicate ids", load.skipped, load.duplicate_ids)
    if load.unknown_classes:
        log.warning("Gazetteer: entries with unknown feature classes kept: %s", dict(load.unknown_classes))
    log.info("Gazetteer: parsed %d entries", len(load.entries))
    return load


def load_gazetteer(path: Path) -> GazetteerLoad:
    with open(path, "rb") as f:
        return parse_gazetteer(f)


def city_predicate(min_population: int = 1000) -> EntryPredicate:
    """First-pass index: populated places with at least min_population people."""
    return lambda e: e.feature_class == "P" and e.population >= min_population


def any_entry(_: GazetteerEntry) -> bool:
    return True


class SpatialIndex:
    """
    Fixed-size lat/lon grid. Cells hold entries sorted by geoname_id; the index
    is read-only after construction.
    """

    def __init__(self, entries: Iterable[GazetteerEntry], cell_size: float = 1.0):
        if cell_size <= 0 or cell_size > 180:
            raise ValueError(f"cell_size must be in (0, 180], got {cell_size}")
        self.cell_size = cell_size
        self.n_lat = math.ceil(180.0 / cell_size)
        self.n_lon = math.ceil(360.0 / cell_size)

        cells: dict[tuple[int, int], list[GazetteerEntry]] = defaultdict(list)
        count = 0
        for entry in entries:
            cells[self._cell(entry.lat, entry.lon)].append(entry)
            count += 1
        self._cells: dict[tuple[int, int], tuple[GazetteerEntry, ...]] = {
            key: tuple(sorted(bucket, key=lambda e: e.geoname_id)) for key, bucket in cells.items()
        }
        self._size = count

    def __len__(self) -> int:
        return self._size

    def __iter__(self) -> Iterator[GazetteerEntry]:
        for key in sorted(self._cells):
            yield from self._cells[key]

    @property
    def cells(self) -> dict[tuple[int, int], tuple[GazetteerEntry, ...]]:
        return dict(self._cells)

    def _lat_band(self, lat: float) -> int:
        return min(self.n_lat - 1, max(0, math.floor((lat + 90.0) / self.cell_size)))

    def _lon_band(self, lon: float) -> int:
        return min(self.n_lon - 1, max(0, math.floor((lon + 180.0) / self.cell_size)))

    def _lon_bands(self, west: float, east: float) -> set[int]:
        """Bands covering [west, east] on an axis that may run past +-180."""
        if west < -180.0:
            segments = [(west + 360.0, 180.0), (-180.0, east)]
        elif east > 180.0:
            segments = [(west, 180.0), (-180.0, east - 360.0)]
        else:
            segments = [(west, east)]
        bands: set[int] = set()
        for lo, hi in segments:
            bands.update(range(self._lon_band(lo), self._lon_band(hi) + 1))
        return bands

    def _cell(self, lat: float, lon: float) -> tuple[int, int]:
        return self._lat_band(lat), self._lon_band(lon)

    def _candidate_cells(self, p: GeoPoint, radius_km: float) -> Iterator[tuple[int, int]]:
        """
        Cells intersecting the spherical cap of radius_km around p. Longitude
        reach widens with latitude; caps touching a pole take every longitude.
        """
        delta = radius_km / EARTH_RADIUS_KM
        dlat = math.degrees(delta) + 1e-9
        lat_lo, lat_hi = p.lat - dlat, p.lat + dlat

        lon_bands: Iterable[int]
        cos_lat = math.cos(math.radians(p.lat))
        if lat_hi >= 90.0 or lat_lo <= -90.0 or math.sin(delta) >= cos_lat or delta >= math.pi / 2:
            lon_bands = range(self.n_lon)
        else:
            dlon = math.degrees(math.asin(math.sin(delta) / cos_lat)) + 1e-9
            if 2 * dlon >= 360.0:
                lon_bands = range(self.n_lon)
            else:
                lon_bands = sorted(self._lon_bands(p.lon - dlon, p.lon + dlon))

        lon_bands = list(lon_bands)
        for lat_band in range(self._lat_band(lat_lo), self._lat_band(lat_hi) + 1):
            for lon_band in lon_bands:
                yield lat_band, lon_band

    def nearest_within(self, p: GeoPoint, radius_km: float) -> Optional[tuple[GazetteerEntry, float]]:
        if radius_km <= 0:
            raise ValueError("radius_km must be positive")
        best: Optional[tuple[GazetteerEntry, float]] = None
        for cell in self._candidate_cells(p, radius_km):
            for entry in self._cells.get(cell, ()):
                d = haversine(p.lat, p.lon, entry.lat, entry.lon)
                if d >= radius_km:
                    continue
                if best is None or (d, entry.geoname_id) < (best[1], best[0].geoname_id):
                    best = (entry, d)
        return best


def build_index(entries: Iterable[GazetteerEntry], predicate: EntryPredicate = any_entry, cell_size: float = 1.0) -> SpatialIndex:
    return SpatialIndex((e for e in entries if predicate(e)), cell_size=cell_size)


def nearest_within(index: SpatialIndex, p: GeoPoint, radius_km: float) -> Optional[tuple[GazetteerEntry, float]]:
    return index.nearest_within(p, radius_km)


def match_place(place_centroid: GeoPoint, city_index: SpatialIndex, full_index: SpatialIndex, radius_km: float = 50.0) -> MatchResult:
    """Two-pass match: any qualifying city wins over a nearer non-city entry."""
    hit = city_index.nearest_within(place_centroid, radius_km)
    if hit is not None:
        return MatchResult(status="matched-city-pass", entry=hit[0], distance_km=hit[1])
    hit = full_index.nearest_within(place_centroid, radius_km)
    if hit is not None:
        return MatchResult(status="matched-full-pass", entry=hit[0], distance_km=hit[1])
    return UNMATCHED


def match_point(loc: LocRef) -> GeoPoint:
    """Tagged places match from their box centroid, bare coordinates from themselves."""
    return centroid(loc.place.bbox) if loc.place is not None else loc.point


class LocationMatcher(Protocol):
    def match_location(self, loc: LocRef) -> MatchResult: ...


class PlaceMatcher:
    """
    Memoized two-pass matcher keyed by location identity (place id, or exact
    coordinates for bare points). The cache and stats are guarded by one lock;
    stats count each location once, when its result is first stored.
    """

    def __init__(self, city_index: SpatialIndex, full_index: SpatialIndex, radius_km: float = 50.0, cache_size: int = 2_000_000):
        self.city_index = city_index
        self.full_index = full_index
        self.radius_km = radius_km
        self._cache: LRUCache = LRUCache(maxsize=cache_size)
        self._lock = threading.Lock()
        self.stats: Counter = Counter()

    @classmethod
    def from_entries(
        cls,
        entries: list[GazetteerEntry],
        min_city_population: int = 1000,
        radius_km: float = 50.0,
        cell_size: float = 1.0,
        cache_size: int = 2_000_000,
    ) -> "PlaceMatcher":
        city_index = build_index(entries, city_predicate(min_city_population), cell_size)
        full_index = build_index(entries, any_entry, cell_size)
        log.info("Indexed %d cities (population >= %d) and %d entries", len(city_index), min_city_population, len(full_index))
        return cls(city_index, full_index, radius_km=radius_km, cache_size=cache_size)

    def match_location(self, loc: LocRef) -> MatchResult:
        key = loc.key
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        result = match_place(match_point(loc), self.city_index, self.full_index, self.radius_km)
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                return cached
            self._cache[key] = result
            self.stats[result.status] += 1
        return result


class MatchTable:
    """Precomputed matches loaded from the match stage artifact."""

    def __init__(self, matches: dict[str, MatchResult]):
        self.matches = matches

    def match_location(self, loc: LocRef) -> MatchResult:
        return self.matches.get(loc.key, UNMATCHED)
