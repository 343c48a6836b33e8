import io
import random
import threading

import pytest

from app.models import GazetteerEntry, GeoPoint, MatchResult
from app.services.gazetteer_service import (
    MatchTable,
    PlaceMatcher,
    SpatialIndex,
    any_entry,
    build_index,
    city_predicate,
    load_gazetteer,
    match_place,
    nearest_within,
    parse_gazetteer,
    parse_gazetteer_line,
)
from app.services.geo_service import KM_PER_DEGREE, haversine
from conftest import box, loc, place


def entry(geoname_id: int, lat: float, lon: float, feature_class: str = "P", population: int = 5000, country: str = "US") -> GazetteerEntry:
    return GazetteerEntry(geoname_id, f"e{geoname_id}", lat, lon, feature_class, "PPL", country, population)


def north_of(lat: float, lon: float, km: float) -> tuple[float, float]:
    return lat + km / KM_PER_DEGREE, lon


def linear_nearest(entries, p: GeoPoint, radius_km: float):
    best = None
    for e in entries:
        d = haversine(p.lat, p.lon, e.lat, e.lon)
        if d < radius_km and (best is None or (d, e.geoname_id) < (best[1], best[0].geoname_id)):
            best = (e, d)
    return best


class TestParseGazetteer:
    def test_golden_new_york_line(self, gazetteer_path):
        with open(gazetteer_path, encoding="utf-8") as f:
            first = f.readline()
        e = parse_gazetteer_line(first)
        assert e.geoname_id == 5128581
        assert e.name == "New York City"
        assert e.feature_class == "P"
        assert e.population == 8804190
        assert (e.lat, e.lon) == (40.71427, -74.00597)
        assert e.country_code == "US"

    def test_sample_file_counts(self, gazetteer_path):
        load = load_gazetteer(gazetteer_path)
        assert len(load.entries) == 7
        assert load.skipped == 2

    def test_empty_input(self):
        load = parse_gazetteer(io.StringIO(""))
        assert load.entries == []
        assert load.skipped == 0

    def test_invalid_utf8_line_skipped(self, gazetteer_path, tmp_path):
        with open(gazetteer_path, "rb") as f:
            first = f.readline()
        latin1 = first.replace(b"5128581", b"5128582").replace(b"New York City", b"Caf\xe9 \xff")
        path = tmp_path / "mixed.txt"
        path.write_bytes(first + latin1)
        load = load_gazetteer(path)
        assert [e.geoname_id for e in load.entries] == [5128581]
        assert load.skipped == 1

    def test_bytes_and_text_lines_parse_alike(self, gazetteer_path):
        with open(gazetteer_path, "rb") as f:
            raw = f.readline()
        assert parse_gazetteer([raw]).entries == parse_gazetteer([raw.decode("utf-8")]).entries

    def test_three_field_line_skipped(self):
        load = parse_gazetteer(["1\tBroken\tx\n"])
        assert load.entries == []
        assert load.skipped == 1

    def test_duplicate_ids_counted(self, gazetteer_path):
        with open(gazetteer_path, encoding="utf-8") as f:
            first = f.readline()
        load = parse_gazetteer([first, first])
        assert len(load.entries) == 1
        assert load.duplicate_ids == 1

    def test_blank_population_is_zero(self):
        fields = ["7", "Somewhere", "Somewhere", "", "1.0", "2.0", "T", "MT", "XX"] + [""] * 5 + ["", "", "", "UTC", "2020-01-01"]
        e = parse_gazetteer_line("\t".join(fields))
        assert e.population == 0


class TestBuildIndex:
    def test_predicates(self):
        entries = [entry(1, 10, 10, "P", 5000), entry(2, 10, 10.1, "P", 500), entry(3, 10, 10.2, "T", 0)]
        city = build_index(entries, city_predicate(1000))
        full = build_index(entries, any_entry)
        assert [e.geoname_id for e in city] == [1]
        assert sorted(e.geoname_id for e in full) == [1, 2, 3]

    def test_rejects_bad_cell_size(self):
        with pytest.raises(ValueError):
            SpatialIndex([], cell_size=0)

    def test_cells_partition_entries(self):
        rng = random.Random(5)
        entries = [entry(i, rng.uniform(-90, 90), rng.uniform(-180, 180)) for i in range(1, 300)]
        index = SpatialIndex(entries, cell_size=1.0)
        assert len(index) == len(entries)
        assert sum(len(bucket) for bucket in index.cells.values()) == len(entries)


class TestNearestWithin:
    def test_single_entry_inside(self):
        lat, lon = north_of(0, 0, 10)
        index = build_index([entry(1, lat, lon)])
        hit = nearest_within(index, GeoPoint(lat=0, lon=0), 50)
        assert hit[0].geoname_id == 1
        assert hit[1] == pytest.approx(10, rel=1e-6)

    def test_single_entry_outside(self):
        lat, lon = north_of(0, 0, 60)
        index = build_index([entry(1, lat, lon)])
        assert nearest_within(index, GeoPoint(lat=0, lon=0), 50) is None

    def test_radius_is_strict(self):
        lat, lon = north_of(0, 0, 30)
        e = entry(1, lat, lon)
        index = build_index([e])
        d = haversine(0, 0, lat, lon)
        assert nearest_within(index, GeoPoint(lat=0, lon=0), d) is None
        assert nearest_within(index, GeoPoint(lat=0, lon=0), d + 1e-6)[0] == e

    def test_ties_go_to_lowest_id(self):
        index = build_index([entry(9, 0.1, 0), entry(4, -0.1, 0)])
        assert nearest_within(index, GeoPoint(lat=0, lon=0), 50)[0].geoname_id == 4

    def test_across_cell_border(self):
        index = build_index([entry(1, 0.999, 0.5)], cell_size=1.0)
        assert nearest_within(index, GeoPoint(lat=1.001, lon=0.5), 50)[0].geoname_id == 1

    def test_across_antimeridian(self):
        index = build_index([entry(1, 0, 179.9)])
        hit = nearest_within(index, GeoPoint(lat=0, lon=-179.9), 50)
        assert hit[0].geoname_id == 1
        assert hit[1] == pytest.approx(0.2 * KM_PER_DEGREE, rel=1e-6)

    def test_near_pole_takes_all_longitudes(self):
        index = build_index([entry(1, 89.9, 10), entry(2, 89.9, -170)])
        hit = nearest_within(index, GeoPoint(lat=89.9, lon=-170), 50)
        assert hit[0].geoname_id == 2
        hit = index.nearest_within(GeoPoint(lat=89.95, lon=100), 50)
        assert hit is not None
        assert hit[1] < 50

    def test_rejects_non_positive_radius(self):
        with pytest.raises(ValueError):
            build_index([]).nearest_within(GeoPoint(lat=0, lon=0), 0)

    @pytest.mark.parametrize("cell_size", [1.0, 0.7, 5.0])
    def test_matches_linear_scan(self, cell_size):
        rng = random.Random(2024)
        entries = [entry(i, rng.uniform(-90, 90), rng.uniform(-180, 180)) for i in range(1, 1001)]
        # clustered entries so most queries have candidates in range
        entries += [entry(2000 + i, rng.uniform(40, 42), rng.uniform(-75, -73)) for i in range(200)]
        entries += [entry(3000 + i, rng.uniform(87, 90), rng.uniform(-180, 180)) for i in range(50)]
        index = SpatialIndex(entries, cell_size=cell_size)
        queries = [GeoPoint(lat=rng.uniform(-90, 90), lon=rng.uniform(-180, 180)) for _ in range(60)]
        queries += [GeoPoint(lat=rng.uniform(40, 42), lon=rng.uniform(-75, -73)) for _ in range(20)]
        queries += [GeoPoint(lat=rng.uniform(88, 90), lon=rng.uniform(-180, 180)) for _ in range(10)]
        queries += [GeoPoint(lat=rng.uniform(-5, 5), lon=rng.choice([-1, 1]) * rng.uniform(179.5, 180)) for _ in range(10)]
        for q in queries:
            for radius in (50.0, 400.0):
                expected = linear_nearest(entries, q, radius)
                got = index.nearest_within(q, radius)
                if expected is None:
                    assert got is None
                else:
                    assert got[0] == expected[0]
                    assert got[1] == expected[1]


class TestMatchPlace:
    def setup_method(self):
        self.center = GeoPoint(lat=10, lon=10)
        city_lat, _ = north_of(10, 10, 40)
        mountain_lat, _ = north_of(10, 10, 5)
        self.city = entry(100, city_lat, 10, "P", 2000)
        self.mountain = entry(50, mountain_lat, 10, "T", 0)

    def test_city_beats_nearer_non_city(self):
        entries = [self.city, self.mountain]
        result = match_place(self.center, build_index(entries, city_predicate()), build_index(entries))
        assert result.status == "matched-city-pass"
        assert result.entry == self.city
        assert result.distance_km == pytest.approx(40, rel=1e-6)

    def test_falls_back_to_full_pass(self):
        park_lat, _ = north_of(10, 10, 20)
        far_city_lat, _ = north_of(10, 10, 60)
        entries = [entry(1, far_city_lat, 10, "P", 10_000), entry(2, park_lat, 10, "L", 0)]
        result = match_place(self.center, build_index(entries, city_predicate()), build_index(entries))
        assert result.status == "matched-full-pass"
        assert result.entry.geoname_id == 2

    def test_small_city_only_matches_in_full_pass(self):
        small = entry(3, *north_of(10, 10, 10), "P", 999)
        result = match_place(self.center, build_index([small], city_predicate()), build_index([small]))
        assert result.status == "matched-full-pass"

    def test_unmatched(self):
        far = entry(1, *north_of(10, 10, 50.5))
        result = match_place(self.center, build_index([far], city_predicate()), build_index([far]))
        assert result.status == "unmatched"
        assert not result.matched
        assert result.entry is None and result.distance_km is None

    def test_distance_always_below_radius(self):
        rng = random.Random(9)
        entries = [entry(i, rng.uniform(9, 11), rng.uniform(9, 11), rng.choice("PTLS"), rng.choice([0, 500, 5000])) for i in range(1, 300)]
        city_index, full_index = build_index(entries, city_predicate()), build_index(entries)
        for _ in range(100):
            p = GeoPoint(lat=rng.uniform(8, 12), lon=rng.uniform(8, 12))
            result = match_place(p, city_index, full_index)
            assert result.distance_km is None or result.distance_km < 50

    def test_result_consistency_enforced(self):
        with pytest.raises(ValueError):
            MatchResult(status="unmatched", entry=self.city, distance_km=1.0)


class TestPlaceMatcher:
    def make(self, **kwargs):
        return PlaceMatcher.from_entries([entry(1, 40.71427, -74.00597, "P", 8804190), entry(2, 48.85341, 2.3488, "P", 2138551)], **kwargs)

    def test_tagged_place_matches_from_centroid(self):
        matcher = self.make()
        nyc = place("nyc", box(40.4, -74.3, 41.0, -73.7), "US")
        # the exact point is in Paris, but the place centroid decides
        result = matcher.match_location(loc(48.85, 2.35, nyc))
        assert result.entry.geoname_id == 1

    def test_bare_point(self):
        matcher = self.make()
        assert matcher.match_location(loc(48.86, 2.35)).entry.geoname_id == 2

    def test_memoized_by_location_key(self):
        matcher = self.make()
        nyc = place("nyc", box(40.4, -74.3, 41.0, -73.7), "US")
        for _ in range(5):
            matcher.match_location(loc(40.7, -74.0, nyc))
        assert sum(matcher.stats.values()) == 1

    def test_concurrent_lookups_agree(self):
        matcher = self.make(cache_size=16)
        points = [loc(40.7 + i * 0.001, -74.0) for i in range(50)]
        results: list = [None] * 8

        def work(slot):
            results[slot] = [matcher.match_location(p).entry.geoname_id for p in points]

        threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(r == [1] * 50 for r in results)

    def test_concurrent_misses_count_each_location_once(self):
        matcher = self.make()
        points = [loc(40.7 + i * 0.001, -74.0) for i in range(40)] + [loc(0, 0)]
        barrier = threading.Barrier(8)

        def work():
            barrier.wait()
            for p in points:
                matcher.match_location(p)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert matcher.stats == {"matched-city-pass": 40, "unmatched": 1}


class TestMatchTable:
    def test_unknown_key_is_unmatched(self):
        table = MatchTable({})
        assert table.match_location(loc(0, 0)).status == "unmatched"
