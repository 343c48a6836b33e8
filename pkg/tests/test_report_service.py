import io
import json
import random
from collections import Counter

import pytest

from app.models import CountryInfo, GazetteerEntry, GeoPoint, MatchResult, UNMATCHED, UserSummary
from app.services.network_service import build_network
from app.services.report_service import (
    corpus_summary,
    export_geojson,
    histogram,
    histograms,
    log2_bin_edges,
    match_type_breakdown,
    parse_country_info,
    penetration,
    top_edges_by_continent,
    top_penetration_by_continent,
    vertex_coordinates,
)
from app.services.travel_service import TravelThresholds
from conftest import event, loc


def info(code: str, continent: str, population: int) -> CountryInfo:
    return CountryInfo(country_code=code, continent=continent, population=population)


def summary(user_id: int, tweets: int, events: int, detected: int = None) -> UserSummary:
    return UserSummary(
        user_id=user_id, geotagged_tweet_count=tweets, travel_event_count=events,
        detected_event_count=events if detected is None else detected,
    )


def entry_of(feature_class: str, geoname_id: int) -> MatchResult:
    e = GazetteerEntry(geoname_id, "x", 0.0, 0.0, feature_class, "X", "US", 0)
    return MatchResult(status="matched-full-pass", entry=e, distance_km=1.0)


class TestParseCountryInfo:
    def test_sample_file(self, country_info_path):
        load = parse_country_info(country_info_path)
        assert load.skipped == 1
        assert set(load.countries) == {"US", "CA", "FR", "ES", "DE", "GB", "NA", "BW", "ZA"}
        assert load.countries["US"].continent == "NA"
        assert load.countries["US"].population == 327167434
        assert load.countries["NA"].name == "Namibia"
        assert load.countries["NA"].continent == "AF"

    def test_empty(self):
        assert parse_country_info(io.StringIO("# only comments\n")).countries == {}


class TestPenetration:
    def test_ratio(self):
        result = penetration({"US": 370_000}, {"US": info("US", "NA", 10_000_000)})
        assert result.ratios == {"US": pytest.approx(0.037)}

    def test_min_users(self):
        assert penetration({"US": 4_999}, {"US": info("US", "NA", 10_000_000)}).ratios == {}

    def test_no_users(self):
        assert penetration({}, {"US": info("US", "NA", 1)}).ratios == {}

    def test_missing_country_counted(self):
        result = penetration({"XK": 6000}, {})
        assert result.ratios == {}
        assert result.missing_info == 1

    def test_anomaly_flagged(self):
        result = penetration({"VA": 6000}, {"VA": info("VA", "EU", 800)})
        assert result.anomalies == ["VA"]

    def test_top_per_continent(self):
        table = {c.country_code: c for c in [info("FR", "EU", 1), info("ES", "EU", 1), info("US", "NA", 1)]}
        best = top_penetration_by_continent({"FR": 0.01, "ES": 0.02, "US": 0.037}, table)
        assert best == {"EU": ("ES", 0.02), "NA": ("US", 0.037)}


class TestTopEdgesByContinent:
    def setup_method(self):
        self.info = {c.country_code: c for c in [
            info("FR", "EU", 1), info("ES", "EU", 1), info("DE", "EU", 1),
            info("US", "NA", 1), info("CA", "NA", 1), info("BW", "AF", 1),
        ]}

    def test_argmax(self):
        net = build_network([("FR", "ES")] * 10 + [("FR", "DE")] * 7 + [("US", "FR")] * 50, "country", directed=False)
        assert top_edges_by_continent(net, self.info) == {"EU": (("ES", "FR"), 10)}

    def test_single_continent(self):
        net = build_network([("US", "CA")] * 2, "country", directed=False)
        assert top_edges_by_continent(net, self.info) == {"NA": (("CA", "US"), 2)}

    def test_requires_undirected(self):
        with pytest.raises(ValueError):
            top_edges_by_continent(build_network([("US", "CA")], "country", directed=True), self.info)

    def test_matches_brute_force(self):
        rng = random.Random(31)
        codes = list(self.info)
        pairs = [tuple(rng.sample(codes, 2)) for _ in range(400)]
        net = build_network(pairs, "country", directed=False)
        got = top_edges_by_continent(net, self.info)
        for continent in {c.continent for c in self.info.values()}:
            weights = [w for (u, v), w in net.edges.items() if self.info[u].continent == self.info[v].continent == continent]
            if weights:
                assert got[continent][1] == max(weights)
            else:
                assert continent not in got


class TestHistograms:
    def test_bin_edges(self):
        assert log2_bin_edges(0) == [0, 1]
        assert log2_bin_edges(10) == [0, 1, 2, 4, 8, 16]
        assert log2_bin_edges(16) == [0, 1, 2, 4, 8, 16, 32]

    def test_single_user(self):
        result = histograms([summary(1, tweets=10, events=0)])
        tweets, events = result["tweets_per_user"], result["events_per_user"]
        assert tweets.counts[tweets.edges.index(8)] == 1
        assert tweets.total == 1
        assert events.edges == [0, 1]
        assert events.counts == [1]

    def test_empty(self):
        result = histograms([])
        assert result["tweets_per_user"].counts == []
        assert result["events_per_user"].total == 0

    def test_mass_conservation(self):
        rng = random.Random(1)
        summaries = [summary(i, rng.randrange(1, 5000), rng.randrange(0, 300)) for i in range(1000)]
        for h in histograms(summaries).values():
            assert h.total == 1000
            assert len(h.counts) == len(h.edges) - 1

    def test_values_land_in_their_bins(self):
        h = histogram([0, 1, 2, 3, 4, 7, 8])
        assert h.edges == [0, 1, 2, 4, 8, 16]
        assert h.counts == [1, 1, 2, 2, 1]


class TestMatchTypeBreakdown:
    def test_city_to_park(self):
        city, park = loc(0, 0), loc(1, 1)
        matches = {city.key: entry_of("P", 1), park.key: entry_of("L", 2)}
        rows = {r.feature_class: r for r in match_type_breakdown(matches, [event(city, park)])}
        assert rows["P"].events == 1
        assert rows["L"].events == 1
        assert rows["P"].places == 1

    def test_city_to_city_counts_once(self):
        a, b = loc(0, 0), loc(1, 1)
        matches = {a.key: entry_of("P", 1), b.key: entry_of("P", 2)}
        rows = {r.feature_class: r for r in match_type_breakdown(matches, [event(a, b)])}
        assert rows["P"].events == 1
        assert rows["P"].places == 2

    def test_no_events(self):
        rows = match_type_breakdown({}, [])
        assert [r.feature_class for r in rows] == ["A", "H", "L", "P", "R", "S", "T", "U", "V", "None"]
        assert all(r.places == 0 and r.events == 0 for r in rows)

    def test_place_counts_include_unmatched(self):
        matches = {"a": entry_of("P", 1), "b": entry_of("S", 2), "c": UNMATCHED, "d": UNMATCHED}
        rows = match_type_breakdown(matches, [])
        assert sum(r.places for r in rows) == len(matches)
        assert {r.feature_class: r.places for r in rows}["None"] == 2


class TestExportGeojson:
    def test_one_edge(self):
        net = build_network([(1, 2)], "city", directed=False)
        coords = {1: GeoPoint(lat=40.7, lon=-74.0), 2: GeoPoint(lat=42.4, lon=-71.1)}
        collection, skipped = export_geojson(net, coords)
        assert skipped == 0
        (feature,) = collection["features"]
        assert feature["geometry"] == {"type": "LineString", "coordinates": [[-74.0, 40.7], [-71.1, 42.4]]}
        assert feature["properties"]["weight"] == 1

    def test_empty(self):
        collection, skipped = export_geojson(build_network([], "city", directed=False), {})
        assert collection == {"type": "FeatureCollection", "features": []}
        assert skipped == 0

    def test_missing_coordinates_skipped(self):
        net = build_network([(1, 2), (2, 3)], "city", directed=False)
        collection, skipped = export_geojson(net, {1: GeoPoint(lat=0, lon=0), 2: GeoPoint(lat=1, lon=1)})
        assert len(collection["features"]) == 1
        assert skipped == 1

    def test_hundred_edges_are_valid_geojson(self):
        rng = random.Random(100)
        pairs = set()
        while len(pairs) < 100:
            u, v = rng.sample(range(60), 2)
            pairs.add((min(u, v), max(u, v)))
        net = build_network(sorted(pairs), "city", directed=False)
        coords = {i: GeoPoint(lat=rng.uniform(-90, 90), lon=rng.uniform(-180, 180)) for i in range(60)}
        collection, _ = export_geojson(net, coords)
        parsed = json.loads(json.dumps(collection, allow_nan=False))
        assert parsed["type"] == "FeatureCollection"
        assert len(parsed["features"]) == 100
        for f in parsed["features"]:
            assert f["type"] == "Feature"
            assert f["geometry"]["type"] == "LineString"
            line = f["geometry"]["coordinates"]
            assert len(line) >= 2
            for lon, lat in line:
                assert -180 <= lon <= 180 and -90 <= lat <= 90
            assert isinstance(f["properties"]["weight"], int)

    def test_intra_country_scope(self):
        net = build_network([(1, 2), (1, 3)], "city", directed=False)
        for node, country in ((1, "US"), (2, "US"), (3, "FR")):
            net.graph.nodes[node].update(country_code=country, lat=0.0, lon=float(node))
        coords = vertex_coordinates(net)
        intra, _ = export_geojson(net, coords, "intra-country")
        inter, _ = export_geojson(net, coords, "inter-country")
        assert [f["properties"]["destination"] for f in intra["features"]] == [2]
        assert [f["properties"]["destination"] for f in inter["features"]] == [3]


class TestCorpusSummary:
    def test_totals(self):
        summaries = [summary(1, 10, 2, detected=3), summary(2, 2000, 0), summary(3, 5, 0), summary(4, 50, 150)]
        kept = {1: True, 2: False, 3: True, 4: False}
        result = corpus_summary(summaries, kept, TravelThresholds())
        assert result["users"] == 4
        assert result["tweets"] == 2065
        assert result["detected_events"] == 153
        assert result["kept_users"] == 2
        assert result["kept_events"] == 2
        assert result["traveling_users"] == 1
        assert result["traveling_user_tweets"] == 10
        assert result["removed_by_tweet_filter"] == 0.25
        assert result["removed_by_event_filter"] == 0.25
        assert result["tweets_per_user"]["median"] == 30.0

    def test_empty(self):
        result = corpus_summary([], {}, TravelThresholds())
        assert result["users"] == 0
        assert result["tweets_per_user"] == {"median": 0.0, "mean": 0.0, "std": 0.0}


def test_match_type_rows_in_feature_class_order():
    matches = {str(i): entry_of(c, i) for i, c in enumerate("VUTSRPLHA", start=1)}
    rows = match_type_breakdown(matches, [])
    assert Counter(r.feature_class for r in rows if r.places) == Counter("AHLPRSTUV")
    assert [r.feature_class for r in rows][:9] == list("AHLPRSTUV")
