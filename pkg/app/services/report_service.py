"""
Analysis artifacts over filtered events and built networks: penetration per
country, the heaviest intra-continent country link, per-user histograms, the
gazetteer match-type table, map-ready GeoJSON and corpus-level totals.
"""

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Literal, Mapping, Optional, TextIO, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from app.models import FEATURE_CLASSES, CountryInfo, GeoPoint, Histogram, MatchResult, TravelEvent, UserSummary
from app.services.network_service import TravelNetwork

log = logging.getLogger("mobility.report")

COUNTRY_INFO_COLUMNS = [
    "ISO", "ISO3", "ISO-Numeric", "fips", "Country", "Capital", "Area", "Population",
    "Continent", "tld", "CurrencyCode", "CurrencyName", "Phone", "PostalCodeFormat",
    "PostalCodeRegex", "Languages", "geonameid", "neighbours", "EquivalentFipsCode",
]

NO_MATCH_CLASS = "None"

GeoJsonScope = Literal["all", "intra-country", "inter-country"]


@dataclass
class CountryInfoLoad:
    countries: dict[str, CountryInfo] = field(default_factory=dict)
    skipped: int = 0


def parse_country_info(source: Union[Path, TextIO]) -> CountryInfoLoad:
    """
    Read a Geonames countryInfo.txt. Only whole lines starting with '#' are
    comments: postal code formats contain '#' too.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as f:
            lines = f.readlines()
    else:
        lines = source.readlines()
    body = "".join(line for line in lines if line.strip() and not line.startswith("#"))
    if not body:
        return CountryInfoLoad()
    # keep_default_na=False: continent "NA" and Namibia's "NA" are real values
    frame = pd.read_csv(
        io.StringIO(body),
        sep="\t",
        header=None,
        names=COUNTRY_INFO_COLUMNS,
        dtype=str,
        keep_default_na=False,
        quoting=csv.QUOTE_NONE,
    ).fillna("")
    load = CountryInfoLoad()
    for row in frame.itertuples(index=False):
        try:
            info = CountryInfo(
                country_code=row.ISO,
                name=row.Country,
                continent=row.Continent,
                population=int(row.Population or 0),
                geoname_id=int(row.geonameid) if row.geonameid else None,
            )
        except (ValidationError, ValueError):
            load.skipped += 1
            continue
        load.countries[info.country_code] = info
    if load.skipped:
        log.warning("countryInfo: skipped %d malformed rows", load.skipped)
    return load


class PenetrationResult(BaseModel):
    ratios: dict[str, float] = {}
    users: dict[str, int] = {}
    missing_info: int = 0
    zero_population: int = 0
    anomalies: list[str] = []


def penetration(user_home_counts: Mapping[str, int], info: Mapping[str, CountryInfo], min_users: int = 5000) -> PenetrationResult:
    """Distinct users over population, for countries with at least min_users users."""
    result = PenetrationResult()
    for code in sorted(user_home_counts):
        users = user_home_counts[code]
        if users < min_users:
            continue
        country = info.get(code)
        if country is None:
            result.missing_info += 1
            continue
        if country.population <= 0:
            result.zero_population += 1
            continue
        ratio = users / country.population
        if ratio > 1:
            result.anomalies.append(code)
        result.ratios[code] = ratio
        result.users[code] = users
    if result.missing_info:
        log.warning("Penetration: %d countries missing from country info", result.missing_info)
    if result.anomalies:
        log.warning("Penetration above 1 (population table mismatch?): %s", ", ".join(result.anomalies))
    return result


def top_penetration_by_continent(ratios: Mapping[str, float], info: Mapping[str, CountryInfo]) -> dict[str, tuple[str, float]]:
    best: dict[str, tuple[str, float]] = {}
    for code in sorted(ratios):
        continent = info[code].continent
        if continent not in best or ratios[code] > best[continent][1]:
            best[continent] = (code, ratios[code])
    return dict(sorted(best.items()))


def top_edges_by_continent(country_network: TravelNetwork, info: Mapping[str, CountryInfo]) -> dict[str, tuple[tuple[str, str], int]]:
    """Heaviest undirected edge with both endpoints in the same continent."""
    if country_network.directed:
        raise ValueError("top_edges_by_continent expects the undirected country network")
    best: dict[str, tuple[tuple[str, str], int]] = {}
    for (u, v), weight in country_network.edges.items():
        a, b = info.get(u), info.get(v)
        if a is None or b is None or a.continent != b.continent:
            continue
        current = best.get(a.continent)
        # edges iterate in key order, so strict > keeps the smallest key on ties
        if current is None or weight > current[1]:
            best[a.continent] = ((u, v), weight)
    return dict(sorted(best.items()))


def log2_bin_edges(max_count: int) -> list[int]:
    """[0, 1, 2, 4, ...] with the last edge above max_count; bin 0 holds zeros."""
    edges = [0, 1]
    while edges[-1] <= max_count:
        edges.append(edges[-1] * 2)
    return edges


def histogram(counts: Iterable[int]) -> Histogram:
    values = np.fromiter(counts, dtype=np.int64)
    if values.size == 0:
        return Histogram()
    edges = log2_bin_edges(int(values.max()))
    freq, _ = np.histogram(values, bins=np.asarray(edges))
    return Histogram(edges=edges, counts=[int(c) for c in freq])


def histograms(summaries: Iterable[UserSummary]) -> dict[str, Histogram]:
    """Per-user tweet and event distributions, computed before user removal."""
    summaries = list(summaries)
    return {
        "tweets_per_user": histogram(s.geotagged_tweet_count for s in summaries),
        "events_per_user": histogram(s.travel_event_count for s in summaries),
    }


class MatchTypeRow(BaseModel):
    feature_class: str
    places: int
    events: int


def _feature_class(result: Optional[MatchResult]) -> str:
    if result is None or not result.matched:
        return NO_MATCH_CLASS
    return result.entry.feature_class


def match_type_breakdown(matches: Mapping[str, MatchResult], events: Iterable[TravelEvent]) -> list[MatchTypeRow]:
    """
    Unique matched locations per feature class, and events touching each class.
    An event counts once per distinct class among its two endpoints.
    """
    places: Counter = Counter(_feature_class(r) for r in matches.values())
    touched: Counter = Counter()
    for event in events:
        classes = {_feature_class(matches.get(loc.key)) for loc in (event.origin, event.destination)}
        touched.update(classes)

    extra = sorted((set(places) | set(touched)) - set(FEATURE_CLASSES) - {NO_MATCH_CLASS})
    order = list(FEATURE_CLASSES) + extra + [NO_MATCH_CLASS]
    return [MatchTypeRow(feature_class=c, places=places[c], events=touched[c]) for c in order]


def vertex_coordinates(network: TravelNetwork) -> dict[Hashable, GeoPoint]:
    coords = {}
    for key, meta in network.vertices.items():
        if meta.get("lat") is not None and meta.get("lon") is not None:
            coords[key] = GeoPoint(lat=meta["lat"], lon=meta["lon"])
    return coords


def export_geojson(
    network: TravelNetwork,
    coordinates: Mapping[Hashable, GeoPoint],
    scope: GeoJsonScope = "all",
) -> tuple[dict, int]:
    """
    One LineString per edge with its weight. Returns the FeatureCollection and
    the number of edges skipped for lack of vertex coordinates.
    """
    vertices = network.vertices
    features = []
    skipped = 0
    for (u, v), weight in network.edges.items():
        if scope != "all":
            same = vertices.get(u, {}).get("country_code") == vertices.get(v, {}).get("country_code")
            if same != (scope == "intra-country"):
                continue
        a, b = coordinates.get(u), coordinates.get(v)
        if a is None or b is None:
            skipped += 1
            continue
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[a.lon, a.lat], [b.lon, b.lat]]},
            "properties": {"origin": u, "destination": v, "weight": weight, "directed": network.directed},
        })
    if skipped:
        log.warning("GeoJSON: skipped %d edges with an endpoint lacking coordinates", skipped)
    return {"type": "FeatureCollection", "features": features}, skipped


def _distribution(values: np.ndarray) -> dict[str, float]:
    if values.size == 0:
        return {"median": 0.0, "mean": 0.0, "std": 0.0}
    return {"median": float(np.median(values)), "mean": float(values.mean()), "std": float(values.std())}


def corpus_summary(summaries: Iterable[UserSummary], kept: Mapping[int, bool], thresholds) -> dict:
    """Totals and per-user distributions in the shape of the network statistics table."""
    summaries = list(summaries)
    tweets = np.array([s.geotagged_tweet_count for s in summaries], dtype=np.int64)
    detected = np.array([s.detected_event_count for s in summaries], dtype=np.int64)
    events = np.array([s.travel_event_count for s in summaries], dtype=np.int64)
    kept_mask = np.array([kept.get(s.user_id, False) for s in summaries], dtype=bool)
    traveling = kept_mask & (events > 0)
    users = len(summaries)

    def share(mask: np.ndarray) -> float:
        return float(mask.sum() / users) if users else 0.0

    return {
        "users": users,
        "tweets": int(tweets.sum()),
        "detected_events": int(detected.sum()),
        "events_after_speed_filter": int(events.sum()),
        "kept_users": int(kept_mask.sum()),
        "kept_events": int(events[kept_mask].sum()),
        "tweets_per_user": _distribution(tweets),
        "events_per_user": _distribution(detected),
        "traveling_users": int(traveling.sum()),
        "traveling_user_tweets": int(tweets[traveling].sum()),
        "removed_by_tweet_filter": share(tweets > thresholds.max_user_tweets),
        "removed_by_event_filter": share(events > thresholds.max_user_events),
    }
