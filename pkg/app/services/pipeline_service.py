"""
Pipeline stages over an output directory.

ingest -> events -> match -> network -> report. Each stage reads the artifacts
of the previous ones from settings.OUTPUT_DIR and writes its own there; every
artifact is written in sorted order so runs are reproducible byte for byte
regardless of WORKERS.
"""

import itertools
import logging
import sys
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import pandas as pd
from tqdm import tqdm

from app.models import LocationMatch, LocRef, MatchResult, TravelEvent, UserSummary, UserTimeline
from app.services import gazetteer_service, ingest_service, network_service, report_service, travel_service
from app.services.network_service import GRANULARITIES, Granularity
from app.services.travel_service import TimelineResult, TravelThresholds
from app.utils.config import Settings
from app.utils.files import read_json, read_jsonl, require_artifact, write_csv, write_json, write_jsonl
from app.utils.parallel import ordered_map

log = logging.getLogger("mobility.pipeline")

TIMELINES = "timelines.jsonl"
INGEST_STATS = "ingest_stats.json"
EVENTS = "events.jsonl"
USERS = "users.csv"
EVENTS_STATS = "events_stats.json"
MATCHES = "matches.jsonl"
MATCH_STATS = "match_stats.json"

EVENT_COLUMNS = [
    "user_id", "ts",
    "origin_place_id", "origin_lat", "origin_lon", "origin_country",
    "dest_place_id", "dest_lat", "dest_lon", "dest_country",
    "distance_km", "elapsed_h",
]
USER_COLUMNS = ["user_id", "tweets", "detected_events", "events", "kept", "home_country"]

TIMELINE_BATCH = 256


def _progress(items: Iterable, desc: str) -> Iterable:
    return tqdm(items, desc=desc, unit="", disable=not sys.stderr.isatty(), leave=False)


def _batched(items: Iterable, size: int) -> Iterator[list]:
    it = iter(items)
    while batch := list(itertools.islice(it, size)):
        yield batch


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------
def run_ingest(settings: Settings, inputs: Sequence[Path]) -> dict:
    if not inputs:
        raise ValueError("ingest needs at least one --input file")
    out = settings.OUTPUT_DIR
    stats = ingest_service.IngestStats()
    records = ingest_service.iter_records(inputs, settings.TIMESTAMP_FORMAT, settings.WORKERS, stats)
    timelines = ingest_service.group_and_sort(
        records,
        max_records=ingest_service.records_for_memory(settings.MAX_MEMORY_MB),
        tmp_dir=settings.TMP_DIR,
        stats=stats,
    )
    write_jsonl(out / TIMELINES, _progress(timelines, "users"))

    summary = stats.as_dict()
    write_json(out / INGEST_STATS, summary)
    if stats.rejected:
        log.warning("Ingest: rejected records %s", dict(stats.rejected))
    log.info("Ingest: %d records from %d users -> %s", stats.accepted, stats.users, out / TIMELINES)
    return summary


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------
def _event_row(event: TravelEvent) -> list:
    row = [event.user_id, event.timestamp]
    for loc in (event.origin, event.destination):
        row += [loc.place.place_id if loc.place else "", loc.point.lat, loc.point.lon, loc.country_code]
    return row + [event.distance_km, event.elapsed_h]


def _summary_row(result: TimelineResult) -> list:
    s = result.summary
    return [s.user_id, s.geotagged_tweet_count, s.detected_event_count, s.travel_event_count, int(result.kept), s.home_country]


def run_events(settings: Settings, emit_events: Optional[Path] = None) -> dict:
    out = settings.OUTPUT_DIR
    timelines = read_jsonl(require_artifact(out / TIMELINES, "ingest"), UserTimeline)
    thresholds = TravelThresholds.from_settings(settings)
    batches = ((batch, thresholds) for batch in _batched(timelines, TIMELINE_BATCH))

    out.mkdir(parents=True, exist_ok=True)
    user_rows: list[list] = []
    detected = kept_events = dropped_users = 0
    emit_header = True
    with open(out / EVENTS, "w", encoding="utf-8") as events_file:
        for results in _progress(ordered_map(travel_service.process_batch, batches, workers=settings.WORKERS), "user batches"):
            emitted = []
            for result in results:
                user_rows.append(_summary_row(result))
                detected += result.summary.detected_event_count
                if not result.kept:
                    dropped_users += 1
                for event in result.events:
                    events_file.write(event.model_dump_json())
                    events_file.write("\n")
                    emitted.append(_event_row(event))
                kept_events += len(result.events)
            if emit_events is not None:
                pd.DataFrame(emitted, columns=EVENT_COLUMNS).to_csv(
                    emit_events, mode="w" if emit_header else "a", header=emit_header, index=False, lineterminator="\n"
                )
                emit_header = False
    if emit_events is not None and emit_header:
        write_csv(emit_events, pd.DataFrame(columns=EVENT_COLUMNS))

    write_csv(out / USERS, pd.DataFrame(user_rows, columns=USER_COLUMNS))
    summary = {
        "users": len(user_rows),
        "dropped_users": dropped_users,
        "detected_events": detected,
        "kept_events": kept_events,
    }
    write_json(out / EVENTS_STATS, summary)
    log.info("Events: %d detected, %d kept from %d users (%d users removed)", detected, kept_events, len(user_rows), dropped_users)
    return summary


def read_user_summaries(output_dir: Path) -> tuple[list[UserSummary], dict[int, bool]]:
    frame = pd.read_csv(require_artifact(output_dir / USERS, "events"), dtype=str, keep_default_na=False)
    summaries, kept = [], {}
    for row in frame.itertuples(index=False):
        user_id = int(row.user_id)
        summaries.append(UserSummary(
            user_id=user_id,
            geotagged_tweet_count=int(row.tweets),
            travel_event_count=int(row.events),
            detected_event_count=int(row.detected_events),
            home_country=row.home_country,
        ))
        kept[user_id] = row.kept == "1"
    return summaries, kept


def read_events(output_dir: Path) -> Iterator[TravelEvent]:
    return read_jsonl(require_artifact(output_dir / EVENTS, "events"), TravelEvent)


# ---------------------------------------------------------------------------
# match
# ---------------------------------------------------------------------------
def run_match(settings: Settings) -> dict:
    out = settings.OUTPUT_DIR
    if settings.GAZETTEER_PATH is None:
        raise ValueError("match needs a gazetteer (--gazetteer or GAZETTEER_PATH)")

    locations: dict[str, LocRef] = {}
    for event in read_events(out):
        for loc in (event.origin, event.destination):
            locations.setdefault(loc.key, loc)

    load = gazetteer_service.load_gazetteer(require_artifact(settings.GAZETTEER_PATH, "gazetteer download"))
    matcher = gazetteer_service.PlaceMatcher.from_entries(
        load.entries,
        min_city_population=settings.MIN_CITY_POPULATION,
        radius_km=settings.MATCH_RADIUS_KM,
        cell_size=settings.GRID_CELL_DEG,
        cache_size=max(settings.MATCH_CACHE_SIZE, len(locations)),
    )
    rows = [
        LocationMatch(key=key, result=matcher.match_location(locations[key]))
        for key in _progress(sorted(locations), "locations")
    ]
    write_jsonl(out / MATCHES, rows)

    statuses = dict(sorted(matcher.stats.items()))
    homes = _resolve_home_countries(out, matcher)
    summary = {
        "locations": len(rows),
        "statuses": statuses,
        "home_countries": homes,
        "gazetteer_entries": len(load.entries),
        "gazetteer_skipped_lines": load.skipped,
        "city_index_entries": len(matcher.city_index),
    }
    write_json(out / MATCH_STATS, summary)
    unmatched = statuses.get("unmatched", 0)
    if unmatched:
        log.warning("Match: %d of %d locations had no gazetteer entry within %.1f km", unmatched, len(rows), settings.MATCH_RADIUS_KM)
    return summary


def _resolve_home_countries(out: Path, matcher: gazetteer_service.PlaceMatcher) -> dict:
    """
    Recompute users.csv home countries with bare coordinates resolved through
    the gazetteer. Returns how many users have a home country and how many
    changed from the place-only attribution of the events stage.
    """
    users_path = require_artifact(out / USERS, "events")
    timelines = read_jsonl(require_artifact(out / TIMELINES, "ingest"), UserTimeline)
    homes = {
        str(tl.user_id): travel_service.home_country(tl.records, matcher)
        for tl in _progress(timelines, "home countries")
    }
    frame = pd.read_csv(users_path, dtype=str, keep_default_na=False)
    resolved = frame["user_id"].map(homes).fillna(frame["home_country"])
    changed = int((resolved != frame["home_country"]).sum())
    frame["home_country"] = resolved
    write_csv(users_path, frame)
    return {"users": int((resolved != "").sum()), "changed": changed}


def read_matches(output_dir: Path) -> dict[str, MatchResult]:
    path = require_artifact(output_dir / MATCHES, "match")
    return {row.key: row.result for row in read_jsonl(path, LocationMatch)}


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------
def run_network(
    settings: Settings,
    granularities: Sequence[Granularity] = GRANULARITIES,
    directions: Sequence[bool] = (True, False),
) -> dict[str, network_service.NetworkStats]:
    out = settings.OUTPUT_DIR
    matcher = gazetteer_service.MatchTable(read_matches(out))
    acc = network_service.NetworkAccumulator()
    for event in _progress(read_events(out), "events"):
        acc.add(event, matcher)

    results = {}
    for granularity in granularities:
        excluded = dict(acc.excluded[granularity])
        for directed in directions:
            network = acc.build(granularity, directed)
            stats = network_service.write_network(network, out, excluded)
            results[f"{granularity}_{'directed' if directed else 'undirected'}"] = stats
        if excluded:
            log.warning("Network (%s): excluded events %s", granularity, excluded)
    return results


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------
PENETRATION = "penetration.csv"
TOP_EDGES = "top_edges.csv"
CONTINENTS = "continents.csv"
HISTOGRAMS = "histograms.json"
MATCH_TYPES = "match_types.csv"
GEOJSON = "network.geojson"
SUMMARY = "summary.json"


def run_report(settings: Settings, network: Granularity = "city", geojson_scope: str = "all") -> dict:
    out = settings.OUTPUT_DIR
    summaries, kept = read_user_summaries(out)
    thresholds = TravelThresholds.from_settings(settings)

    hists = report_service.histograms(summaries)
    write_json(out / HISTOGRAMS, {name: h.model_dump() for name, h in hists.items()})

    matches = read_matches(out)
    rows = report_service.match_type_breakdown(matches, read_events(out))
    write_csv(out / MATCH_TYPES, pd.DataFrame([r.model_dump() for r in rows]))

    chosen = network_service.read_network(out, network, directed=False)
    collection, skipped = report_service.export_geojson(chosen, report_service.vertex_coordinates(chosen), geojson_scope)
    write_json(out / GEOJSON, collection)

    summary = {
        "corpus": report_service.corpus_summary(summaries, kept, thresholds),
        "networks": {
            f"{g}_{'directed' if d else 'undirected'}": network_service.read_stats(out, g, d).model_dump()
            for g in GRANULARITIES for d in (True, False)
            if network_service.stats_path(out, g, d).exists()
        },
        "geojson_skipped_edges": skipped,
    }
    if (out / INGEST_STATS).exists():
        summary["ingest"] = read_json(out / INGEST_STATS)
    if (out / MATCH_STATS).exists():
        summary["match"] = read_json(out / MATCH_STATS)

    if settings.COUNTRY_INFO_PATH is None:
        log.warning("Report: no country info (--country-info); skipping penetration and continent reports")
    else:
        summary["countries"] = _country_reports(settings, summaries, kept)

    write_json(out / SUMMARY, summary)
    log.info("Report written to %s", out)
    return summary


def _country_reports(settings: Settings, summaries: list[UserSummary], kept: dict[int, bool]) -> dict:
    out = settings.OUTPUT_DIR
    info = report_service.parse_country_info(settings.COUNTRY_INFO_PATH).countries

    home_counts: dict[str, int] = {}
    for s in summaries:
        if kept.get(s.user_id) and s.home_country:
            home_counts[s.home_country] = home_counts.get(s.home_country, 0) + 1
    pen = report_service.penetration(home_counts, info, settings.MIN_PENETRATION_USERS)
    write_csv(out / PENETRATION, pd.DataFrame(
        [(c, info[c].continent, pen.users[c], info[c].population, ratio) for c, ratio in pen.ratios.items()],
        columns=["country_code", "continent", "users", "population", "penetration"],
    ))

    country_network = network_service.read_network(out, "country", directed=False)
    top_edges = report_service.top_edges_by_continent(country_network, info)
    write_csv(out / TOP_EDGES, pd.DataFrame(
        [(continent, u, v, w) for continent, ((u, v), w) in top_edges.items()],
        columns=["continent", "origin_key", "dest_key", "weight"],
    ))

    top_pen = report_service.top_penetration_by_continent(pen.ratios, info)
    continents = sorted(set(top_edges) | set(top_pen))
    write_csv(out / CONTINENTS, pd.DataFrame(
        [
            (
                c,
                "-".join(top_edges[c][0]) if c in top_edges else "",
                top_edges[c][1] if c in top_edges else 0,
                top_pen[c][0] if c in top_pen else "",
                top_pen[c][1] if c in top_pen else 0.0,
            )
            for c in continents
        ],
        columns=["continent", "top_edge", "top_edge_weight", "top_penetration_country", "penetration"],
    ))
    return {
        "penetration_countries": len(pen.ratios),
        "missing_country_info": pen.missing_info,
        "penetration_anomalies": pen.anomalies,
    }


def run_all(
    settings: Settings,
    inputs: Sequence[Path],
    emit_events: Optional[Path] = None,
    network: Granularity = "city",
    geojson_scope: str = "all",
) -> dict:
    return {
        "ingest": run_ingest(settings, inputs),
        "events": run_events(settings, emit_events),
        "match": run_match(settings),
        "network": {k: v.model_dump() for k, v in run_network(settings).items()},
        "report": run_report(settings, network, geojson_scope),
    }
