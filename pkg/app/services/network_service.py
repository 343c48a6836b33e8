"""
City and country travel networks.

Events are resolved to vertex pairs (gazetteer ids for cities, country codes
for countries), counted into shard-local Counters that merge by addition, and
materialized as networkx graphs with a `weight` attribute. Self-loops are never
added; excluded events are counted by reason.
"""

import logging
from collections import Counter, defaultdict
from pathlib import Path
from typing import Hashable, Iterable, Literal, Optional

import networkx as nx
import pandas as pd
from pydantic import BaseModel

from app.models import GazetteerEntry, LocRef, TravelEvent
from app.services.gazetteer_service import LocationMatcher
from app.services.geo_service import weighted_center
from app.utils.files import read_json, require_artifact, write_csv, write_json

log = logging.getLogger("mobility.network")

Granularity = Literal["city", "country"]
GRANULARITIES: tuple[Granularity, ...] = ("city", "country")

EXCLUDED_UNMATCHED = "unmatched-endpoint"
EXCLUDED_SELF_LOOP = "self-loop"
EXCLUDED_NO_COUNTRY = "no-country"

VERTEX_COLUMNS = ["key", "name", "country_code", "feature_class", "population", "lat", "lon"]


class NetworkStats(BaseModel):
    granularity: str
    directed: bool
    vertex_count: int
    edge_count: int
    edge_density: float
    density_defined: bool
    total_weight: int
    excluded: dict[str, int] = {}


class TravelNetwork:
    """
    Weighted travel graph. Undirected edge keys are ordered smaller key first
    and carry the sum of both directed weights.
    """

    def __init__(self, granularity: Granularity, directed: bool, graph: nx.Graph):
        self.granularity = granularity
        self.directed = directed
        self.graph = graph

    @classmethod
    def from_counts(
        cls,
        counts: Counter,
        granularity: Granularity,
        directed: bool,
        vertices: Optional[dict[Hashable, dict]] = None,
    ) -> "TravelNetwork":
        folded: Counter = Counter()
        for (u, v), weight in counts.items():
            if u == v or weight <= 0:
                continue
            key = (u, v) if directed or u <= v else (v, u)
            folded[key] += weight

        graph = nx.DiGraph() if directed else nx.Graph()
        vertices = vertices or {}
        for node in sorted({n for pair in folded for n in pair}):
            graph.add_node(node, **vertices.get(node, {}))
        for (u, v) in sorted(folded):
            graph.add_edge(u, v, weight=folded[(u, v)])
        return cls(granularity, directed, graph)

    @property
    def vertices(self) -> dict[Hashable, dict]:
        return {node: dict(data) for node, data in self.graph.nodes(data=True)}

    @property
    def edges(self) -> dict[tuple[Hashable, Hashable], int]:
        out = {}
        for u, v, weight in self.graph.edges(data="weight"):
            if not self.directed and v < u:
                u, v = v, u
            out[(u, v)] = weight
        return dict(sorted(out.items()))

    def weight(self, u: Hashable, v: Hashable) -> int:
        data = self.graph.get_edge_data(u, v)
        return data["weight"] if data else 0

    @property
    def total_weight(self) -> int:
        return int(self.graph.size(weight="weight"))


def edge_density(vertex_count: int, edge_count: int, directed: bool) -> float:
    """Realized edges over possible edges; 0 when fewer than two vertices."""
    if vertex_count < 2:
        return 0.0
    possible = vertex_count * (vertex_count - 1)
    if not directed:
        possible /= 2
    return edge_count / possible


def network_stats(network: TravelNetwork, excluded: Optional[dict[str, int]] = None) -> NetworkStats:
    v = network.graph.number_of_nodes()
    e = network.graph.number_of_edges()
    return NetworkStats(
        granularity=network.granularity,
        directed=network.directed,
        vertex_count=v,
        edge_count=e,
        edge_density=edge_density(v, e, network.directed),
        density_defined=v >= 2,
        total_weight=network.total_weight,
        excluded=dict(sorted((excluded or {}).items())),
    )


def _city_endpoint(loc: LocRef, matcher: LocationMatcher) -> Optional[GazetteerEntry]:
    return matcher.match_location(loc).entry


def resolve_event_city(event: TravelEvent, matcher: LocationMatcher) -> Optional[tuple[int, int]]:
    pair, _ = _resolve_city(event, matcher)
    return pair


def _resolve_city(event: TravelEvent, matcher: LocationMatcher):
    origin = _city_endpoint(event.origin, matcher)
    dest = _city_endpoint(event.destination, matcher)
    if origin is None or dest is None:
        return None, EXCLUDED_UNMATCHED
    if origin.geoname_id == dest.geoname_id:
        return None, EXCLUDED_SELF_LOOP
    return (origin.geoname_id, dest.geoname_id), None


def _country_of(loc: LocRef, matcher: Optional[LocationMatcher]) -> str:
    if loc.country_code:
        return loc.country_code
    if matcher is not None:
        entry = matcher.match_location(loc).entry
        if entry is not None:
            return entry.country_code
    return ""


def resolve_event_country(event: TravelEvent, matcher: Optional[LocationMatcher] = None) -> Optional[tuple[str, str]]:
    """
    Tagged-place countries first; endpoints without one fall back to the
    country of their gazetteer match.
    """
    pair, _ = _resolve_country(event, matcher)
    return pair


def _resolve_country(event: TravelEvent, matcher: Optional[LocationMatcher]):
    origin = _country_of(event.origin, matcher)
    dest = _country_of(event.destination, matcher)
    if not origin or not dest:
        return None, EXCLUDED_NO_COUNTRY
    if origin == dest:
        return None, EXCLUDED_SELF_LOOP
    return (origin, dest), None


def build_network(pairs: Iterable[tuple[Hashable, Hashable]], granularity: Granularity, directed: bool) -> TravelNetwork:
    return TravelNetwork.from_counts(Counter(pairs), granularity, directed)


class NetworkAccumulator:
    """Shard-local pair counts for both granularities; merge with `+=`."""

    def __init__(self):
        self.pairs: dict[str, Counter] = {g: Counter() for g in GRANULARITIES}
        self.excluded: dict[str, Counter] = {g: Counter() for g in GRANULARITIES}
        self.entries: dict[int, GazetteerEntry] = {}
        self.events = 0

    def add(self, event: TravelEvent, matcher: LocationMatcher) -> None:
        self.events += 1
        city, reason = _resolve_city(event, matcher)
        if city is None:
            self.excluded["city"][reason] += 1
        else:
            self.pairs["city"][city] += 1
        country, reason = _resolve_country(event, matcher)
        if country is None:
            self.excluded["country"][reason] += 1
        else:
            self.pairs["country"][country] += 1
        for loc in (event.origin, event.destination):
            entry = matcher.match_location(loc).entry
            if entry is not None:
                self.entries[entry.geoname_id] = entry

    def __iadd__(self, other: "NetworkAccumulator") -> "NetworkAccumulator":
        for g in GRANULARITIES:
            self.pairs[g].update(other.pairs[g])
            self.excluded[g].update(other.excluded[g])
        self.entries.update(other.entries)
        self.events += other.events
        return self

    def city_vertices(self) -> dict[int, dict]:
        return {
            e.geoname_id: {
                "name": e.name,
                "country_code": e.country_code,
                "feature_class": e.feature_class,
                "population": e.population,
                "lat": e.lat,
                "lon": e.lon,
            }
            for e in self.entries.values()
        }

    def country_vertices(self) -> dict[str, dict]:
        """Population-weighted spherical center of the matched entries in each country."""
        by_country: dict[str, list[GazetteerEntry]] = defaultdict(list)
        for entry in sorted(self.entries.values(), key=lambda e: e.geoname_id):
            if entry.country_code:
                by_country[entry.country_code].append(entry)
        vertices = {}
        for code, entries in by_country.items():
            center = weighted_center([e.point for e in entries], [e.population for e in entries])
            vertices[code] = {"name": code, "country_code": code, "lat": center.lat, "lon": center.lon}
        return vertices

    def build(self, granularity: Granularity, directed: bool) -> TravelNetwork:
        vertices = self.city_vertices() if granularity == "city" else self.country_vertices()
        return TravelNetwork.from_counts(self.pairs[granularity], granularity, directed, vertices)


def _suffix(granularity: str, directed: bool) -> str:
    return f"{granularity}_{'directed' if directed else 'undirected'}"


def edges_path(output_dir: Path, granularity: str, directed: bool) -> Path:
    return output_dir / f"edges_{_suffix(granularity, directed)}.csv"


def vertices_path(output_dir: Path, granularity: str) -> Path:
    return output_dir / f"vertices_{granularity}.csv"


def stats_path(output_dir: Path, granularity: str, directed: bool) -> Path:
    return output_dir / f"stats_{_suffix(granularity, directed)}.json"


def write_network(network: TravelNetwork, output_dir: Path, excluded: Optional[dict[str, int]] = None) -> NetworkStats:
    edges = network.edges
    write_csv(
        edges_path(output_dir, network.granularity, network.directed),
        pd.DataFrame(
            [(u, v, w) for (u, v), w in edges.items()],
            columns=["origin_key", "dest_key", "weight"],
        ),
    )
    rows = [{"key": key, **{c: meta.get(c, "") for c in VERTEX_COLUMNS[1:]}} for key, meta in sorted(network.vertices.items())]
    write_csv(vertices_path(output_dir, network.granularity), pd.DataFrame(rows, columns=VERTEX_COLUMNS))
    stats = network_stats(network, excluded)
    write_json(stats_path(output_dir, network.granularity, network.directed), stats.model_dump())
    log.info(
        "%s network (%s): %d vertices, %d edges, weight %d",
        network.granularity, "directed" if network.directed else "undirected",
        stats.vertex_count, stats.edge_count, stats.total_weight,
    )
    return stats



_NUMERIC_VERTEX_FIELDS = {"population": int, "lat": float, "lon": float}


def _vertex_meta(row: dict) -> dict:
    meta = {}
    for column, value in row.items():
        if value == "":
            continue
        cast = _NUMERIC_VERTEX_FIELDS.get(column)
        meta[column] = cast(float(value)) if cast is int else cast(value) if cast else value
    return meta


def read_network(output_dir: Path, granularity: Granularity, directed: bool) -> TravelNetwork:
    path = require_artifact(edges_path(output_dir, granularity, directed), "network")
    key_type = int if granularity == "city" else str
    # keep_default_na=False: "NA" is Namibia, not a missing value
    edges = pd.read_csv(path, dtype=str, keep_default_na=False)
    counts = Counter({(key_type(u), key_type(v)): int(w) for u, v, w in edges.itertuples(index=False)})

    vertices: dict[Hashable, dict] = {}
    vpath = vertices_path(output_dir, granularity)
    if vpath.exists():
        for row in pd.read_csv(vpath, dtype=str, keep_default_na=False).to_dict("records"):
            vertices[key_type(row.pop("key"))] = _vertex_meta(row)
    return TravelNetwork.from_counts(counts, granularity, directed, vertices)


def read_stats(output_dir: Path, granularity: str, directed: bool) -> NetworkStats:
    path = require_artifact(stats_path(output_dir, granularity, directed), "network")
    return NetworkStats.model_validate(read_json(path))
