"""
Travel event detection and spam filtering.

Adjacent records of one user form an event when they are at most MAX_GAP_HOURS
apart, name different non-nested locations, and lie more than MIN_DISTANCE_KM
apart. Filters then run in a fixed order: per-event speed, then per-user tweet
and event counts (events counted after the speed filter).
"""

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from app.models import LocRef, TravelEvent, TweetRecord, UserSummary, UserTimeline
from app.services.gazetteer_service import LocationMatcher
from app.services.geo_service import centroid, contains, haversine_km

log = logging.getLogger("mobility.travel")

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class TravelThresholds:
    max_gap_hours: float = 72.0
    min_distance_km: float = 50.0
    max_speed_kmh: float = 1000.0
    max_user_tweets: int = 1000
    max_user_events: int = 100

    @classmethod
    def from_settings(cls, settings) -> "TravelThresholds":
        return cls(
            max_gap_hours=settings.MAX_GAP_HOURS,
            min_distance_km=settings.MIN_DISTANCE_KM,
            max_speed_kmh=settings.MAX_SPEED_KMH,
            max_user_tweets=settings.MAX_USER_TWEETS,
            max_user_events=settings.MAX_USER_EVENTS,
        )


def effective_location(record: TweetRecord) -> LocRef:
    """Exact coordinates when present, else the centroid of the tagged place."""
    if record.point is not None:
        return LocRef(point=record.point, place=record.place)
    if record.place is None:
        raise ValueError(f"record {record.tweet_id} has no location")
    return LocRef(point=centroid(record.place.bbox), place=record.place)


def same_location(a: LocRef, b: LocRef) -> bool:
    if a.place is not None and b.place is not None:
        if a.place.place_id == b.place.place_id:
            return True
        return contains(a.place.bbox, b.place.bbox) or contains(b.place.bbox, a.place.bbox)
    if a.place is not None:
        return contains(a.place.bbox, b.point)
    if b.place is not None:
        return contains(b.place.bbox, a.point)
    return False


def detect_events(
    timeline: Sequence[TweetRecord],
    max_gap_hours: float = 72.0,
    min_distance_km: float = 50.0,
) -> list[TravelEvent]:
    """Events between consecutive records only; A->B->C never yields A->C."""
    events: list[TravelEvent] = []
    max_gap_s = max_gap_hours * SECONDS_PER_HOUR
    previous: Optional[tuple[TweetRecord, LocRef]] = None
    for record in timeline:
        current = (record, effective_location(record))
        if previous is not None:
            (r0, loc0), (r1, loc1) = previous, current
            gap_s = r1.timestamp - r0.timestamp
            if gap_s <= max_gap_s and not same_location(loc0, loc1):
                distance = haversine_km(loc0.point, loc1.point)
                if distance > min_distance_km:
                    event = TravelEvent(
                        user_id=r1.user_id,
                        origin=loc0,
                        destination=loc1,
                        timestamp=r1.timestamp,
                        distance_km=distance,
                        elapsed_h=gap_s / SECONDS_PER_HOUR,
                    )
                    assert event.distance_km > min_distance_km and event.elapsed_h <= max_gap_hours
                    events.append(event)
        previous = current
    return events


def speed_filter(event: TravelEvent, max_speed_kmh: float = 1000.0) -> bool:
    """True to keep. Zero-elapsed events imply infinite speed and are dropped."""
    return event.speed_kmh <= max_speed_kmh


def user_filters(summary: UserSummary, max_user_tweets: int = 1000, max_user_events: int = 100) -> bool:
    """True to keep the user and all of their events."""
    return summary.geotagged_tweet_count <= max_user_tweets and summary.travel_event_count <= max_user_events


def _record_country(record: TweetRecord, matcher: Optional[LocationMatcher]) -> str:
    if record.place is not None and record.place.country_code:
        return record.place.country_code
    if matcher is not None:
        result = matcher.match_location(effective_location(record))
        if result.matched:
            return result.entry.country_code
    return ""


def home_country(records: Iterable[TweetRecord], matcher: Optional[LocationMatcher] = None) -> str:
    """
    Modal country across the records; ties go to the country seen earliest.
    A record counts with its place country, otherwise with the country of its
    gazetteer match when a matcher is given. Records with neither are ignored.
    """
    counts: Counter = Counter()
    first_seen: dict[str, int] = {}
    for i, record in enumerate(records):
        code = _record_country(record, matcher)
        if not code:
            continue
        counts[code] += 1
        first_seen.setdefault(code, i)
    if not counts:
        return ""
    return min(counts, key=lambda c: (-counts[c], first_seen[c]))


@dataclass
class TimelineResult:
    summary: UserSummary
    events: list[TravelEvent]
    kept: bool


def process_timeline(timeline: UserTimeline, thresholds: TravelThresholds = TravelThresholds()) -> TimelineResult:
    """detect -> speed filter -> per-user counts -> user filters, for one user."""
    detected = detect_events(timeline.records, thresholds.max_gap_hours, thresholds.min_distance_km)
    fast_enough = [e for e in detected if speed_filter(e, thresholds.max_speed_kmh)]
    summary = UserSummary(
        user_id=timeline.user_id,
        geotagged_tweet_count=timeline.geotagged_tweet_count,
        travel_event_count=len(fast_enough),
        detected_event_count=len(detected),
        home_country=home_country(timeline.records),
    )
    kept = user_filters(summary, thresholds.max_user_tweets, thresholds.max_user_events)
    return TimelineResult(summary=summary, events=fast_enough if kept else [], kept=kept)


def process_batch(batch: tuple[list[UserTimeline], TravelThresholds]) -> list[TimelineResult]:
    timelines, thresholds = batch
    return [process_timeline(t, thresholds) for t in timelines]
