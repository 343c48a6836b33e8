"""
Domain types shared by the pipeline stages.

Validated values (points, boxes, records, events) are frozen pydantic models so
construction outside the documented ranges is rejected. Gazetteer rows are
plain NamedTuples: a full dump holds millions of them.
"""

import math
from datetime import datetime
from typing import List, Literal, NamedTuple, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator
from pydantic_core import PydanticCustomError

UINT64_MAX = 2**64 - 1

PlaceType = Literal["country", "admin", "city", "neighborhood", "poi"]
MatchStatus = Literal["matched-city-pass", "matched-full-pass", "unmatched"]
Continent = Literal["AF", "AS", "EU", "NA", "OC", "SA", "AN"]

FEATURE_CLASSES = ("A", "H", "L", "P", "R", "S", "T", "U", "V")


class GeoPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    lat: float = Field(ge=-90.0, le=90.0, allow_inf_nan=False)
    lon: float = Field(ge=-180.0, le=180.0, allow_inf_nan=False)


class BoundingBox(BaseModel):
    """A lat/lon box. west > east means the box crosses the antimeridian."""

    model_config = ConfigDict(frozen=True)

    south: float = Field(ge=-90.0, le=90.0, allow_inf_nan=False)
    west: float = Field(ge=-180.0, le=180.0, allow_inf_nan=False)
    north: float = Field(ge=-90.0, le=90.0, allow_inf_nan=False)
    east: float = Field(ge=-180.0, le=180.0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _check_lat_order(self) -> "BoundingBox":
        if self.south > self.north:
            raise ValueError(f"south {self.south} is north of north {self.north}")
        return self

    @property
    def crosses_antimeridian(self) -> bool:
        return self.west > self.east


class Place(BaseModel):
    model_config = ConfigDict(frozen=True)

    place_id: str = Field(min_length=1)
    name: str = ""
    place_type: PlaceType
    bbox: BoundingBox
    country_code: str = Field(default="", pattern=r"^([A-Z]{2})?$")

    @field_validator("country_code", mode="before")
    @classmethod
    def _upper_country(cls, value):
        return value.upper() if isinstance(value, str) else value


class TweetRecord(BaseModel):
    """
    One geotagged message. Validate with context {"timestamp_format": "rfc3339"}
    to accept RFC3339 strings; the default expects integer epoch seconds.
    """

    model_config = ConfigDict(frozen=True)

    tweet_id: int = Field(ge=0, le=UINT64_MAX, strict=True)
    user_id: int = Field(ge=0, le=UINT64_MAX, strict=True)
    timestamp: int
    point: Optional[GeoPoint] = None
    place: Optional[Place] = None

    @field_validator("timestamp", mode="before")
    @classmethod
    def _parse_timestamp(cls, value, info: ValidationInfo):
        fmt = (info.context or {}).get("timestamp_format", "epoch")
        if fmt == "rfc3339":
            if not isinstance(value, str):
                raise ValueError("expected an RFC3339 timestamp string")
            parsed = datetime.fromisoformat(value.replace("Z", "+00:00"))
            if parsed.tzinfo is None:
                raise ValueError("RFC3339 timestamp lacks a UTC offset")
            return math.floor(parsed.timestamp())
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError("expected integer epoch seconds")
        return value

    @model_validator(mode="after")
    def _require_location(self) -> "TweetRecord":
        if self.point is None and self.place is None:
            raise PydanticCustomError("no_location", "record has neither coordinates nor a tagged place")
        return self

    @property
    def sort_key(self) -> tuple[int, int, int]:
        return (self.user_id, self.timestamp, self.tweet_id)


class UserTimeline(BaseModel):
    """A user's records in (timestamp, tweet_id) order with exact duplicates removed."""

    user_id: int
    duplicates: int = 0
    records: List[TweetRecord]

    @property
    def geotagged_tweet_count(self) -> int:
        return len(self.records) + self.duplicates


class LocRef(BaseModel):
    """Effective location of a record: exact point, or the place centroid."""

    model_config = ConfigDict(frozen=True)

    point: GeoPoint
    place: Optional[Place] = None

    @property
    def key(self) -> str:
        """Identity used to memoize gazetteer matches."""
        if self.place is not None:
            return f"place:{self.place.place_id}"
        return f"point:{self.point.lat!r},{self.point.lon!r}"

    @property
    def country_code(self) -> str:
        return self.place.country_code if self.place is not None else ""


class TravelEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    user_id: int
    origin: LocRef
    destination: LocRef
    timestamp: int
    distance_km: float = Field(ge=0.0)
    elapsed_h: float = Field(ge=0.0)

    @property
    def speed_kmh(self) -> float:
        if self.elapsed_h == 0:
            return math.inf if self.distance_km > 0 else 0.0
        return self.distance_km / self.elapsed_h


class UserSummary(BaseModel):
    user_id: int
    geotagged_tweet_count: int = Field(ge=0)
    travel_event_count: int = Field(ge=0)
    detected_event_count: int = Field(default=0, ge=0)
    home_country: str = ""


class GazetteerEntry(NamedTuple):
    geoname_id: int
    name: str
    lat: float
    lon: float
    feature_class: str
    feature_code: str
    country_code: str
    population: int

    @property
    def point(self) -> GeoPoint:
        return GeoPoint(lat=self.lat, lon=self.lon)


class MatchResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    status: MatchStatus
    entry: Optional[GazetteerEntry] = None
    distance_km: Optional[float] = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "MatchResult":
        unmatched = self.status == "unmatched"
        if unmatched != (self.entry is None) or unmatched != (self.distance_km is None):
            raise ValueError("unmatched results carry no entry or distance; matched results carry both")
        return self

    @property
    def matched(self) -> bool:
        return self.entry is not None


UNMATCHED = MatchResult(status="unmatched")


class LocationMatch(BaseModel):
    """One row of the match artifact: a location key and its resolution."""

    key: str
    result: MatchResult


class CountryInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    country_code: str = Field(pattern=r"^[A-Z]{2}$")
    name: str = ""
    continent: Continent
    population: int = Field(ge=0)
    geoname_id: Optional[int] = None


class Histogram(BaseModel):
    """Bin i covers [edges[i], edges[i+1]); the last bin is closed on the right."""

    edges: List[int] = []
    counts: List[int] = []

    @property
    def total(self) -> int:
        return sum(self.counts)
