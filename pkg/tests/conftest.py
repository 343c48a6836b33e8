import json
from pathlib import Path
from typing import Optional

import pytest

from app.models import BoundingBox, GeoPoint, LocRef, Place, TravelEvent, TweetRecord, UserTimeline
from app.utils.config import load_settings

DATA_DIR = Path(__file__).resolve().parent / "data"

HOUR = 3600


def box(south: float, west: float, north: float, east: float) -> BoundingBox:
    return BoundingBox(south=south, west=west, north=north, east=east)


def place(place_id: str, bbox: BoundingBox, country_code: str = "", place_type: str = "city") -> Place:
    return Place(place_id=place_id, name=place_id, place_type=place_type, bbox=bbox, country_code=country_code)


def record(
    tweet_id: int,
    timestamp: int,
    lat: Optional[float] = None,
    lon: Optional[float] = None,
    place: Optional[Place] = None,
    user_id: int = 1,
) -> TweetRecord:
    point = GeoPoint(lat=lat, lon=lon) if lat is not None else None
    return TweetRecord(tweet_id=tweet_id, user_id=user_id, timestamp=timestamp, point=point, place=place)


def timeline(records: list[TweetRecord], duplicates: int = 0) -> UserTimeline:
    return UserTimeline(user_id=records[0].user_id if records else 1, duplicates=duplicates, records=records)


def loc(lat: float, lon: float, place: Optional[Place] = None) -> LocRef:
    return LocRef(point=GeoPoint(lat=lat, lon=lon), place=place)


def event(origin: LocRef, destination: LocRef, user_id: int = 1, timestamp: int = 0,
          distance_km: float = 100.0, elapsed_h: float = 1.0) -> TravelEvent:
    return TravelEvent(
        user_id=user_id, origin=origin, destination=destination,
        timestamp=timestamp, distance_km=distance_km, elapsed_h=elapsed_h,
    )


def record_line(tweet_id: int, user_id: int, timestamp, point=None, place=None) -> str:
    return json.dumps({"tweet_id": tweet_id, "user_id": user_id, "timestamp": timestamp, "point": point, "place": place})


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def gazetteer_path() -> Path:
    return DATA_DIR / "geonames_sample.txt"


@pytest.fixture
def country_info_path() -> Path:
    return DATA_DIR / "countryInfo_sample.txt"


@pytest.fixture
def make_settings(tmp_path):
    """Settings rooted in tmp_path; keyword overrides win."""
    def _make(**overrides):
        base = {"OUTPUT_DIR": tmp_path / "out", "TMP_DIR": tmp_path / "spill", "WORKERS": 1}
        base.update(overrides)
        return load_settings(**base)
    return _make
