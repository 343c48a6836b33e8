"""
Deterministic synthetic corpora in the input line format, plus a matching
Geonames-format gazetteer, for tests and scale runs.
"""

import json
import random
from typing import Iterator, NamedTuple


class City(NamedTuple):
    geoname_id: int
    name: str
    lat: float
    lon: float
    country_code: str
    population: int


CITIES: tuple[City, ...] = (
    City(5128581, "New York City", 40.71427, -74.00597, "US", 8804190),
    City(4930956, "Boston", 42.35843, -71.05977, "US", 675647),
    City(6167865, "Toronto", 43.70643, -79.39864, "CA", 2600000),
    City(2643743, "London", 51.50853, -0.12574, "GB", 8961989),
    City(2988507, "Paris", 48.85341, 2.3488, "FR", 2138551),
    City(2950159, "Berlin", 52.52437, 13.41053, "DE", 3426354),
    City(3117735, "Madrid", 40.4165, -3.70256, "ES", 3255944),
    City(3435910, "Buenos Aires", -34.61315, -58.37723, "AR", 13076300),
    City(3448439, "Sao Paulo", -23.5475, -46.63611, "BR", 10021295),
    City(1642911, "Jakarta", -6.21462, 106.84513, "ID", 8540121),
    City(1735161, "Kuala Lumpur", 3.1412, 101.68653, "MY", 1453975),
    City(993800, "Johannesburg", -26.20227, 28.04363, "ZA", 2026469),
    City(933773, "Gaborone", -24.65451, 25.90859, "BW", 208411),
    City(2198148, "Suva", -18.14161, 178.44149, "FJ", 77366),
)

START_TS = 1325376000  # 2012-01-01T00:00:00Z


def gazetteer_lines(cities: tuple[City, ...] = CITIES) -> Iterator[str]:
    """Geonames allCountries rows (19 tab-separated fields) for the cities."""
    for c in cities:
        fields = [
            str(c.geoname_id), c.name, c.name, "", repr(c.lat), repr(c.lon), "P", "PPL",
            c.country_code, "", "", "", "", "", str(c.population), "", "0", "UTC", "2020-01-01",
        ]
        yield "\t".join(fields) + "\n"


def _record(tweet_id: int, user_id: int, ts: int, city: City, rng: random.Random) -> dict:
    record: dict = {"tweet_id": tweet_id, "user_id": user_id, "timestamp": ts, "point": None, "place": None}
    if rng.random() < 0.5:
        record["point"] = {"lat": city.lat + rng.uniform(-0.05, 0.05), "lon": city.lon + rng.uniform(-0.05, 0.05)}
    if record["point"] is None or rng.random() < 0.3:
        record["place"] = {
            "place_id": f"place-{city.geoname_id}",
            "name": city.name,
            "place_type": "city",
            "bbox": {"south": city.lat - 0.1, "west": city.lon - 0.1, "north": city.lat + 0.1, "east": city.lon + 0.1},
            "country_code": city.country_code,
        }
    return record


def generate_corpus(users: int, records_per_user: int, seed: int = 0, travel_prob: float = 0.2) -> Iterator[str]:
    """
    JSON lines with users interleaved round-robin. Each user stays in a city
    and moves to another with probability travel_prob per record; gaps range
    from minutes to several days.
    """
    rng = random.Random(seed)
    city_of = [rng.randrange(len(CITIES)) for _ in range(users)]
    clock = [START_TS + rng.randrange(0, 86400 * 365) for _ in range(users)]
    tweet_id = 10**12
    for _ in range(records_per_user):
        for user in range(users):
            if rng.random() < travel_prob:
                city_of[user] = rng.randrange(len(CITIES))
            clock[user] += rng.choice((300, 3600, 6 * 3600, 20 * 3600, 80 * 3600))
            tweet_id += rng.randrange(1, 1000)
            yield json.dumps(_record(tweet_id, user + 1, clock[user], CITIES[city_of[user]], rng)) + "\n"
