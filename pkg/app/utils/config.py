import os
import logging
import typing
from pathlib import Path
from dataclasses import dataclass, fields, replace
from typing import Optional, Any

from dotenv import load_dotenv, dotenv_values

load_dotenv()

log = logging.getLogger("mobility.config")


def _optional_path(name: str) -> Optional[Path]:
    value = os.getenv(name)
    return Path(value) if value else None


@dataclass(frozen=True)
class Settings:
    # Travel event rules
    MAX_GAP_HOURS: float = float(os.getenv("MAX_GAP_HOURS", 72.0))
    MIN_DISTANCE_KM: float = float(os.getenv("MIN_DISTANCE_KM", 50.0))

    # Spam filters
    MAX_SPEED_KMH: float = float(os.getenv("MAX_SPEED_KMH", 1000.0))
    MAX_USER_TWEETS: int = int(os.getenv("MAX_USER_TWEETS", 1000))
    MAX_USER_EVENTS: int = int(os.getenv("MAX_USER_EVENTS", 100))

    # Gazetteer matching
    GAZETTEER_PATH: Optional[Path] = _optional_path("GAZETTEER_PATH")
    MATCH_RADIUS_KM: float = float(os.getenv("MATCH_RADIUS_KM", 50.0))
    MIN_CITY_POPULATION: int = int(os.getenv("MIN_CITY_POPULATION", 1000))
    GRID_CELL_DEG: float = float(os.getenv("GRID_CELL_DEG", 1.0))
    MATCH_CACHE_SIZE: int = int(os.getenv("MATCH_CACHE_SIZE", 2_000_000))

    # Reports
    COUNTRY_INFO_PATH: Optional[Path] = _optional_path("COUNTRY_INFO_PATH")
    MIN_PENETRATION_USERS: int = int(os.getenv("MIN_PENETRATION_USERS", 5000))

    # Ingest & execution
    TIMESTAMP_FORMAT: str = os.getenv("TIMESTAMP_FORMAT", "epoch")
    MAX_MEMORY_MB: int = int(os.getenv("MAX_MEMORY_MB", 512))
    WORKERS: int = int(os.getenv("WORKERS", 1))
    TMP_DIR: Optional[Path] = _optional_path("TMP_DIR")

    # Paths
    OUTPUT_DIR: Path = Path(os.getenv("OUTPUT_DIR", "output"))

    # API & logging
    API_HOST: str = os.getenv("API_HOST", "127.0.0.1")
    API_PORT: int = int(os.getenv("API_PORT", 8000))
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")


def _coerce(field_type: Any, raw: str) -> Any:
    args = [a for a in typing.get_args(field_type) if a is not type(None)]
    target = args[0] if args else field_type
    if target is Path:
        return Path(raw) if raw else None
    if target is bool:
        return raw.strip().lower() in ("1", "true", "yes")
    return target(raw)


def load_settings(config_path: Optional[Path] = None, **overrides: Any) -> Settings:
    """
    Build Settings with precedence: overrides > config file > environment > defaults.
    Overrides whose value is None are ignored so unset CLI flags fall through.
    """
    known = {f.name: f for f in fields(Settings)}
    values: dict[str, Any] = {}

    if config_path is not None:
        for key, raw in dotenv_values(config_path).items():
            if key not in known:
                log.warning("Ignoring unknown config key %s in %s", key, config_path)
                continue
            if raw is None:
                continue
            try:
                values[key] = _coerce(known[key].type, raw)
            except (TypeError, ValueError) as e:
                raise ValueError(f"Invalid value for {key} in {config_path}: {raw!r}") from e

    for key, value in overrides.items():
        if value is None:
            continue
        if key not in known:
            raise ValueError(f"Unknown setting {key}")
        values[key] = value

    settings = replace(Settings(), **values)
    if settings.TIMESTAMP_FORMAT not in ("epoch", "rfc3339"):
        raise ValueError(f"TIMESTAMP_FORMAT must be epoch or rfc3339, got {settings.TIMESTAMP_FORMAT!r}")
    return settings

