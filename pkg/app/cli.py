"""
Command line entry point: `python -m app.cli [--config PATH] [--log-level L] <command>`.

Every flag is optional and overrides the matching Settings field; unset flags
fall through to the config file, the environment and the defaults.
"""

import json
import logging
from pathlib import Path
from typing import Optional

import click

from app.services import pipeline_service, synthetic_service
from app.utils.config import Settings, load_settings
from app.utils.logger import set_level

log = logging.getLogger("mobility.cli")

PathArg = click.Path(path_type=Path)
ExistingPath = click.Path(path_type=Path, exists=True, dir_okay=False)


def _echo_json(data: dict) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True, default=str))


def _settings(ctx: click.Context, **overrides) -> Settings:
    try:
        return load_settings(ctx.obj["config"], **overrides)
    except ValueError as e:
        raise click.BadParameter(str(e))


def _run(stage, *args, **kwargs):
    """Run a stage, turning missing artifacts and bad inputs into one-line errors."""
    try:
        return stage(*args, **kwargs)
    except (FileNotFoundError, ValueError) as e:
        raise click.ClickException(str(e))


# Option groups shared by the stage commands -----------------------------------
def _output_option(f):
    return click.option("--output-dir", type=PathArg, default=None, help="Artifact directory.")(f)


def _common(f):
    """--output-dir plus --workers, for the stages that run a process pool."""
    f = _output_option(f)
    f = click.option("--workers", type=click.IntRange(min=1), default=None, help="Worker processes.")(f)
    return f


def _ingest_options(f):
    f = click.option("--input", "inputs", type=ExistingPath, multiple=True, help="Newline-delimited record file (repeatable).")(f)
    f = click.option("--tmp-dir", type=PathArg, default=None, help="Directory for spilled sort runs.")(f)
    f = click.option("--max-memory-mb", type=click.IntRange(min=1), default=None)(f)
    f = click.option("--timestamp-format", type=click.Choice(["epoch", "rfc3339"]), default=None)(f)
    return f


def _event_options(f):
    f = click.option("--max-gap-hours", type=float, default=None)(f)
    f = click.option("--min-distance-km", type=float, default=None)(f)
    f = click.option("--max-speed-kmh", type=float, default=None)(f)
    f = click.option("--max-user-tweets", type=int, default=None)(f)
    f = click.option("--max-user-events", type=int, default=None)(f)
    f = click.option("--emit-events", type=PathArg, default=None, help="Also write kept events as a flat CSV.")(f)
    return f


def _match_options(f):
    f = click.option("--gazetteer", type=ExistingPath, default=None, help="Geonames allCountries.txt.")(f)
    f = click.option("--min-city-population", type=click.IntRange(min=0), default=None)(f)
    f = click.option("--match-radius-km", type=click.FloatRange(min=0, min_open=True), default=None)(f)
    return f


def _report_options(f):
    f = click.option("--country-info", type=ExistingPath, default=None, help="Geonames countryInfo.txt.")(f)
    f = click.option("--min-penetration-users", type=click.IntRange(min=0), default=None)(f)
    f = click.option("--network", type=click.Choice(["city", "country"]), default="city", show_default=True, help="Network exported as GeoJSON.")(f)
    f = click.option(
        "--geojson-scope",
        type=click.Choice(["all", "intra-country", "inter-country"]),
        default="all",
        show_default=True,
    )(f)
    return f


@click.group()
@click.option("--config", type=ExistingPath, default=None, help="dotenv-style settings file.")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False), default=None)
@click.pass_context
def cli(ctx: click.Context, config: Optional[Path], log_level: Optional[str]):
    """Twitter mobility network pipeline."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = config
    set_level(log_level or load_settings(config).LOG_LEVEL)


@cli.command()
@click.option("--users", type=click.IntRange(min=1), default=10_000, show_default=True)
@click.option("--records-per-user", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", type=PathArg, required=True, help="Corpus file to write.")
@click.option("--gazetteer-output", type=PathArg, default=None, help="Also write a matching Geonames file.")
def synth(users: int, records_per_user: int, seed: int, output: Path, gazetteer_output: Optional[Path]):
    """Write a deterministic synthetic corpus."""
    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "w", encoding="utf-8") as f:
        f.writelines(synthetic_service.generate_corpus(users, records_per_user, seed))
    if gazetteer_output is not None:
        gazetteer_output.parent.mkdir(parents=True, exist_ok=True)
        with open(gazetteer_output, "w", encoding="utf-8") as f:
            f.writelines(synthetic_service.gazetteer_lines())
    log.info("Wrote %d records for %d users to %s", users * records_per_user, users, output)


@cli.command()
@_common
@_ingest_options
@click.pass_context
def ingest(ctx, inputs, tmp_dir, max_memory_mb, timestamp_format, workers, output_dir):
    """Parse input files and group records into per-user timelines."""
    settings = _settings(
        ctx, TMP_DIR=tmp_dir, MAX_MEMORY_MB=max_memory_mb, TIMESTAMP_FORMAT=timestamp_format,
        WORKERS=workers, OUTPUT_DIR=output_dir,
    )
    _echo_json(_run(pipeline_service.run_ingest, settings, list(inputs)))


@cli.command()
@_common
@_event_options
@click.pass_context
def events(ctx, max_gap_hours, min_distance_km, max_speed_kmh, max_user_tweets, max_user_events, emit_events, workers, output_dir):
    """Detect travel events and apply the speed and per-user filters."""
    settings = _settings(
        ctx, MAX_GAP_HOURS=max_gap_hours, MIN_DISTANCE_KM=min_distance_km, MAX_SPEED_KMH=max_speed_kmh,
        MAX_USER_TWEETS=max_user_tweets, MAX_USER_EVENTS=max_user_events, WORKERS=workers, OUTPUT_DIR=output_dir,
    )
    _echo_json(_run(pipeline_service.run_events, settings, emit_events))


@cli.command()
@_output_option
@_match_options
@click.pass_context
def match(ctx, gazetteer, min_city_population, match_radius_km, output_dir):
    """Resolve event endpoints against the gazetteer."""
    settings = _settings(
        ctx, GAZETTEER_PATH=gazetteer, MIN_CITY_POPULATION=min_city_population,
        MATCH_RADIUS_KM=match_radius_km, OUTPUT_DIR=output_dir,
    )
    _echo_json(_run(pipeline_service.run_match, settings))


@cli.command()
@_output_option
@click.option("--network", type=click.Choice(["city", "country", "all"]), default="all", show_default=True)
@click.option("--directed", type=click.BOOL, default=None, help="true or false; both when omitted.")
@click.pass_context
def network(ctx, network, directed, output_dir):
    """Build the city and country travel networks."""
    settings = _settings(ctx, OUTPUT_DIR=output_dir)
    granularities = ("city", "country") if network == "all" else (network,)
    directions = (True, False) if directed is None else (directed,)
    stats = _run(pipeline_service.run_network, settings, granularities, directions)
    _echo_json({name: s.model_dump() for name, s in stats.items()})


@cli.command()
@_output_option
@_report_options
@click.pass_context
def report(ctx, country_info, min_penetration_users, network, geojson_scope, output_dir):
    """Penetration, continent, histogram, match-type and GeoJSON reports."""
    settings = _settings(
        ctx, COUNTRY_INFO_PATH=country_info, MIN_PENETRATION_USERS=min_penetration_users, OUTPUT_DIR=output_dir,
    )
    _echo_json(_run(pipeline_service.run_report, settings, network, geojson_scope))


@cli.command("run-all")
@_common
@_ingest_options
@_event_options
@_match_options
@_report_options
@click.pass_context
def run_all(
    ctx, inputs, tmp_dir, max_memory_mb, timestamp_format,
    max_gap_hours, min_distance_km, max_speed_kmh, max_user_tweets, max_user_events, emit_events,
    gazetteer, min_city_population, match_radius_km,
    country_info, min_penetration_users, network, geojson_scope,
    workers, output_dir,
):
    """ingest -> events -> match -> network -> report."""
    settings = _settings(
        ctx,
        TMP_DIR=tmp_dir, MAX_MEMORY_MB=max_memory_mb, TIMESTAMP_FORMAT=timestamp_format,
        MAX_GAP_HOURS=max_gap_hours, MIN_DISTANCE_KM=min_distance_km, MAX_SPEED_KMH=max_speed_kmh,
        MAX_USER_TWEETS=max_user_tweets, MAX_USER_EVENTS=max_user_events,
        GAZETTEER_PATH=gazetteer, MIN_CITY_POPULATION=min_city_population, MATCH_RADIUS_KM=match_radius_km,
        COUNTRY_INFO_PATH=country_info, MIN_PENETRATION_USERS=min_penetration_users,
        WORKERS=workers, OUTPUT_DIR=output_dir,
    )
    result = _run(pipeline_service.run_all, settings, list(inputs), emit_events, network, geojson_scope)
    _echo_json(result["report"])


@cli.command()
@_output_option
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx, output_dir, host, port):
    """Serve the artifacts of an output directory over HTTP."""
    import uvicorn

    from main import create_app

    settings = _settings(ctx, OUTPUT_DIR=output_dir, API_HOST=host, API_PORT=port)
    uvicorn.run(create_app(settings), host=settings.API_HOST, port=settings.API_PORT)


if __name__ == "__main__":
    cli()
