from pathlib import Path
from typing import Literal

import pandas as pd
from fastapi import APIRouter, Query, Request
from fastapi.responses import JSONResponse

from app.api.schemas import (
    ContinentRow,
    EdgeOut,
    EdgesResponse,
    ErrorResponse,
    HealthResponse,
    PenetrationRow,
    SummaryResponse,
)
from app.services import network_service, pipeline_service, report_service
from app.utils.config import Settings
from app.utils.files import read_json, require_artifact
from app.utils.logger import logger

router = APIRouter()

NOT_FOUND = {404: {"model": ErrorResponse}, 500: {"model": ErrorResponse}}


def _output_dir(request: Request) -> Path:
    settings: Settings = request.app.state.settings
    return settings.OUTPUT_DIR


def _read_table(path: Path, stage: str) -> list[dict]:
    # keep_default_na=False: "NA" is a continent and a country code
    frame = pd.read_csv(require_artifact(path, stage), keep_default_na=False)
    return frame.to_dict("records")


def _missing(e: FileNotFoundError) -> JSONResponse:
    logger.warning("Artifact missing: %s", e)
    return JSONResponse(status_code=404, content={"detail": str(e)})


# ---------------------------------------------------------------------------
# Health
# ---------------------------------------------------------------------------
@router.get("/health", response_model=HealthResponse)
async def health_check(request: Request):
    out = _output_dir(request)
    names = [
        pipeline_service.TIMELINES,
        pipeline_service.EVENTS,
        pipeline_service.MATCHES,
        pipeline_service.SUMMARY,
    ]
    return HealthResponse(
        status="healthy",
        output_dir=str(out),
        artifacts={name: (out / name).exists() for name in names},
    )


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------
@router.get("/api/networks/{granularity}/stats", response_model=network_service.NetworkStats, responses=NOT_FOUND)
async def network_stats(request: Request, granularity: Literal["city", "country"], directed: bool = Query(False)):
    try:
        return network_service.read_stats(_output_dir(request), granularity, directed)
    except FileNotFoundError as e:
        return _missing(e)
    except Exception as e:
        logger.exception("/api/networks/%s/stats error", granularity)
        return JSONResponse(status_code=500, content={"detail": f"Network stats error: {str(e)}"})


@router.get("/api/networks/{granularity}/edges", response_model=EdgesResponse, responses=NOT_FOUND)
async def network_edges(
    request: Request,
    granularity: Literal["city", "country"],
    directed: bool = Query(False),
    limit: int = Query(100, ge=1, le=10_000),
):
    """Heaviest edges first; ties in key order."""
    try:
        network = network_service.read_network(_output_dir(request), granularity, directed)
    except FileNotFoundError as e:
        return _missing(e)
    except Exception as e:
        logger.exception("/api/networks/%s/edges error", granularity)
        return JSONResponse(status_code=500, content={"detail": f"Network edges error: {str(e)}"})

    edges = sorted(network.edges.items(), key=lambda item: -item[1])
    return EdgesResponse(
        granularity=granularity,
        directed=directed,
        total_edges=len(edges),
        edges=[EdgeOut(origin=u, destination=v, weight=w) for (u, v), w in edges[:limit]],
    )


@router.get("/api/networks/{granularity}/geojson", responses=NOT_FOUND)
async def network_geojson(
    request: Request,
    granularity: Literal["city", "country"],
    scope: Literal["all", "intra-country", "inter-country"] = Query("all"),
):
    try:
        network = network_service.read_network(_output_dir(request), granularity, directed=False)
        collection, _ = report_service.export_geojson(network, report_service.vertex_coordinates(network), scope)
    except FileNotFoundError as e:
        return _missing(e)
    except Exception as e:
        logger.exception("/api/networks/%s/geojson error", granularity)
        return JSONResponse(status_code=500, content={"detail": f"GeoJSON export error: {str(e)}"})
    return JSONResponse(content=collection, media_type="application/geo+json")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------
@router.get("/api/reports/penetration", response_model=list[PenetrationRow], responses=NOT_FOUND)
async def penetration_report(request: Request):
    try:
        rows = _read_table(_output_dir(request) / pipeline_service.PENETRATION, "report --country-info")
    except FileNotFoundError as e:
        return _missing(e)
    return [PenetrationRow(**row) for row in rows]


@router.get("/api/reports/continents", response_model=list[ContinentRow], responses=NOT_FOUND)
async def continents_report(request: Request):
    try:
        rows = _read_table(_output_dir(request) / pipeline_service.CONTINENTS, "report --country-info")
    except FileNotFoundError as e:
        return _missing(e)
    return [ContinentRow(**row) for row in rows]


@router.get("/api/reports/summary", response_model=SummaryResponse, responses=NOT_FOUND)
async def summary_report(request: Request):
    try:
        data = read_json(require_artifact(_output_dir(request) / pipeline_service.SUMMARY, "report"))
    except FileNotFoundError as e:
        return _missing(e)
    return SummaryResponse(**data)
