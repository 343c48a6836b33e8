from pydantic import BaseModel
from typing import Any, Dict, List, Optional, Union


class ErrorResponse(BaseModel):
    detail: str


class HealthResponse(BaseModel):
    status: str
    output_dir: str
    artifacts: Dict[str, bool]


class EdgeOut(BaseModel):
    origin: Union[int, str]
    destination: Union[int, str]
    weight: int


class EdgesResponse(BaseModel):
    granularity: str
    directed: bool
    total_edges: int
    edges: List[EdgeOut]


class PenetrationRow(BaseModel):
    country_code: str
    continent: str
    users: int
    population: int
    penetration: float


class ContinentRow(BaseModel):
    continent: str
    top_edge: str = ""
    top_edge_weight: int = 0
    top_penetration_country: str = ""
    penetration: float = 0.0


class SummaryResponse(BaseModel):
    corpus: Dict[str, Any]
    networks: Dict[str, Any] = {}
    countries: Optional[Dict[str, Any]] = None
