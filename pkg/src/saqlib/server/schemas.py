"""Request/response models for the service API."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateRequest(BaseModel):
    kind: Literal["gaussian", "skewed", "clustered"]
    n: int = Field(ge=1)
    dim: int = Field(ge=1)
    seed: int = 0
    alpha: float = 1.0
    blobs: int = 16
    n_queries: int = 0
    out: str


class GenerateResponse(BaseModel):
    data_path: str
    query_path: Optional[str] = None
    n: int
    dim: int


class GroundTruthRequest(BaseModel):
    data: str
    queries: str
    k: int = 100
    format: str = "fvecs"
    dim: int = 0
    out_prefix: str


class GroundTruthResponse(BaseModel):
    ids_path: str
    dists_path: str
    k: int
    n_queries: int


class TrainRequest(BaseModel):
    data: str
    kind: Literal["rotation", "pca", "pca_rotation"]
    seed: int = 0
    out: str
    format: str = "fvecs"
    dim: int = 0
    max_rows: int = 100_000


class TrainResponse(BaseModel):
    out: str
    kind: str
    dim: int
    leading_variances: list[float]


class QuantizeRequest(BaseModel):
    data: str
    method: Literal["caq", "saq", "lvq"]
    bits: float = 4.0
    out: str
    seed: int = 0
    rounds: int = 6
    granularity: int = 64
    format: str = "fvecs"
    dim: int = 0


class QuantizeResponse(BaseModel):
    out: str
    method: str
    count: int
    quantize_seconds: float
    code_bytes: int
    plan_segments: Optional[list[tuple[int, int]]] = None


class BuildIndexRequest(BaseModel):
    data: str
    out: str
    quantizer: Literal["caq", "saq", "lvq", "pq", "pca", "exact"] = "saq"
    bits: float = 4.0
    nlist: int = 0
    seed: int = 0
    rounds: int = 6
    m: float = 4.0
    k_codebook: int = 256
    granularity: int = 64
    format: str = "fvecs"
    dim: int = 0


class BuildIndexResponse(BaseModel):
    out: str
    quantizer: str
    nlist: int
    count: int
    dim: int
    quantize_seconds: float
    code_bytes: int
    plan_segments: Optional[list[tuple[int, int]]] = None


class SearchRequest(BaseModel):
    index: str
    query: Optional[list[float]] = None
    query_file: Optional[str] = None
    query_row: int = 0
    format: str = "fvecs"
    dim: int = 0
    k: int = 10
    nprobe: int = 16
    rerank: int = 0
    prune: bool = True
    m: Optional[float] = None


class SearchResponse(BaseModel):
    ids: list[int]
    distances: list[float]
    bits_accessed: int
    candidates_scanned: int


class EvalErrorRequest(BaseModel):
    index: str
    queries: str
    k: int = 100
    nprobe: int = 200
    rerank: int = 0
    prune: bool = True
    threads: int = 1
    format: str = "fvecs"
    dim: int = 0


class EvalErrorResponse(BaseModel):
    method: str
    b_avg: float
    avg_rel_err: float
    max_rel_err: float
    recall_at_k: float
    avg_distance_ratio: float
    mean_bits_accessed: float
    candidates_scanned: int
    code_bytes: int


class BenchQpsRequest(BaseModel):
    index: str
    queries: str
    k: int = 100
    nprobes: list[int] = Field(default_factory=lambda: [16])
    threads: int = 1
    repeats: int = 1
    rerank: int = 0
    prune: bool = True
    format: str = "fvecs"
    dim: int = 0


class QpsPoint(BaseModel):
    nprobe: int
    qps: float
    recall_at_k: float


class BenchQpsResponse(BaseModel):
    rows: list[QpsPoint]


class PipelineRequest(BaseModel):
    config_path: Optional[str] = None
    config_text: Optional[str] = None
    out: Optional[str] = None


class PipelineResponse(BaseModel):
    out: str
    csv_path: str
    manifest_path: str
    csv_text: str


class ErrorResponse(BaseModel):
    detail: str
    error_kind: str
