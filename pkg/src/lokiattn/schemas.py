"""Pydantic request/response models for the HTTP service.

Paths in requests refer to the service host's filesystem; the default
deployment runs the app in-process next to the caller, so they are local
paths in practice.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field

Method = Literal["vanilla", "loki", "exact-topk", "pca-attn", "h2o"]


class ErrorBody(BaseModel):
    kind: Literal["usage", "data", "internal"]
    message: str


class GenRequest(BaseModel):
    out: str
    seq: int = Field(ge=1)
    dim: int = Field(ge=1)
    rank: int = Field(ge=1)
    noise: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0)
    layer: int = Field(default=0, ge=0)
    head: int = Field(default=0, ge=0)
    stage: Literal["pre", "post"] = "post"


class GenResponse(BaseModel):
    path: str
    seq: int
    dim: int
    manifest: dict


class ProjectionSummary(BaseModel):
    layer: int
    head: int
    stage: str
    head_dim: int
    path: str
    leading_eigenvalues: List[float]
    rank90: int


class CalibrateRequest(BaseModel):
    keys: List[str] = Field(min_length=1)
    out: str


class CalibrateResponse(BaseModel):
    projections: List[ProjectionSummary]
    manifest: dict


class RankRequest(BaseModel):
    keys: List[str] = Field(min_length=1)
    v: List[float] = Field(min_length=1)
    out: str


class RankResponse(BaseModel):
    report_path: str
    model_averages: dict
    manifest: dict


class RunRequest(BaseModel):
    keys: str
    values: str
    queries: str
    method: Method
    out: str
    proj: Optional[str] = None
    kf: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    df: Optional[float] = Field(default=None, gt=0.0, le=1.0)


class RunResponse(BaseModel):
    out_path: str
    indices_path: Optional[str]
    n_queries: int
    resolved_k: Optional[int]
    resolved_d: Optional[int]
    manifest: dict


class AgreeRequest(BaseModel):
    keys: str
    queries: str
    proj: str
    kf_grid: List[float] = Field(min_length=1)
    df_grid: List[float] = Field(min_length=1)
    out: str


class AgreementCellModel(BaseModel):
    k_f: float
    d_f: float
    mean_jaccard: float
    min_jaccard: float


class AgreeResponse(BaseModel):
    out_path: str
    cells: List[AgreementCellModel]
    manifest: dict


class BenchRequest(BaseModel):
    method: Literal["vanilla", "loki", "both"] = "both"
    seq_list: List[int] = Field(min_length=1)
    dim: int = Field(ge=1)
    kf: float = Field(default=0.25, gt=0.0, le=1.0)
    df: float = Field(default=0.25, gt=0.0, le=1.0)
    trials: int = Field(default=10, ge=3)
    warmup: int = Field(default=2, ge=1)
    out: str


class BenchTotal(BaseModel):
    method: str
    S: int
    total_mean_ns: float


class BenchResponse(BaseModel):
    bench_path: str
    plot_path: str
    totals: List[BenchTotal]
    manifest: dict


class HealthResponse(BaseModel):
    status: str
    version: str
    threads: int
