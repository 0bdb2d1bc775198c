"""Pydantic request/response models for the HTTP service.

Path fields refer to the filesystem of the machine running the service;
the CLI runs the service in-process by default, so they are ordinary local
paths there.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class IngestRequest(BaseModel):
    logs: str = Field(description="log file or directory of log files")
    out: str = Field(description="destination events file")
    gap_minutes: float = 30.0


class IngestResponse(BaseModel):
    parsed: int
    skipped: int
    kept_after_filter: int
    users: int
    sessions: int
    events_file: str
    report_file: str


class BuildGraphRequest(BaseModel):
    events: str
    out: str
    catalog: str | None = None


class GraphReport(BaseModel):
    nodes: dict[str, int]
    edges: dict[str, int]
    coverage: float
    labels: int
    positive_rate: float
    no_duration_pairs: int
    graph_file: str


class SynthRequest(BaseModel):
    out: str
    preset: str = "campus"
    signal: str = "planted"
    seed: int = 0
    students: int | None = None
    noise: float | None = None
    events_out: str | None = None


class SynthResponse(GraphReport):
    seed: int
    signal: str
    events_file: str | None = None


class TrainRequest(BaseModel):
    graph: str
    out_dir: str
    config: str | None = None
    seed: int | None = None
    epochs: int | None = None
    runs: int | None = None
    learning_rate: float | None = None
    batch_size: int | None = None
    hidden_dim: int | None = None
    out_dim: int | None = None
    embed_dim: int | None = None


class EvalRequest(BaseModel):
    graph: str
    checkpoint: str
    partition: str = "all"
    split_seed: int | None = None
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)


class EvalResponse(BaseModel):
    partition: str
    n_edges: int
    auc: float
    accuracy: float
    positive_rate: float


class ReportRequest(BaseModel):
    run_dirs: list[str]
    out_dir: str


class RunSet(BaseModel):
    label: str
    run_dir: str


class CompareRequest(BaseModel):
    run_sets: list[RunSet]
    out_dir: str


class ExportGraphRequest(BaseModel):
    graph: str
    out: str


class HealthResponse(BaseModel):
    status: str
    version: str
