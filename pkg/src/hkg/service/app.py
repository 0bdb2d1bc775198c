"""FastAPI application wrapping the pipeline tasks.

Domain errors map onto HTTP statuses by category: usage 400, data 422,
numeric 500. The response body always carries the category so thin clients
can reproduce the documented process exit codes.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, tasks
from ..errors import HkgError
from . import schemas

_STATUS = {"usage": 400, "data": 422, "numeric": 500}


def create_app() -> FastAPI:
    app = FastAPI(title="hkg", version=__version__)

    @app.exception_handler(HkgError)
    async def _hkg_error(request: Request, exc: HkgError) -> JSONResponse:
        return JSONResponse(
            status_code=_STATUS.get(exc.category, 422),
            content={
                "error": {
                    "category": exc.category,
                    "type": type(exc).__name__,
                    "message": str(exc),
                }
            },
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/ingest", response_model=schemas.IngestResponse)
    def ingest(req: schemas.IngestRequest) -> dict:
        return tasks.task_ingest(req.logs, req.out, req.gap_minutes)

    @app.post("/build-graph", response_model=schemas.GraphReport)
    def build_graph(req: schemas.BuildGraphRequest) -> dict:
        return tasks.task_build_graph(req.events, req.out, req.catalog)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest) -> dict:
        return tasks.task_synth(
            req.out,
            preset=req.preset,
            signal=req.signal,
            seed=req.seed,
            students=req.students,
            noise=req.noise,
            events_out=req.events_out,
        )

    @app.post("/train")
    def train(req: schemas.TrainRequest) -> dict:
        return tasks.task_train(
            req.graph,
            req.out_dir,
            config=req.config,
            seed=req.seed,
            epochs=req.epochs,
            runs=req.runs,
            learning_rate=req.learning_rate,
            batch_size=req.batch_size,
            hidden_dim=req.hidden_dim,
            out_dim=req.out_dim,
            embed_dim=req.embed_dim,
        )

    @app.post("/eval", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest) -> dict:
        return tasks.task_eval(
            req.graph,
            req.checkpoint,
            partition=req.partition,
            split_seed=req.split_seed,
            ratios=req.ratios,
        )

    @app.post("/report")
    def report(req: schemas.ReportRequest) -> dict:
        return tasks.task_report(req.run_dirs, req.out_dir)

    @app.post("/compare")
    def compare(req: schemas.CompareRequest) -> dict:
        return tasks.task_compare([(s.label, s.run_dir) for s in req.run_sets], req.out_dir)

    @app.post("/export-graph")
    def export_graph(req: schemas.ExportGraphRequest) -> dict:
        return tasks.task_export_graph(req.graph, req.out)

    return app
