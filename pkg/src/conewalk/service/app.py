"""FastAPI service wrapping the analysis pipeline.

Run with ``uvicorn conewalk.service.app:app``. The CLI uses the same handler
functions in-process by default, so service and command line stay in lockstep.
"""

from __future__ import annotations

import json

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..cones import CertificationError, ConeError
from ..pipeline import (SCHEMA_VERSION, ConfigError, RunConfig, run_analyze,
                        run_export, run_validate)
from .models import (AnalyzeRequest, AnalyzeResponse, CheckResult,
                     ExportRequest, ExportResponse, HealthResponse,
                     ValidateRequest, ValidateResponse)


def handle_analyze(config: dict) -> AnalyzeResponse:
    cfg = RunConfig.from_dict(config)
    result = run_analyze(cfg)
    report = json.loads(result.to_json(include_timestamp=True))
    return AnalyzeResponse(passed=result.passed, report=report,
                           config_hash=result.config_hash)


def handle_validate(config: dict) -> ValidateResponse:
    cfg = RunConfig.from_dict(config)
    checks = run_validate(cfg)
    return ValidateResponse(passed=all(c["passed"] for c in checks),
                            checks=[CheckResult(**c) for c in checks])


def handle_export(config: dict, what: str) -> ExportResponse:
    cfg = RunConfig.from_dict(config)
    return ExportResponse(files=run_export(cfg, what))


app = FastAPI(title="conewalk", version=__version__,
              description="Cone-type grammars and local limit analysis of "
                          "random walks on finitely described infinite graphs")


@app.exception_handler(ConfigError)
async def _config_error(_request, exc: ConfigError):
    return JSONResponse(status_code=400,
                        content={"error": str(exc), "kind": "config"})


@app.exception_handler(CertificationError)
async def _certification_error(_request, exc: CertificationError):
    return JSONResponse(status_code=422,
                        content={"error": str(exc), "kind": "certification",
                                 "growth_trace": exc.growth_trace})


@app.exception_handler(ConeError)
async def _cone_error(_request, exc: ConeError):
    return JSONResponse(status_code=422,
                        content={"error": str(exc), "kind": "cones"})


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", schema_version=SCHEMA_VERSION,
                          version=__version__)


@app.post("/analyze", response_model=AnalyzeResponse)
def analyze(req: AnalyzeRequest) -> AnalyzeResponse:
    return handle_analyze(req.config)


@app.post("/validate", response_model=ValidateResponse)
def validate(req: ValidateRequest) -> ValidateResponse:
    return handle_validate(req.config)


@app.post("/export", response_model=ExportResponse)
def export(req: ExportRequest) -> ExportResponse:
    return handle_export(req.config, req.what)
