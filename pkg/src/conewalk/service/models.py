"""Pydantic request/response models for the analysis service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class AnalyzeRequest(BaseModel):
    config: dict = Field(description="Run configuration tree (parsed TOML)")


class AnalyzeResponse(BaseModel):
    passed: bool
    report: dict
    config_hash: str


class ValidateRequest(BaseModel):
    config: dict


class CheckResult(BaseModel):
    name: str
    passed: bool
    details: dict = Field(default_factory=dict)


class ValidateResponse(BaseModel):
    passed: bool
    checks: list[CheckResult]


class ExportRequest(BaseModel):
    config: dict
    what: str = Field(description="ball-dot | types-dot | grammar | series-csv | depgraph-dot")


class ExportResponse(BaseModel):
    files: dict[str, str]


class HealthResponse(BaseModel):
    status: str
    schema_version: int
    version: str
