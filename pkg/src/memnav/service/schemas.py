"""Pydantic request/response models for the navigation service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class GenScenesRequest(BaseModel):
    kind: str = Field(description="corridor | rooms | blobs")
    count: int = Field(ge=1, default=1)
    seed: int = 0
    out_dir: str


class GenScenesResponse(BaseModel):
    paths: list[str]


class RunEpisodeRequest(BaseModel):
    scene_path: str
    seed: int = 0
    decider: str = "scripted"
    external_url: str = ""
    output_dir: str = ""
    config: dict = Field(default_factory=dict, description="partial RunConfig overrides")


class OutcomeModel(BaseModel):
    success: bool
    shortest_path: float
    agent_path: float
    step_count: int
    aori: float
    discrete_steps: int
    scene: str
    error: str = ""


class RunEpisodeResponse(BaseModel):
    outcome: OutcomeModel
    log_path: str = ""
    executed: bool


class RunBatchRequest(BaseModel):
    scene_paths: list[str]
    seed: int = 0
    decider: str = "scripted"
    external_url: str = ""
    output_dir: str
    workers: int = 1
    config: dict = Field(default_factory=dict)


class RunBatchResponse(BaseModel):
    sr: float
    spl: float
    mean_aori: float
    outcomes: list[OutcomeModel]
    log_paths: list[str]
    report_text: str
    report_path: str
    all_executed: bool


class InspectMemoryRequest(BaseModel):
    scene_path: str
    seed: int = 0
    steps: int = Field(ge=1, default=12)
    config: dict = Field(default_factory=dict)


class InspectMemoryResponse(BaseModel):
    map_dump: str
    hierarchy_dump: str


class ReportRequest(BaseModel):
    log_paths: list[str]


class ReportResponse(BaseModel):
    sr: float
    spl: float
    mean_aori: float
    report_text: str
