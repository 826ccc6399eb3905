"""FastAPI service wrapping the navigation core: episode execution, scene
generation, memory inspection, and metric reports."""

from __future__ import annotations

from importlib import metadata
from pathlib import Path

from fastapi import FastAPI, HTTPException

from ..config import ConfigError, RunConfig
from ..metrics import MetricsReport
from ..runner import inspect_memory, outcome_from_log, run_batch, run_episode
from ..scenegen import gen_scenes
from ..sim import SceneError
from .schemas import (
    GenScenesRequest,
    GenScenesResponse,
    HealthResponse,
    InspectMemoryRequest,
    InspectMemoryResponse,
    OutcomeModel,
    ReportRequest,
    ReportResponse,
    RunBatchRequest,
    RunBatchResponse,
    RunEpisodeRequest,
    RunEpisodeResponse,
)


def _version() -> str:
    try:
        return metadata.version("memnav")
    except metadata.PackageNotFoundError:  # running from a source tree
        return "0.0.0"


def _outcome_model(outcome) -> OutcomeModel:
    return OutcomeModel(
        success=outcome.success,
        shortest_path=outcome.shortest_path,
        agent_path=outcome.agent_path,
        step_count=outcome.step_count,
        aori=outcome.aori,
        discrete_steps=outcome.discrete_steps,
        scene=outcome.scene,
        error=outcome.error,
    )


def _config_for(scenes: list[str], seed: int, decider: str, external_url: str,
                output_dir: str, workers: int, overrides: dict) -> RunConfig:
    base = RunConfig(
        scenes=scenes,
        seed=seed,
        decider=decider,
        external_url=external_url,
        output_dir=output_dir or "runs",
        workers=workers,
    )
    if overrides:
        merged = base.merged(overrides)
        merged.require_paths()
        return merged
    base.require_paths()
    return base


def create_app() -> FastAPI:
    app = FastAPI(title="memnav service", version=_version())

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=_version())

    @app.post("/scenes/generate", response_model=GenScenesResponse)
    def scenes_generate(request: GenScenesRequest) -> GenScenesResponse:
        try:
            paths = gen_scenes(request.kind, request.count, request.seed, request.out_dir)
        except (ValueError, SceneError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return GenScenesResponse(paths=[str(p) for p in paths])

    @app.post("/episodes/run", response_model=RunEpisodeResponse)
    def episodes_run(request: RunEpisodeRequest) -> RunEpisodeResponse:
        try:
            cfg = _config_for(
                [request.scene_path], request.seed, request.decider,
                request.external_url, request.output_dir, 1, request.config,
            )
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        result = run_episode(cfg, request.scene_path, episode_seed=request.seed)
        log_path = ""
        if request.output_dir:
            out = Path(request.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            log_path = str(out / "episode_000.jsonl")
            Path(log_path).write_text("\n".join(result.log_lines) + "\n", "utf-8")
        return RunEpisodeResponse(
            outcome=_outcome_model(result.outcome),
            log_path=log_path,
            executed=not result.outcome.error,
        )

    @app.post("/batches/run", response_model=RunBatchResponse)
    def batches_run(request: RunBatchRequest) -> RunBatchResponse:
        try:
            cfg = _config_for(
                request.scene_paths, request.seed, request.decider,
                request.external_url, request.output_dir, request.workers, request.config,
            )
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        report, log_paths = run_batch(cfg, out_dir=request.output_dir)
        return RunBatchResponse(
            sr=report.sr,
            spl=report.spl,
            mean_aori=report.mean_aori,
            outcomes=[_outcome_model(o) for o in report.outcomes],
            log_paths=log_paths,
            report_text=report.render(),
            report_path=str(Path(request.output_dir) / "report.txt"),
            all_executed=all(not o.error for o in report.outcomes),
        )

    @app.post("/memory/inspect", response_model=InspectMemoryResponse)
    def memory_inspect(request: InspectMemoryRequest) -> InspectMemoryResponse:
        try:
            cfg = _config_for(
                [request.scene_path], request.seed, "scripted", "", "", 1, request.config,
            )
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        map_dump, hierarchy_dump = inspect_memory(cfg, request.scene_path, request.steps)
        return InspectMemoryResponse(map_dump=map_dump, hierarchy_dump=hierarchy_dump)

    @app.post("/reports/compute", response_model=ReportResponse)
    def reports_compute(request: ReportRequest) -> ReportResponse:
        if not request.log_paths:
            raise HTTPException(status_code=422, detail="log_paths must be nonempty")
        try:
            outcomes = [outcome_from_log(p) for p in request.log_paths]
        except (OSError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        report = MetricsReport(outcomes)
        return ReportResponse(
            sr=report.sr,
            spl=report.spl,
            mean_aori=report.mean_aori,
            report_text=report.render(),
        )

    return app


app = create_app()
