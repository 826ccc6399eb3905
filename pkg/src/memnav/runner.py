"""Episode orchestration: observation -> mapping -> memory -> proposal ->
safety -> decision -> step, with line-delimited logging and batch aggregation."""

from __future__ import annotations

import json
import math
import random
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import httpx

from .config import RunConfig
from .core import PolarAction, TaskSpec, embed_text
from .hierarchy import MemoryHierarchy, build_hierarchy
from .metrics import (
    AoriAccumulator,
    EpisodeOutcome,
    MetricsReport,
    episode_step_budget,
)
from .policy import (
    DeciderUnavailableError,
    ExternalEndpoint,
    assemble_prompt,
    build_attribute_database,
    external_decide,
    random_decide,
    scripted_decide,
)
from .proposer import (
    AnnotatedCandidates,
    ExplorationState,
    apply_safety_recovery,
    filter_candidates,
    generate_initial,
)
from .recovery import StuckMonitor, build_escape_context, escape_actions
from .retrieval import RetrievalResult, retrieve
from .sim import (
    Environment,
    Observation,
    _point_segment_distance,
    load_scene,
    point_in_polygon,
    scene_segments,
)
from .topo import TopoMap, TopoNode

LOG_VERSION = 1


def _json_line(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass
class EpisodeResult:
    outcome: EpisodeOutcome
    log_lines: list[str] = field(default_factory=list)
    log_path: str = ""


def _observation_likelihood(observation: Observation, task: TaskSpec) -> float:
    return 0.5 * (1.0 + task.embedding.cosine(embed_text(observation.desc)))


def _precision_active(observation: Observation, task: TaskSpec, cfg: RunConfig) -> bool:
    for obj in observation.objects:
        if obj.label in task.keywords and obj.surface_range <= cfg.precision_range:
            return True
    return False


class _EpisodeState:
    """Mutable per-episode machinery shared across steps."""

    def __init__(self, cfg: RunConfig, scene_path: str):
        self.cfg = cfg
        self.scene = load_scene(scene_path)
        self.env = Environment(
            self.scene, cfg.sim, cfg.aori.grid(), vision_radius=cfg.vision_radius
        )
        self.task = TaskSpec.from_text(self.scene.target_label)
        self.attribute_db = build_attribute_database(self.task)
        self.topo_map = TopoMap()
        self.hierarchy: MemoryHierarchy | None = None
        self.accumulator = AoriAccumulator(cfg.aori)
        self.monitor = StuckMonitor(cfg.stuck, cfg.aori.grid().cell_area)
        self.history_cells: deque = deque(maxlen=cfg.proposer.history_window)
        self.seen_counts: dict = {}
        self._mark_unexplorable()
        self.insertions = 0
        self.last_rotation_step = -(10**9)
        self.escape_queue: list[PolarAction] = []
        self.last_evaluation = None
        self.last_likelihood = 0.5
        self.rng = random.Random(cfg.seed)
        self.http = httpx.Client() if cfg.decider == "external" else None

    def _mark_unexplorable(self) -> None:
        # Wall interiors and thin surface-adjacent slivers can never be seen
        # reliably (ray shadows); pre-marking them keeps exploration heuristics
        # from chasing unreachable cells forever.
        grid = self.cfg.aori.grid()
        if self.scene.obstacles:
            xmin, ymin, xmax, ymax = self.scene.bounds
            lo = grid.world_to_cell(xmin, ymin)
            hi = grid.world_to_cell(xmax, ymax)
            for ix in range(lo[0], hi[0] + 1):
                for iy in range(lo[1], hi[1] + 1):
                    center = grid.cell_center((ix, iy))
                    if any(point_in_polygon(center, poly) for poly in self.scene.obstacles):
                        self.seen_counts[(ix, iy)] = 1
        band = grid.resolution * 1.5
        for seg in scene_segments(self.scene):
            (ax, ay), (bx, by) = seg
            lo = grid.world_to_cell(min(ax, bx) - band, min(ay, by) - band)
            hi = grid.world_to_cell(max(ax, bx) + band, max(ay, by) + band)
            for ix in range(lo[0], hi[0] + 1):
                for iy in range(lo[1], hi[1] + 1):
                    if _point_segment_distance(grid.cell_center((ix, iy)), seg) <= band:
                        self.seen_counts[(ix, iy)] = 1

    def close(self) -> None:
        if self.http is not None:
            self.http.close()


def run_episode(cfg: RunConfig, scene_path: str, episode_seed: int | None = None) -> EpisodeResult:
    """Execute one full episode and return its outcome plus the log lines."""
    state = _EpisodeState(cfg, scene_path)
    if episode_seed is not None:
        state.rng = random.Random(episode_seed)
    log: list[str] = [
        _json_line({
            "record": "header",
            "version": LOG_VERSION,
            "scene": Path(scene_path).name,
            "target": state.scene.target_label,
            "seed": cfg.seed if episode_seed is None else episode_seed,
            "decider": cfg.decider,
        })
    ]
    env = state.env
    try:
        observation = env.reset()
        _ingest_observation(state, observation)
        for _ in range(cfg.max_actions):
            action, step_record = _decide_step(state, observation)
            log.append(_json_line(step_record))
            observation = env.step(action)
            if env.terminated:
                break
            _ingest_observation(state, observation)
        aori = state.accumulator.aori()
        discrete, _ = episode_step_budget(env.executed_actions)
        outcome = EpisodeOutcome(
            success=env.success,
            shortest_path=state.scene.shortest_path_length,
            agent_path=env.path_length,
            step_count=len(env.executed_actions),
            aori=aori,
            discrete_steps=discrete,
            scene=Path(scene_path).name,
        )
    except Exception as exc:  # pragma: no cover - defensive; tests drive clean paths
        outcome = EpisodeOutcome(
            success=False,
            shortest_path=max(state.scene.shortest_path_length, 1e-6),
            agent_path=env.path_length,
            step_count=len(env.executed_actions),
            aori=1.0,
            discrete_steps=0,
            scene=Path(scene_path).name,
            error=f"{type(exc).__name__}: {exc}",
        )
    finally:
        state.close()
    log.append(_json_line({
        "record": "outcome",
        "success": outcome.success,
        "shortest_m": outcome.shortest_path,
        "traveled_m": outcome.agent_path,
        "actions": outcome.step_count,
        "discrete_steps": outcome.discrete_steps,
        "aori": outcome.aori,
        "error": outcome.error,
    }))
    return EpisodeResult(outcome=outcome, log_lines=log)


def _ingest_observation(state: _EpisodeState, observation: Observation) -> None:
    """Feed one observation into coverage, mapping, memory, and stuck state."""
    newly = state.accumulator.observe_step(set(observation.visible_cells))
    state.last_evaluation = state.monitor.update(observation.pose, newly)
    for cell in observation.seen_cells:
        state.seen_counts[cell] = state.seen_counts.get(cell, 0) + 1
    grid = state.accumulator.grid
    state.history_cells.append(
        grid.world_to_cell(float(observation.pose.position[0]), float(observation.pose.position[1]))
    )

    likelihood = _observation_likelihood(observation, state.task)
    state.last_likelihood = likelihood
    candidate = TopoNode(
        node_id=len(state.topo_map),
        pose=observation.pose,
        observation_desc=observation.desc,
        target_likelihood=likelihood,
        embedding=embed_text(observation.desc),
        step_index=observation.step_index,
    )
    if state.topo_map.maybe_add_node(candidate, state.cfg.topo):
        state.insertions += 1
        if state.insertions == 1 or state.insertions % state.cfg.hierarchy.rebuild_every == 0:
            state.hierarchy = build_hierarchy(state.topo_map, state.cfg.hierarchy)


def _decide_step(state: _EpisodeState, observation: Observation) -> tuple[PolarAction, dict]:
    cfg = state.cfg
    env = state.env
    step_index = observation.step_index
    record: dict = {"record": "step", "t": step_index}
    pose = observation.pose
    record["pose"] = [round(float(pose.position[0]), 6), round(float(pose.position[1]), 6),
                      round(pose.yaw, 6)]
    record["likelihood"] = round(state.last_likelihood, 6)
    visible_targets = [o for o in observation.objects if o.label in state.task.keywords]
    if visible_targets:
        record["target_range"] = round(min(o.surface_range for o in visible_targets), 4)
    record["trigger"] = observation.trigger

    retrieval: RetrievalResult | None = None
    if state.hierarchy is not None:
        retrieval = retrieve(
            state.hierarchy, state.task, pose.position, step_index, cfg.retrieval
        )
        record["retrieval"] = [[e.node_id, round(e.score, 6)] for e in retrieval.entries]

    # action proposal (body-aware navigability keeps candidates executable);
    # direction pruning keys on trodden ground, not on what has merely been seen
    exploration = ExplorationState(
        state.accumulator.grid, state.accumulator.counts, pose, region=state.scene.bounds
    )
    initial = generate_initial(env.navigable_range, cfg.proposer)
    filtered = filter_candidates(initial, exploration, list(state.history_cells), cfg.proposer)
    steps_since_rotation = step_index - state.last_rotation_step
    turn_active = steps_since_rotation > cfg.proposer.rotation_cooldown
    candidates = apply_safety_recovery(
        filtered, initial, steps_since_rotation, cfg.proposer, turn_active=turn_active
    )
    record["candidates"] = [
        [code, round(a.r, 4), round(a.theta, 6)] for code, a in candidates.entries
    ]

    precision = _precision_active(observation, state.task, cfg)

    # safety overrides: queued escape continues, confirmed stuck starts one
    evaluation = state.last_evaluation
    if state.escape_queue:
        action = state.escape_queue.pop(0)
        record["event"] = "escape_continue"
        _note_rotation(state, action, step_index)
        return action, record
    # escapes are for exploration traps; never abandon a target in sight
    if (
        evaluation is not None
        and evaluation.confirmed
        and not precision
        and not visible_targets
    ):
        context = build_escape_context(
            list(observation.circle_samples), pose.yaw, state.monitor, cfg.stuck
        )
        plan = escape_actions(context, rng_seed=state.rng.randrange(2**32),
                              r_min=cfg.proposer.r_min)
        state.monitor.reset()
        action = plan[0]
        state.escape_queue = plan[1:]
        record["event"] = f"escape_{context.kind.value}"
        record["stuck"] = {
            "eta": _round_metric(evaluation.eta),
            "rho": _round_metric(evaluation.rho),
            "score": evaluation.score,
            "area_gain": round(evaluation.area_gain, 6),
        }
        _note_rotation(state, action, step_index)
        return action, record

    # stop once the success trigger has held for two consecutive observations
    if observation.trigger:
        if env.state.stop_trigger_streak >= 2:
            record["event"] = "stop"
            return PolarAction.stop(), record
        # hold position and center the target so the trigger survives the wait
        visible = [o for o in observation.objects if o.label in state.task.keywords]
        bearing = min(visible, key=lambda o: o.surface_range).bearing if visible else 0.0
        record["event"] = "hold_for_confirmation"
        return PolarAction.move(0.0, bearing), record

    if precision:
        # regenerate the action space at fine scale; scaling only the measured
        # free range would strand the agent outside the success band
        fine = replace(
            cfg.proposer,
            r_min=cfg.proposer.r_min * cfg.precision_gamma,
            r_max=cfg.proposer.r_max * cfg.precision_gamma,
        )
        fine_initial = generate_initial(env.navigable_range, fine)
        fine_filtered = filter_candidates(
            fine_initial, exploration, list(state.history_cells), fine
        )
        candidates = apply_safety_recovery(
            fine_filtered, fine_initial, steps_since_rotation, fine, turn_active=False
        )
        record["precision"] = True
        record["candidates"] = [
            [code, round(a.r, 4), round(a.theta, 6)] for code, a in candidates.entries
        ]

    code = _choose_code(state, candidates, retrieval, observation, record)
    record["chosen_code"] = code
    action = candidates.action_for(code)
    _note_rotation(state, action, step_index)
    return action, record


def _round_metric(value: float) -> float | str:
    return "inf" if math.isinf(value) else round(value, 6)


def _note_rotation(state: _EpisodeState, action: PolarAction, step_index: int) -> None:
    if not action.is_stop and action.r == 0.0 and abs(action.theta) >= math.pi / 2.0:
        state.last_rotation_step = step_index


def _choose_code(
    state: _EpisodeState,
    candidates: AnnotatedCandidates,
    retrieval: RetrievalResult | None,
    observation: Observation,
    record: dict,
) -> int:
    cfg = state.cfg
    # the exploration rule scouts by sightlines: prefer looking where the
    # FOV has not reached yet
    exploration = ExplorationState(
        state.accumulator.grid, state.seen_counts, observation.pose,
        region=state.scene.bounds,
    )
    if cfg.decider == "random":
        return random_decide(candidates, state.rng)
    if cfg.decider == "external":
        bundle = assemble_prompt(
            state.task, state.attribute_db, candidates, retrieval,
            turn_active=0 in candidates.codes(),
        )
        endpoint = ExternalEndpoint(
            cfg.external_url, timeout=cfg.external_timeout, retries=cfg.external_retries
        )
        try:
            return external_decide(
                bundle, candidates, retrieval, endpoint, client=state.http
            ).chosen_code
        except DeciderUnavailableError as exc:
            record["event"] = "external_fallback"
            record["fallback_reason"] = str(exc)[:200]
    return scripted_decide(
        candidates, retrieval, observation, state.task, exploration,
        neighborhood_radius=cfg.proposer.neighborhood_radius,
    )


def run_batch(cfg: RunConfig, out_dir: str | None = None) -> tuple[MetricsReport, list[str]]:
    """Run every configured scene; writes one log per episode plus the metrics
    report. Episodes are independent, so worker processes just partition them."""
    if not cfg.scenes:
        raise ValueError("batch needs at least one scene")
    cfg.require_paths()
    output = Path(out_dir or cfg.output_dir)
    output.mkdir(parents=True, exist_ok=True)

    jobs = [(cfg, scene, cfg.seed + i) for i, scene in enumerate(cfg.scenes)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_episode_job, jobs))
    else:
        results = [_run_episode_job(job) for job in jobs]

    log_paths = []
    for i, result in enumerate(results):
        log_path = output / f"episode_{i:03d}.jsonl"
        log_path.write_text("\n".join(result.log_lines) + "\n", "utf-8")
        result.log_path = str(log_path)
        log_paths.append(str(log_path))
    report = MetricsReport([r.outcome for r in results])
    (output / "report.txt").write_text(report.render(), "utf-8")
    return report, log_paths


def _run_episode_job(job) -> EpisodeResult:
    cfg, scene, seed = job
    return run_episode(cfg, scene, episode_seed=seed)


def inspect_memory(cfg: RunConfig, scene_path: str, steps: int) -> tuple[str, str]:
    """Run a truncated scripted episode and dump the resulting topological map
    and memory hierarchy."""
    probe = RunConfig.from_dict({**cfg.to_dict(), "decider": "scripted",
                                 "max_actions": max(1, steps)})
    state = _EpisodeState(probe, scene_path)
    try:
        observation = state.env.reset()
        _ingest_observation(state, observation)
        for _ in range(probe.max_actions):
            action, _record = _decide_step(state, observation)
            observation = state.env.step(action)
            if state.env.terminated:
                break
            _ingest_observation(state, observation)
        if state.hierarchy is None or state.insertions > 0:
            state.hierarchy = build_hierarchy(state.topo_map, probe.hierarchy)
        return state.topo_map.snapshot(), state.hierarchy.dump_tree()
    finally:
        state.close()


def outcome_from_log(path: str) -> EpisodeOutcome:
    """Rebuild an outcome record from an episode log file."""
    header: dict = {}
    outcome: dict | None = None
    for line in Path(path).read_text("utf-8").splitlines():
        payload = json.loads(line)
        if payload.get("record") == "header":
            header = payload
        elif payload.get("record") == "outcome":
            outcome = payload
    if outcome is None:
        raise ValueError(f"{path}: no outcome record")
    return EpisodeOutcome(
        success=bool(outcome["success"]),
        shortest_path=float(outcome["shortest_m"]),
        agent_path=float(outcome["traveled_m"]),
        step_count=int(outcome["actions"]),
        aori=float(outcome["aori"]),
        discrete_steps=int(outcome["discrete_steps"]),
        scene=header.get("scene", ""),
        error=outcome.get("error", ""),
    )
