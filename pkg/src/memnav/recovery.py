"""Stuck detection over a sliding pose window, context-aware escape actions,
and precision-mode action scaling."""

from __future__ import annotations

import enum
import math
import random
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import MemnavError, PolarAction, Pose, wrap_angle
from .proposer import AnnotatedCandidates

RHO_SENTINEL = math.inf
_MIN_PATH = 1e-6


class InvalidWindowError(MemnavError):
    pass


@dataclass
class StuckConfig:
    window: int = 8              # poses per sliding window
    tau_eta: float = 0.25        # path inefficiency threshold (stuck when below)
    tau_rho: float = 2.0         # rad/m rotation/translation threshold
    short_path_len: float = 0.5  # meters; rho indicator only applies below this
    area_gain_floor: float = 0.35  # m^2 of new coverage per window
    w_eta: float = 0.5
    w_rho: float = 0.5
    s_threshold: float = 0.5
    k_consecutive: int = 2
    free_range_min: float = 0.5  # meters; a heading counts as open above this
    success_displacement: float = 0.25  # meters; qualifies as recent progress

    def __post_init__(self):
        if abs(self.w_eta + self.w_rho - 1.0) > 1e-12:
            raise ValueError("w_eta + w_rho must equal 1.0")
        if min(self.tau_eta, self.tau_rho, self.short_path_len, self.area_gain_floor) <= 0:
            raise ValueError("thresholds must be positive")
        if self.window < 2 or self.k_consecutive < 1:
            raise ValueError("window >= 2 and k_consecutive >= 1 required")


class ContextKind(enum.Enum):
    CORNER_TRAP = "corner_trap"
    NARROW_PASSAGE = "narrow_passage"
    AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class EscapeContext:
    kind: ContextKind
    current_yaw: float
    # (world heading, free range) samples covering the full circle
    samples: tuple[tuple[float, float], ...]
    recent_success_heading: float | None = None


def stuck_metrics(poses: list[Pose]) -> tuple[float, float]:
    """Path inefficiency eta (net / total displacement) and rotation density
    rho (total |yaw change| / total displacement) over a pose window.

    A window with essentially no translation is the canonical stuck case:
    eta = 0 and rho = +inf so downstream indicators fire instead of faulting.
    """
    if len(poses) < 2:
        raise InvalidWindowError("stuck metrics need at least 2 poses")
    total = 0.0
    turned = 0.0
    for prev, cur in zip(poses, poses[1:]):
        total += float(np.linalg.norm(cur.position - prev.position))
        turned += abs(wrap_angle(cur.yaw - prev.yaw))
    if total < _MIN_PATH:
        return 0.0, RHO_SENTINEL
    net = float(np.linalg.norm(poses[-1].position - poses[0].position))
    return net / total, turned / total


def stuck_score(
    eta: float, rho: float, path_len: float, area_gain: float, cfg: StuckConfig
) -> tuple[float, bool]:
    """Weighted indicator score plus the stuck-now verdict.

    The rotation indicator only applies on short paths; low coverage gain over
    the window flags stuck regardless of the score.
    """
    score = 0.0
    if eta < cfg.tau_eta:
        score += cfg.w_eta
    if rho > cfg.tau_rho and path_len < cfg.short_path_len:
        score += cfg.w_rho
    stuck_now = score >= cfg.s_threshold or area_gain < cfg.area_gain_floor
    return score, stuck_now


def confirm_stuck(flags: list[bool], cfg: StuckConfig) -> bool:
    """True when the latest k window evaluations all flagged stuck."""
    k = cfg.k_consecutive
    return len(flags) >= k and all(flags[-k:])


def classify_context(
    samples: list[tuple[float, float]], cfg: StuckConfig
) -> ContextKind:
    """Classify the local geometry from >= 8 evenly spaced free-range samples.

    Corner trap: at most a quarter of the headings are open. Narrow passage:
    the open headings form exactly two antipodal arcs, each at most 60 degrees
    wide. Anything else is ambiguous.
    """
    if len(samples) < 8:
        raise ValueError("need at least 8 heading samples")
    n = len(samples)
    open_flags = [free >= cfg.free_range_min for _, free in samples]
    open_count = sum(open_flags)
    if open_count <= 0.25 * n:
        return ContextKind.CORNER_TRAP

    # circular runs of consecutive open headings
    if open_count == n:
        return ContextKind.AMBIGUOUS
    spacing = 2.0 * math.pi / n
    runs: list[list[int]] = []
    start = next(i for i in range(n) if not open_flags[i])
    current: list[int] = []
    for offset in range(1, n + 1):
        idx = (start + offset) % n
        if open_flags[idx]:
            current.append(idx)
        elif current:
            runs.append(current)
            current = []
    if current:
        runs.append(current)

    if len(runs) == 2:
        # span of the sampled open directions, not the bin count
        widths = [(len(run) - 1) * spacing for run in runs]
        centers = []
        for run in runs:
            # circular mean of the run's sample headings
            angles = [samples[i][0] for i in run]
            centers.append(math.atan2(
                sum(math.sin(a) for a in angles), sum(math.cos(a) for a in angles)
            ))
        separation = abs(wrap_angle(centers[0] - centers[1]))
        antipodal = abs(separation - math.pi) <= spacing
        if antipodal and all(w <= math.radians(60.0) + 1e-9 for w in widths):
            return ContextKind.NARROW_PASSAGE
    return ContextKind.AMBIGUOUS


def _free_range_at(samples: tuple[tuple[float, float], ...], heading: float) -> float:
    best = min(samples, key=lambda hv: abs(wrap_angle(hv[0] - heading)))
    return best[1]


def escape_actions(ctx: EscapeContext, rng_seed: int, r_min: float = 0.5) -> list[PolarAction]:
    """Escape plan for a confirmed stuck state; the first action executes now
    and any remainder is queued for the following steps.

    Corner trap: turn around in place. Narrow passage: back out a quarter
    meter, then take a seeded-random 60-120 degree turn. Ambiguous: move
    perpendicular to the most recent successful heading, toward the freer
    side.
    """
    if ctx.kind == ContextKind.CORNER_TRAP:
        return [PolarAction.move(0.0, math.pi)]

    if ctx.kind == ContextKind.NARROW_PASSAGE:
        rng = random.Random(rng_seed)
        magnitude = rng.uniform(math.radians(60.0), math.radians(120.0))
        sign = rng.choice((-1.0, 1.0))
        return [
            PolarAction.move(0.25, math.pi),           # back out (turn then step)
            PolarAction.move(0.0, wrap_angle(sign * magnitude)),
        ]

    base = ctx.recent_success_heading if ctx.recent_success_heading is not None else ctx.current_yaw
    left = wrap_angle(base + math.pi / 2.0)
    right = wrap_angle(base - math.pi / 2.0)
    heading = left if _free_range_at(ctx.samples, left) >= _free_range_at(ctx.samples, right) else right
    return [PolarAction.move(r_min, wrap_angle(heading - ctx.current_yaw))]


def precision_scale(candidates: AnnotatedCandidates, gamma_step: float = 0.1) -> AnnotatedCandidates:
    """Scale every move candidate's range by gamma_step for fine positioning;
    headings and codes are untouched."""
    entries = []
    for code, action in candidates.entries:
        if action.r > 0.0:
            entries.append((code, PolarAction.move(action.r * gamma_step, action.theta)))
        else:
            entries.append((code, action))
    return AnnotatedCandidates(tuple(entries))


@dataclass(frozen=True)
class StuckEvaluation:
    eta: float
    rho: float
    path_len: float
    area_gain: float
    score: float
    stuck_now: bool
    confirmed: bool


class StuckMonitor:
    """Per-episode sliding-window evaluator. Feed one (pose, new-coverage)
    sample per step; evaluations begin once the window fills."""

    def __init__(self, cfg: StuckConfig, cell_area: float):
        self.cfg = cfg
        self.cell_area = cell_area
        self._poses: deque[Pose] = deque(maxlen=cfg.window)
        self._gains: deque[int] = deque(maxlen=cfg.window)
        self._flags: list[bool] = []

    def reset(self) -> None:
        self._poses.clear()
        self._gains.clear()
        self._flags.clear()

    def update(self, pose: Pose, newly_observed_cells: int) -> StuckEvaluation | None:
        self._poses.append(pose)
        self._gains.append(newly_observed_cells)
        if len(self._poses) < self.cfg.window:
            return None
        poses = list(self._poses)
        eta, rho = stuck_metrics(poses)
        path_len = sum(
            float(np.linalg.norm(b.position - a.position)) for a, b in zip(poses, poses[1:])
        )
        area_gain = sum(self._gains) * self.cell_area
        score, stuck_now = stuck_score(eta, rho, path_len, area_gain, self.cfg)
        self._flags.append(stuck_now)
        confirmed = confirm_stuck(self._flags, self.cfg)
        return StuckEvaluation(eta, rho, path_len, area_gain, score, stuck_now, confirmed)

    def recent_success_heading(self) -> float | None:
        """Heading of the latest window displacement of at least the success
        threshold, newest first."""
        poses = list(self._poses)
        for prev, cur in zip(reversed(poses[:-1]), reversed(poses[1:])):
            delta = cur.position - prev.position
            if float(np.linalg.norm(delta)) >= self.cfg.success_displacement:
                return math.atan2(float(delta[1]), float(delta[0]))
        return None


def build_escape_context(
    samples: list[tuple[float, float]],
    current_yaw: float,
    monitor: StuckMonitor,
    cfg: StuckConfig,
) -> EscapeContext:
    kind = classify_context(samples, cfg)
    success_heading = monitor.recent_success_heading() if kind == ContextKind.AMBIGUOUS else None
    return EscapeContext(
        kind=kind,
        current_yaw=current_yaw,
        samples=tuple(samples),
        recent_success_heading=success_heading,
    )
