"""Geometric action proposal: FOV-covering polar candidates, exploration-aware
filtering, and rotation-based recovery when no candidate survives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Pose, PolarAction, wrap_angle
from .metrics import Cell, GridSpec

DepthProfile = Callable[[float], float]  # relative heading -> free range, meters

TURN_AROUND = PolarAction.move(0.0, math.pi)


@dataclass
class ProposerConfig:
    theta_max: float = math.radians(131.0 / 2.0)  # FOV half-angle
    delta_theta: float = 2.0 * math.pi / 60.0     # angular bin width
    r_max: float = 1.7
    r_min: float = 0.5
    eta_safe: float = 0.8            # fraction of the measured free range
    tau_prop: float = 0.0            # exploration score floor (strict >)
    theta_delta: float | None = None # min angular separation; None = delta_theta
    rotation_cooldown: int = 3       # steps before another recovery turn
    history_window: int = 20         # recent poses counted for revisit damping
    neighborhood_radius: int = 5     # cells; exploration-potential window

    def __post_init__(self):
        if not 0.0 < self.delta_theta <= self.theta_max:
            raise ValueError("need 0 < delta_theta <= theta_max")
        if not 0.0 < self.r_min <= self.r_max:
            raise ValueError("need 0 < r_min <= r_max")
        if not 0.0 < self.eta_safe <= 1.0:
            raise ValueError("eta_safe must lie in (0, 1]")

    @property
    def min_separation(self) -> float:
        return self.delta_theta if self.theta_delta is None else self.theta_delta


@dataclass(frozen=True)
class AnnotatedCandidates:
    """Numbered candidate actions. Code 0, when present, is always the
    turn-around rotation; move candidates are numbered 1..n by ascending
    heading change."""

    entries: tuple[tuple[int, PolarAction], ...]

    def __post_init__(self):
        codes = [code for code, _ in self.entries]
        if len(set(codes)) != len(codes):
            raise ValueError("candidate codes must be unique")
        if codes and sorted(codes) != list(range(min(codes), min(codes) + len(codes))):
            raise ValueError("candidate codes must be contiguous")
        for code, action in self.entries:
            if code == 0 and not (action.r == 0.0 and action.theta == math.pi):
                raise ValueError("code 0 is reserved for the turn-around rotation")

    def codes(self) -> list[int]:
        return [code for code, _ in self.entries]

    def action_for(self, code: int) -> PolarAction:
        for c, action in self.entries:
            if c == code:
                return action
        raise KeyError(code)

    def __len__(self) -> int:
        return len(self.entries)

    def render_lines(self) -> list[str]:
        """Prompt-facing text, one candidate per line (bearing in degrees)."""
        lines = []
        for code, action in self.entries:
            if code == 0:
                lines.append("action 0: turn around in place (rotate 180.0 deg)")
            else:
                lines.append(
                    "action {}: bearing {:+.1f} deg, range {:.2f} m".format(
                        code, math.degrees(action.theta), action.r
                    )
                )
        return lines


@dataclass
class ExplorationState:
    """View over the coverage grid used to judge where exploring still pays.

    `region` (world xmin, ymin, xmax, ymax), when set, marks cells beyond the
    reachable world as holding no exploration value; otherwise perimeter
    destinations would look permanently unexplored.
    """

    grid: GridSpec
    counts: dict[Cell, int]
    agent_pose: Pose
    region: tuple[float, float, float, float] | None = None

    def destination_cell(self, action: PolarAction) -> Cell:
        heading = self.agent_pose.yaw + action.theta
        x = float(self.agent_pose.position[0]) + action.r * math.cos(heading)
        y = float(self.agent_pose.position[1]) + action.r * math.sin(heading)
        return self.grid.world_to_cell(x, y)

    def _explorable(self, cell: Cell) -> bool:
        if self.region is None:
            return True
        x, y = self.grid.cell_center(cell)
        xmin, ymin, xmax, ymax = self.region
        return xmin <= x <= xmax and ymin <= y <= ymax

    def visited_fraction(self, cell: Cell, radius: int) -> float:
        total = 0
        visited = 0
        for dx in range(-radius, radius + 1):
            for dy in range(-radius, radius + 1):
                probe = (cell[0] + dx, cell[1] + dy)
                if not self.grid.in_bounds(probe):
                    continue
                total += 1
                if self.counts.get(probe, 0) > 0 or not self._explorable(probe):
                    visited += 1
        return visited / total if total else 0.0

    def nearest_unseen(self, position) -> tuple[float, float] | None:
        """World center of the closest never-seen cell inside the region, or
        None when the region is exhausted. Only meaningful with a region set."""
        if self.region is None:
            return None
        xmin, ymin, xmax, ymax = self.region
        lo = self.grid.world_to_cell(xmin, ymin)
        hi = self.grid.world_to_cell(xmax, ymax)
        px, py = float(position[0]), float(position[1])
        best = None
        best_d2 = math.inf
        for ix in range(lo[0], hi[0] + 1):
            for iy in range(lo[1], hi[1] + 1):
                if self.counts.get((ix, iy), 0) > 0:
                    continue
                cx, cy = self.grid.cell_center((ix, iy))
                d2 = (cx - px) ** 2 + (cy - py) ** 2
                if d2 < best_d2:
                    best_d2 = d2
                    best = (cx, cy)
        return best

    def unvisited_fraction(self, action: PolarAction, radius: int) -> float:
        return 1.0 - self.visited_fraction(self.destination_cell(action), radius)


def generate_initial(depth_profile: DepthProfile, cfg: ProposerConfig) -> list[PolarAction]:
    """Candidates at every angular bin across the FOV, ranges clamped to the
    safety fraction of the measured free range. Candidates shorter than r_min
    are dropped as non-navigable."""
    k_max = int(math.floor(cfg.theta_max / cfg.delta_theta))
    candidates = []
    for k in range(-k_max, k_max + 1):
        theta = k * cfg.delta_theta
        r = min(cfg.eta_safe * depth_profile(theta), cfg.r_max)
        if r < cfg.r_min:
            continue
        candidates.append(PolarAction.move(r, theta))
    return candidates


def exploration_score(
    action: PolarAction,
    state: ExplorationState,
    history_cells: Sequence[Cell],
    cfg: ProposerConfig,
) -> float:
    """Revisit damping times exploration potential for one candidate."""
    dest = state.destination_cell(action)
    recent_visits = sum(1 for cell in history_cells if cell == dest)
    alpha = 1.0 / (1.0 + recent_visits)
    s = state.unvisited_fraction(action, cfg.neighborhood_radius)
    return alpha * s


def filter_candidates(
    initial: list[PolarAction],
    state: ExplorationState | None,
    history_cells: Sequence[Cell],
    cfg: ProposerConfig,
) -> list[PolarAction]:
    """Keep candidates whose exploration score strictly exceeds tau_prop, then
    enforce pairwise angular separation greedily (best score first). The
    output preserves ascending-heading order."""
    if state is None:
        scored = [(1.0, a) for a in initial]
    else:
        scored = [(exploration_score(a, state, history_cells, cfg), a) for a in initial]
    viable = [(s, a) for s, a in scored if s > cfg.tau_prop]
    viable.sort(key=lambda pair: (-pair[0], abs(pair[1].theta), pair[1].theta))

    kept: list[PolarAction] = []
    for _, action in viable:
        if all(abs(wrap_angle(action.theta - other.theta)) >= cfg.min_separation for other in kept):
            kept.append(action)
    kept.sort(key=lambda a: a.theta)
    return kept


def apply_safety_recovery(
    filtered: list[PolarAction],
    initial: list[PolarAction],
    steps_since_rotation: int,
    cfg: ProposerConfig,
    turn_active: bool = False,
) -> AnnotatedCandidates:
    """Number the surviving candidates, falling back to recovery moves when
    nothing survived.

    Empty set + cooldown elapsed: a single turn-around coded 0. Empty set
    within the cooldown: the pre-filter candidates re-emitted at half range so
    the agent can still inch forward (turn-around if even those are gone).
    Otherwise codes 1..n ascend by heading, with code 0 prepended only while
    the turn instruction is active. Never returns an empty set.
    """
    if not filtered:
        if steps_since_rotation > cfg.rotation_cooldown or not initial:
            return AnnotatedCandidates(((0, TURN_AROUND),))
        halved = [PolarAction.move(a.r * 0.5, a.theta) for a in initial]
        return AnnotatedCandidates(
            tuple((i + 1, a) for i, a in enumerate(sorted(halved, key=lambda a: a.theta)))
        )

    ordered = sorted(filtered, key=lambda a: a.theta)
    entries: list[tuple[int, PolarAction]] = []
    if turn_active:
        entries.append((0, TURN_AROUND))
    entries.extend((i + 1, a) for i, a in enumerate(ordered))
    return AnnotatedCandidates(tuple(entries))
