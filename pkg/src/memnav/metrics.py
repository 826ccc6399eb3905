"""Episode-level evaluation: success rate, SPL, the area-overlap redundancy
index (AORI), and the continuous-to-discrete step conversion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import MemnavError, PolarAction

Cell = tuple[int, int]


class GridBoundsError(MemnavError):
    pass


class EmptyOutcomesError(MemnavError):
    pass


class InvalidEpisodeError(MemnavError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Square occupancy grid centered on the world origin."""

    size: int = 5000          # cells per side
    resolution: float = 0.1   # meters per cell

    def world_to_cell(self, x: float, y: float) -> Cell:
        half = self.size // 2
        ix = int(math.floor(x / self.resolution)) + half
        iy = int(math.floor(y / self.resolution)) + half
        return ix, iy

    def cell_center(self, cell: Cell) -> tuple[float, float]:
        half = self.size // 2
        return ((cell[0] - half) + 0.5) * self.resolution, ((cell[1] - half) + 0.5) * self.resolution

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.size and 0 <= cell[1] < self.size

    @property
    def cell_area(self) -> float:
        return self.resolution * self.resolution


@dataclass
class AoriConfig:
    map_size: int = 5000
    voxel_ray_size: int = 60
    explore_threshold: int = 3     # observations per cell to count as dense
    e_i_scaling: float = 0.8
    w_c: float = 0.8
    w_d: float = 0.2
    grid_resolution: float = 0.1   # meters per cell
    # Cells count toward the overlap indicator once their prior visit count
    # reaches this value. 1 = any previously seen cell (default reading);
    # higher values demand repeated prior coverage.
    overlap_prior_visits: int = 1
    # Observation disk radius in meters; None derives the value from the
    # map/voxel ratio so the disk area matches (map_size/voxel_ray_size)^2 * pi
    # cells. Desk-scale runs override this with something much smaller.
    vision_radius: float | None = None

    def __post_init__(self):
        if abs(self.w_c + self.w_d - 1.0) > 1e-12:
            raise ValueError("w_c + w_d must equal 1.0")
        if self.map_size <= 0 or self.voxel_ray_size <= 0 or self.grid_resolution <= 0:
            raise ValueError("grid sizes must be positive")
        if self.explore_threshold <= 0 or self.overlap_prior_visits <= 0:
            raise ValueError("thresholds must be positive")

    def grid(self) -> GridSpec:
        return GridSpec(self.map_size, self.grid_resolution)

    def effective_vision_radius(self) -> float:
        if self.vision_radius is not None:
            return self.vision_radius
        return (self.map_size / self.voxel_ray_size) * self.grid_resolution


class AoriAccumulator:
    """Running coverage/overlap/density state for one episode.

    Feed one visible-cell set per step; `aori()` evaluates the redundancy
    index at the current step count.
    """

    def __init__(self, cfg: AoriConfig):
        self.cfg = cfg
        self.grid = cfg.grid()
        self.counts: dict[Cell, int] = {}
        self.steps_observed = 0
        self.overlap_events = 0
        self.dense_cells = 0  # cells with count >= explore_threshold

    def observe_step(self, visible: set[Cell]) -> int:
        """Record one observation; returns the number of first-time cells.

        An overlap event is recorded when at least `explore_threshold` of the
        currently visible cells were already visited `overlap_prior_visits`+
        times before this step.
        """
        for cell in visible:
            if not self.grid.in_bounds(cell):
                raise GridBoundsError(f"cell {cell} outside the {self.grid.size}^2 grid")
        self.steps_observed += 1
        previously_covered = sum(
            1 for cell in visible if self.counts.get(cell, 0) >= self.cfg.overlap_prior_visits
        )
        if self.steps_observed > 1 and previously_covered >= self.cfg.explore_threshold:
            self.overlap_events += 1
        newly = 0
        for cell in visible:
            count = self.counts.get(cell, 0)
            if count == 0:
                newly += 1
            count += 1
            self.counts[cell] = count
            if count == self.cfg.explore_threshold:
                self.dense_cells += 1
        return newly

    @property
    def observed_cells(self) -> int:
        return len(self.counts)

    def overlap_ratio(self, t: int | None = None) -> float:
        steps = self.steps_observed if t is None else t
        return self.overlap_events / max(steps - 1, 1)

    def normalized_density(self, t: int | None = None) -> float:
        steps = self.steps_observed if t is None else t
        expected = (
            self.cfg.e_i_scaling * (self.observed_cells / float(self.grid.size**2)) * steps
        )
        if expected <= 0.0:
            return 0.0 if self.dense_cells == 0 else 1.0
        return min(1.0, self.dense_cells / expected)

    def aori(self, t: int | None = None) -> float:
        steps = self.steps_observed if t is None else t
        if steps < 1:
            raise ValueError("redundancy index needs at least one observed step")
        return redundancy_index(self.overlap_ratio(steps), self.normalized_density(steps), self.cfg)


def redundancy_index(r_overlap: float, d_norm: float, cfg: AoriConfig | None = None) -> float:
    """AORI = 1 - (w_c * (1 - r_overlap)^2 + w_d * (1 - d_norm)).

    0 is optimal exploration, 1 maximal redundancy.
    """
    if cfg is None:
        cfg = AoriConfig()
    return 1.0 - (cfg.w_c * (1.0 - r_overlap) ** 2 + cfg.w_d * (1.0 - d_norm))


@dataclass(frozen=True)
class EpisodeOutcome:
    success: bool
    shortest_path: float       # meters, precomputed optimum
    agent_path: float          # meters actually traveled
    step_count: int            # agent actions executed
    aori: float
    discrete_steps: int = 0
    scene: str = ""
    error: str = ""

    def __post_init__(self):
        if self.shortest_path <= 0.0:
            raise InvalidEpisodeError("shortest_path must be > 0")
        if self.agent_path < 0.0:
            raise InvalidEpisodeError("agent_path must be >= 0")


def spl(outcomes: list[EpisodeOutcome]) -> float:
    """Mean of success * shortest / max(traveled, shortest) over episodes."""
    if not outcomes:
        raise EmptyOutcomesError("spl of an empty outcome list")
    total = 0.0
    for o in outcomes:
        if o.shortest_path <= 0.0:
            raise InvalidEpisodeError("shortest_path must be > 0")
        if o.success:
            total += o.shortest_path / max(o.agent_path, o.shortest_path)
    return total / len(outcomes)


def success_rate(outcomes: list[EpisodeOutcome]) -> float:
    if not outcomes:
        raise EmptyOutcomesError("success_rate of an empty outcome list")
    return sum(1 for o in outcomes if o.success) / len(outcomes)


_STEP_EPS = 1e-9


def _ceil_units(value: float, unit: float) -> int:
    # Guard against float noise pushing an exact multiple over the next unit.
    quotient = value / unit
    nearest = round(quotient)
    if abs(quotient - nearest) < _STEP_EPS:
        return int(nearest)
    return int(math.ceil(quotient))


def discrete_steps(action: PolarAction) -> int:
    """Equivalent count of 0.25 m / 30 degree discrete steps for one action.

    Stop maps to 1 step; otherwise N = max(ceil(r/0.25) + ceil(deg/30), 1).
    """
    if action.is_stop:
        return 1
    radial = _ceil_units(action.r, 0.25)
    degrees = 180.0 * abs(action.theta) / math.pi
    angular = _ceil_units(degrees, 30.0)
    return max(radial + angular, 1)


def episode_step_budget(actions: list[PolarAction], budget: int = 500) -> tuple[int, bool]:
    """Total discrete steps for an action sequence and whether it exceeds the
    reference budget."""
    total = sum(discrete_steps(a) for a in actions)
    return total, total > budget


@dataclass
class MetricsReport:
    outcomes: list[EpisodeOutcome] = field(default_factory=list)

    @property
    def sr(self) -> float:
        return success_rate(self.outcomes)

    @property
    def spl(self) -> float:
        return spl(self.outcomes)

    @property
    def mean_aori(self) -> float:
        return sum(o.aori for o in self.outcomes) / len(self.outcomes)

    @property
    def mean_discrete_steps(self) -> float:
        return sum(o.discrete_steps for o in self.outcomes) / len(self.outcomes)

    def render(self) -> str:
        """Stable tab-separated report: one row per episode, aggregates last."""
        lines = [
            "# navigation metrics report v1",
            "episode\tscene\tsuccess\tshortest_m\ttraveled_m\tactions\tdiscrete_steps\taori",
        ]
        for i, o in enumerate(self.outcomes):
            lines.append(
                f"{i}\t{o.scene}\t{int(o.success)}\t{o.shortest_path:.4f}\t"
                f"{o.agent_path:.4f}\t{o.step_count}\t{o.discrete_steps}\t{o.aori:.6f}"
            )
        lines.append(
            "aggregate\tSR={:.4f}\tSPL={:.4f}\tmean_AORI={:.6f}\tmean_discrete_steps={:.2f}".format(
                self.sr, self.spl, self.mean_aori, self.mean_discrete_steps
            )
        )
        return "\n".join(lines) + "\n"
