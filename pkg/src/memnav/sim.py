"""Deterministic 2D continuous environment: polygonal occupancy scenes, swept-
circle agent kinematics, FOV ray-casting, observation text synthesis, and the
success criterion (proximity plus visual confirmation, held two steps)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import MemnavError, PolarAction, Pose, wrap_angle
from .metrics import Cell, GridSpec

_EPS = 1e-12


class SceneError(MemnavError):
    pass


class SceneParseError(SceneError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SceneVersionError(SceneError):
    pass


class EpisodeOverError(MemnavError):
    pass


@dataclass(frozen=True)
class SceneObject:
    label: str
    x: float
    y: float
    radius: float


@dataclass(frozen=True)
class Scene:
    """World description. `start` carries yaw in degrees (file-format
    convention); everything else is meters."""

    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    obstacles: tuple[tuple[tuple[float, float], ...], ...]
    objects: tuple[SceneObject, ...]
    start: tuple[float, float, float]  # x, y, yaw_deg
    target_label: str
    shortest_path_length: float

    def start_pose(self) -> Pose:
        x, y, yaw_deg = self.start
        return Pose.from_xy_yaw(x, y, wrap_angle(math.radians(yaw_deg)))

    def target_objects(self) -> list[SceneObject]:
        return [o for o in self.objects if o.label == self.target_label]

    def validate(self, agent_radius: float = 0.17) -> None:
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise SceneError("bounds rectangle is degenerate")
        if self.shortest_path_length <= 0.0:
            raise SceneError("shortest_path must be > 0")
        if not self.target_objects():
            raise SceneError(f"no object matches target {self.target_label!r}")
        sx, sy, _ = self.start
        segments = scene_segments(self)
        if not (xmin < sx < xmax and ymin < sy < ymax):
            raise SceneError("start position outside bounds")
        for poly in self.obstacles:
            if len(poly) < 3:
                raise SceneError("obstacle polygons need at least 3 vertices")
            if point_in_polygon((sx, sy), poly):
                raise SceneError("start position inside an obstacle")
            for obj in self.objects:
                if point_in_polygon((obj.x, obj.y), poly):
                    raise SceneError(f"object {obj.label!r} inside an obstacle")
        if min_segment_distance((sx, sy), segments) < agent_radius:
            raise SceneError("start position too close to an obstacle")
        for obj in self.objects:
            if math.hypot(obj.x - sx, obj.y - sy) < obj.radius + agent_radius:
                raise SceneError(f"start position overlaps object {obj.label!r}")


# -- geometry ---------------------------------------------------------------

Segment = tuple[tuple[float, float], tuple[float, float]]


def scene_segments(scene: Scene) -> list[Segment]:
    """Obstacle edges plus the four bounding walls."""
    xmin, ymin, xmax, ymax = scene.bounds
    corners = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    segments: list[Segment] = [
        (corners[i], corners[(i + 1) % 4]) for i in range(4)
    ]
    for poly in scene.obstacles:
        for i in range(len(poly)):
            segments.append((poly[i], poly[(i + 1) % len(poly)]))
    return segments


def point_in_polygon(point: tuple[float, float], poly: tuple[tuple[float, float], ...]) -> bool:
    x, y = point
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            t = (y - y1) / (y2 - y1)
            if x < x1 + t * (x2 - x1):
                inside = not inside
    return inside


def _point_segment_distance(p: tuple[float, float], seg: Segment) -> float:
    (ax, ay), (bx, by) = seg
    px, py = p
    dx, dy = bx - ax, by - ay
    length_sq = dx * dx + dy * dy
    if length_sq < _EPS:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / length_sq))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def min_segment_distance(p: tuple[float, float], segments: list[Segment]) -> float:
    return min(_point_segment_distance(p, s) for s in segments)


def ray_segment_hit(
    origin: tuple[float, float], direction: tuple[float, float], seg: Segment
) -> float | None:
    """Smallest t >= 0 with origin + t*direction on the segment, else None."""
    (ax, ay), (bx, by) = seg
    ox, oy = origin
    ux, uy = direction
    dx, dy = bx - ax, by - ay
    denom = ux * dy - uy * dx
    if abs(denom) < _EPS:
        return None
    wx, wy = ax - ox, ay - oy
    t = (wx * dy - wy * dx) / denom
    s = (wx * uy - wy * ux) / denom
    if t >= 0.0 and -1e-9 <= s <= 1.0 + 1e-9:
        return t
    return None


def cast_ray(
    origin: tuple[float, float],
    heading: float,
    segments: list[Segment],
    max_range: float = 1e6,
) -> float:
    direction = (math.cos(heading), math.sin(heading))
    best = max_range
    for seg in segments:
        t = ray_segment_hit(origin, direction, seg)
        if t is not None and t < best:
            best = t
    return best


def segments_cross(p: tuple[float, float], q: tuple[float, float], seg: Segment) -> bool:
    ux, uy = q[0] - p[0], q[1] - p[1]
    length = math.hypot(ux, uy)
    if length < _EPS:
        return False
    t = ray_segment_hit(p, (ux / length, uy / length), seg)
    return t is not None and t <= length - 1e-9


def line_of_sight(p: tuple[float, float], q: tuple[float, float], segments: list[Segment]) -> bool:
    return not any(segments_cross(p, q, seg) for seg in segments)


def swept_disk_limit(
    origin: tuple[float, float],
    heading: float,
    max_travel: float,
    radius: float,
    disks: list[tuple[float, float, float]],
) -> float:
    """Travel limit of a circle against solid disks (cx, cy, r)."""
    ox, oy = origin
    ux, uy = math.cos(heading), math.sin(heading)
    limit = max_travel
    for cx, cy, r in disks:
        reach = radius + r
        fx, fy = ox - cx, oy - cy
        if fx * fx + fy * fy < (reach - 1e-9) ** 2:
            return 0.0
        b = 2.0 * (ux * fx + uy * fy)
        c = fx * fx + fy * fy - reach * reach
        disc = b * b - 4.0 * c
        if disc < 0.0:
            continue
        t = (-b - math.sqrt(disc)) / 2.0
        if -1e-9 <= t < limit:
            limit = max(0.0, t)
    return max(0.0, min(limit, max_travel))


def swept_circle_limit(
    origin: tuple[float, float],
    heading: float,
    max_travel: float,
    radius: float,
    segments: list[Segment],
) -> float:
    """How far a circle of `radius` can travel along `heading` before touching
    any segment; the returned distance puts the circle exactly in contact."""
    ox, oy = origin
    ux, uy = math.cos(heading), math.sin(heading)
    limit = max_travel

    for seg in segments:
        if _point_segment_distance(origin, seg) < radius - 1e-9:
            return 0.0
        candidates: list[float] = []
        (ax, ay), (bx, by) = seg
        # endpoint circles
        for cx, cy in ((ax, ay), (bx, by)):
            fx, fy = ox - cx, oy - cy
            b = 2.0 * (ux * fx + uy * fy)
            c = fx * fx + fy * fy - radius * radius
            disc = b * b - 4.0 * c
            if disc >= 0.0:
                root = math.sqrt(disc)
                candidates.extend(((-b - root) / 2.0, (-b + root) / 2.0))
        # offset lines parallel to the segment
        dx, dy = bx - ax, by - ay
        seg_len = math.hypot(dx, dy)
        if seg_len > _EPS:
            nx, ny = -dy / seg_len, dx / seg_len
            un = ux * nx + uy * ny
            if abs(un) > _EPS:
                for side in (radius, -radius):
                    t = (side - ((ox - ax) * nx + (oy - ay) * ny)) / un
                    hx, hy = ox + t * ux, oy + t * uy
                    proj = ((hx - ax) * dx + (hy - ay) * dy) / seg_len
                    if -1e-9 <= proj <= seg_len + 1e-9:
                        candidates.append(t)
        for t in candidates:
            if -1e-9 <= t < limit:
                contact = (ox + t * ux, oy + t * uy)
                if abs(_point_segment_distance(contact, seg) - radius) <= 1e-6:
                    limit = max(0.0, t)
    return max(0.0, min(limit, max_travel))


# -- scene file format ------------------------------------------------------

SCENE_VERSION = 1
_SCENE_FIELDS = {"version", "bounds", "start", "target", "shortest_path", "obstacle", "object"}


def render_scene(scene: Scene) -> str:
    lines = ["# memnav scene", f"version {SCENE_VERSION}"]
    lines.append("bounds {!r} {!r} {!r} {!r}".format(*scene.bounds))
    lines.append("start {!r} {!r} {!r}".format(*scene.start))
    lines.append(f"target {scene.target_label}")
    lines.append(f"shortest_path {scene.shortest_path_length!r}")
    for poly in scene.obstacles:
        coords = " ".join(f"{x!r} {y!r}" for x, y in poly)
        lines.append(f"obstacle {coords}")
    for obj in scene.objects:
        lines.append(f"object {obj.label} {obj.x!r} {obj.y!r} {obj.radius!r}")
    return "\n".join(lines) + "\n"


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(render_scene(scene))


def parse_scene(text: str) -> Scene:
    bounds = None
    start = None
    target = None
    shortest = None
    version = None
    obstacles: list[tuple[tuple[float, float], ...]] = []
    objects: list[SceneObject] = []

    def floats(parts: list[str], line_no: int) -> list[float]:
        try:
            return [float(p) for p in parts]
        except ValueError as exc:
            raise SceneParseError(line_no, f"bad number: {exc}") from None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, *parts = line.split()
        if head not in _SCENE_FIELDS:
            raise SceneParseError(line_no, f"unknown field {head!r}")
        if head == "version":
            if len(parts) != 1 or not parts[0].isdigit():
                raise SceneParseError(line_no, "version expects one integer")
            version = int(parts[0])
        elif head == "bounds":
            if len(parts) != 4:
                raise SceneParseError(line_no, "bounds expects 4 numbers")
            bounds = tuple(floats(parts, line_no))
        elif head == "start":
            if len(parts) != 3:
                raise SceneParseError(line_no, "start expects x y yaw_deg")
            start = tuple(floats(parts, line_no))
        elif head == "target":
            if len(parts) != 1:
                raise SceneParseError(line_no, "target expects one label")
            target = parts[0]
        elif head == "shortest_path":
            if len(parts) != 1:
                raise SceneParseError(line_no, "shortest_path expects one number")
            shortest = floats(parts, line_no)[0]
        elif head == "obstacle":
            if len(parts) < 6 or len(parts) % 2 != 0:
                raise SceneParseError(line_no, "obstacle expects >= 3 x y pairs")
            values = floats(parts, line_no)
            obstacles.append(tuple((values[i], values[i + 1]) for i in range(0, len(values), 2)))
        elif head == "object":
            if len(parts) != 4:
                raise SceneParseError(line_no, "object expects label x y radius")
            x, y, radius = floats(parts[1:], line_no)
            objects.append(SceneObject(parts[0], x, y, radius))

    if version is None:
        raise SceneParseError(0, "missing version line")
    if version != SCENE_VERSION:
        raise SceneVersionError(f"unsupported scene version {version}")
    for name, value in (("bounds", bounds), ("start", start), ("target", target),
                        ("shortest_path", shortest)):
        if value is None:
            raise SceneParseError(0, f"missing required field {name!r}")

    scene = Scene(
        bounds=bounds,
        obstacles=tuple(obstacles),
        objects=tuple(objects),
        start=start,
        target_label=target,
        shortest_path_length=shortest,
    )
    scene.validate()
    return scene


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_scene(handle.read())


# -- observations and stepping ----------------------------------------------

@dataclass
class SimConfig:
    agent_radius: float = 0.17
    fov: float = math.radians(131.0)
    num_fov_rays: int = 64
    num_circle_rays: int = 16
    view_range: float = 6.0     # meters; object visibility limit
    d_success: float = 0.3      # meters to target surface


@dataclass(frozen=True)
class VisibleObject:
    label: str
    surface_range: float  # meters from agent center to object surface
    bearing: float        # radians relative to agent heading, CCW positive


@dataclass(frozen=True)
class Observation:
    step_index: int
    pose: Pose
    fov_samples: tuple[tuple[float, float], ...]     # (relative angle, range)
    circle_samples: tuple[tuple[float, float], ...]  # (world heading, range)
    objects: tuple[VisibleObject, ...]
    desc: str
    visible_cells: frozenset[Cell]   # trodden footprint disk; coverage metric input
    seen_cells: frozenset[Cell]      # FOV wedge out to view range; exploration input
    trigger: bool


@dataclass
class AgentState:
    pose: Pose
    steps_taken: int = 0
    stop_trigger_streak: int = 0


def _range_bucket(surface_range: float) -> str:
    if surface_range < 1.5:
        return "near"
    if surface_range < 3.5:
        return "mid"
    return "far"


def _bearing_bucket(bearing: float) -> str:
    deg = math.degrees(bearing)
    if deg > 40.0:
        return "far-left"
    if deg > 10.0:
        return "left"
    if deg >= -10.0:
        return "ahead"
    if deg >= -40.0:
        return "right"
    return "far-right"


def describe_objects(objects: tuple[VisibleObject, ...]) -> str:
    if not objects:
        return "you see: nothing notable"
    parts = [
        f"{o.label} at {_range_bucket(o.surface_range)} {_bearing_bucket(o.bearing)}"
        for o in objects
    ]
    return "you see: " + ", ".join(parts)


class Environment:
    """One episode's world. Instances are independent; byte-identical inputs
    produce byte-identical observation streams."""

    def __init__(
        self,
        scene: Scene,
        cfg: SimConfig | None = None,
        grid: GridSpec | None = None,
        vision_radius: float = 0.3,
    ):
        self.scene = scene
        self.cfg = cfg or SimConfig()
        self.grid = grid or GridSpec()
        self.vision_radius = vision_radius
        self.segments = scene_segments(scene)
        # objects are solid for motion (furniture) but do not occlude sight
        self.disks = [(o.x, o.y, o.radius) for o in scene.objects]
        self.state = AgentState(pose=scene.start_pose())
        self.terminated = False
        self.success = False
        self.path_length = 0.0
        self.executed_actions: list[PolarAction] = []

    # -- queries ------------------------------------------------------------

    def free_range_world(self, heading: float) -> float:
        origin = (float(self.state.pose.position[0]), float(self.state.pose.position[1]))
        return cast_ray(origin, heading, self.segments)

    def free_range(self, relative_angle: float) -> float:
        return self.free_range_world(self.state.pose.yaw + relative_angle)

    def navigable_range(self, relative_angle: float) -> float:
        """Body-aware free range: how far the agent's swept circle can actually
        travel along this heading. Never exceeds the center-ray free range."""
        pose = self.state.pose
        origin = (float(pose.position[0]), float(pose.position[1]))
        heading = pose.yaw + relative_angle
        return self._travel_limit(origin, heading, self.cfg.view_range)

    def _travel_limit(self, origin: tuple[float, float], heading: float, r: float) -> float:
        limit = swept_circle_limit(origin, heading, r, self.cfg.agent_radius, self.segments)
        return swept_disk_limit(origin, heading, limit, self.cfg.agent_radius, self.disks)

    def _visible_objects(self) -> tuple[VisibleObject, ...]:
        pose = self.state.pose
        origin = (float(pose.position[0]), float(pose.position[1]))
        yaw = pose.yaw
        seen = []
        for obj in self.scene.objects:
            dx, dy = obj.x - origin[0], obj.y - origin[1]
            distance = math.hypot(dx, dy)
            surface = max(0.0, distance - obj.radius)
            if surface > self.cfg.view_range:
                continue
            bearing = wrap_angle(math.atan2(dy, dx) - yaw)
            if abs(bearing) > self.cfg.fov / 2.0:
                continue
            if not line_of_sight(origin, (obj.x, obj.y), self.segments):
                continue
            seen.append(VisibleObject(obj.label, surface, bearing))
        seen.sort(key=lambda o: (o.surface_range, o.label, o.bearing))
        return tuple(seen)

    def _visible_cells(self) -> frozenset[Cell]:
        pose = self.state.pose
        origin = (float(pose.position[0]), float(pose.position[1]))
        radius = self.vision_radius
        cells: set[Cell] = set()
        min_cell = self.grid.world_to_cell(origin[0] - radius, origin[1] - radius)
        max_cell = self.grid.world_to_cell(origin[0] + radius, origin[1] + radius)
        for ix in range(min_cell[0], max_cell[0] + 1):
            for iy in range(min_cell[1], max_cell[1] + 1):
                cell = (ix, iy)
                if not self.grid.in_bounds(cell):
                    continue
                cx, cy = self.grid.cell_center(cell)
                if math.hypot(cx - origin[0], cy - origin[1]) > radius:
                    continue
                if line_of_sight(origin, (cx, cy), self.segments):
                    cells.add(cell)
        return frozenset(cells)

    def _seen_cells(self, fov_samples: list[tuple[float, float]]) -> frozenset[Cell]:
        """Cells swept by the FOV rays out to the view range; marching along
        the pre-cast rays keeps this cheap and obstacle-aware."""
        pose = self.state.pose
        ox, oy = float(pose.position[0]), float(pose.position[1])
        yaw = pose.yaw
        step = self.grid.resolution
        cells: set[Cell] = set()
        for rel, rng in fov_samples:
            heading = yaw + rel
            ux, uy = math.cos(heading), math.sin(heading)
            reach = min(rng, self.cfg.view_range)
            d = step * 0.5
            while d <= reach:
                cell = self.grid.world_to_cell(ox + d * ux, oy + d * uy)
                if self.grid.in_bounds(cell):
                    cells.add(cell)
                d += step
        return frozenset(cells)

    def _trigger(self, objects: tuple[VisibleObject, ...]) -> bool:
        pose = self.state.pose
        origin = (float(pose.position[0]), float(pose.position[1]))
        near = False
        for obj in self.scene.target_objects():
            surface = max(0.0, math.hypot(obj.x - origin[0], obj.y - origin[1]) - obj.radius)
            if surface <= self.cfg.d_success:
                near = True
                break
        visible = any(o.label == self.scene.target_label for o in objects)
        return near and visible

    def _make_observation(self) -> Observation:
        pose = self.state.pose
        yaw = pose.yaw
        half = self.cfg.fov / 2.0
        fov_samples = []
        for i in range(self.cfg.num_fov_rays):
            rel = -half + i * (self.cfg.fov / (self.cfg.num_fov_rays - 1))
            fov_samples.append((rel, self.free_range_world(yaw + rel)))
        circle_samples = []
        for i in range(self.cfg.num_circle_rays):
            # on-axis sampling (includes straight ahead and straight behind)
            heading = wrap_angle(-math.pi + i * (2.0 * math.pi / self.cfg.num_circle_rays))
            circle_samples.append((heading, self.free_range_world(heading)))
        objects = self._visible_objects()
        trigger = self._trigger(objects)
        if trigger:
            self.state.stop_trigger_streak += 1
        else:
            self.state.stop_trigger_streak = 0
        footprint = self._visible_cells()
        return Observation(
            step_index=self.state.steps_taken,
            pose=pose,
            fov_samples=tuple(fov_samples),
            circle_samples=tuple(circle_samples),
            objects=objects,
            desc=describe_objects(objects),
            visible_cells=footprint,
            seen_cells=self._seen_cells(fov_samples) | footprint,
            trigger=trigger,
        )

    # -- lifecycle ----------------------------------------------------------

    def reset(self) -> Observation:
        self.state = AgentState(pose=self.scene.start_pose())
        self.terminated = False
        self.success = False
        self.path_length = 0.0
        self.executed_actions = []
        return self._make_observation()

    def step(self, action: PolarAction) -> Observation:
        if self.terminated:
            raise EpisodeOverError("episode already terminated")
        self.executed_actions.append(action)
        if action.is_stop:
            self.success = self.state.stop_trigger_streak >= 2
            self.terminated = True
            self.state.steps_taken += 1
            return self._make_observation()

        pose = self.state.pose
        new_yaw = wrap_angle(pose.yaw + action.theta)
        origin = (float(pose.position[0]), float(pose.position[1]))
        travel = self._travel_limit(origin, new_yaw, action.r)
        new_xy = (
            origin[0] + travel * math.cos(new_yaw),
            origin[1] + travel * math.sin(new_yaw),
        )
        self.state.pose = Pose.from_xy_yaw(new_xy[0], new_xy[1], new_yaw)
        self.state.steps_taken += 1
        self.path_length += travel
        return self._make_observation()

    def check_success(self, observation: Observation) -> tuple[bool, bool]:
        """(trigger at this observation, episode finished successfully)."""
        return observation.trigger, self.terminated and self.success
