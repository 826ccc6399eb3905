"""Deterministic scene generation (corridor / rooms / blobs) with a grid
shortest-path oracle that stores the optimal path length in each file."""

from __future__ import annotations

import heapq
import math
import random
from pathlib import Path

from .sim import Scene, SceneError, SceneObject, save_scene, scene_segments, _point_segment_distance, point_in_polygon

KINDS = ("corridor", "rooms", "blobs")

_THEMES: dict[str, list[str]] = {
    "kitchen": ["stove", "refrigerator", "sink", "oven"],
    "living": ["sofa", "tv", "armchair", "rug"],
    "bedroom": ["bed", "wardrobe", "nightstand"],
    "bathroom": ["toilet", "bathtub", "shower"],
    "office": ["desk", "monitor", "bookshelf"],
    "dining": ["table", "chair", "cabinet"],
}


def shortest_path_length(
    scene: Scene,
    resolution: float = 0.1,
    agent_radius: float = 0.17,
    d_success: float = 0.3,
) -> float | None:
    """Dijkstra over an inflated occupancy grid from the start to any cell
    within the success distance of a target object. None when unreachable."""
    xmin, ymin, xmax, ymax = scene.bounds
    nx = int(round((xmax - xmin) / resolution))
    ny = int(round((ymax - ymin) / resolution))
    segments = scene_segments(scene)

    def center(ix: int, iy: int) -> tuple[float, float]:
        return xmin + (ix + 0.5) * resolution, ymin + (iy + 0.5) * resolution

    free = [[False] * ny for _ in range(nx)]
    for ix in range(nx):
        for iy in range(ny):
            p = center(ix, iy)
            if any(point_in_polygon(p, poly) for poly in scene.obstacles):
                continue
            if min(_point_segment_distance(p, s) for s in segments) < agent_radius:
                continue
            if any(
                math.hypot(p[0] - o.x, p[1] - o.y) < o.radius + agent_radius
                for o in scene.objects
            ):
                continue
            free[ix][iy] = True

    targets = scene.target_objects()
    goal = [[False] * ny for _ in range(nx)]
    any_goal = False
    for ix in range(nx):
        for iy in range(ny):
            if not free[ix][iy]:
                continue
            p = center(ix, iy)
            for obj in targets:
                if math.hypot(p[0] - obj.x, p[1] - obj.y) - obj.radius <= d_success:
                    goal[ix][iy] = True
                    any_goal = True
                    break
    if not any_goal:
        return None

    sx, sy, _ = scene.start
    six = min(nx - 1, max(0, int((sx - xmin) / resolution)))
    siy = min(ny - 1, max(0, int((sy - ymin) / resolution)))
    if not free[six][siy]:
        return None
    if goal[six][siy]:
        return resolution  # already at the goal; keep the length positive

    diag = math.sqrt(2.0) * resolution
    dist = {(six, siy): 0.0}
    queue = [(0.0, six, siy)]
    moves = [
        (1, 0, resolution), (-1, 0, resolution), (0, 1, resolution), (0, -1, resolution),
        (1, 1, diag), (1, -1, diag), (-1, 1, diag), (-1, -1, diag),
    ]
    while queue:
        d, ix, iy = heapq.heappop(queue)
        if d > dist.get((ix, iy), math.inf):
            continue
        if goal[ix][iy]:
            return max(d, resolution)
        for dx, dy, cost in moves:
            jx, jy = ix + dx, iy + dy
            if not (0 <= jx < nx and 0 <= jy < ny) or not free[jx][jy]:
                continue
            nd = d + cost
            if nd < dist.get((jx, jy), math.inf):
                dist[(jx, jy)] = nd
                heapq.heappush(queue, (nd, jx, jy))
    return None


def _rect(x0: float, y0: float, x1: float, y1: float) -> tuple[tuple[float, float], ...]:
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def _round2(value: float) -> float:
    return round(value, 2)


def _place_objects(
    rng: random.Random,
    theme: str,
    region: tuple[float, float, float, float],
    count: int,
) -> list[SceneObject]:
    x0, y0, x1, y1 = region
    labels = _THEMES[theme][:count]
    objects = []
    for label in labels:
        x = _round2(rng.uniform(x0 + 0.6, x1 - 0.6))
        y = _round2(rng.uniform(y0 + 0.6, y1 - 0.6))
        objects.append(SceneObject(label, x, y, 0.3))
    return objects


def _corridor_scene(rng: random.Random) -> Scene:
    width = 0.65  # tight for the 0.34 m body, still two narrow antipodal arcs
    bounds = (0.0, 0.0, 14.0, 6.0)
    gap_lo = 3.0 - width / 2.0
    gap_hi = 3.0 + width / 2.0
    obstacles = (
        _rect(5.5, 0.0, 8.5, gap_lo),
        _rect(5.5, gap_hi, 8.5, 6.0),
    )
    left_theme, right_theme = rng.sample(sorted(_THEMES), 2)
    objects = _place_objects(rng, left_theme, (0.5, 0.5, 5.0, 2.0), 2)
    objects += _place_objects(rng, right_theme, (9.0, 3.8, 13.5, 5.5), 2)
    # target sits on the corridor axis so it becomes visible from inside
    target_label = _THEMES[right_theme][2]
    objects.append(SceneObject(target_label, _round2(rng.uniform(10.5, 12.5)), 3.0, 0.3))
    start = (_round2(rng.uniform(1.2, 2.8)), 3.0, 0.0)
    return Scene(bounds, tuple(obstacles), tuple(objects), start, target_label, 1.0)


def _rooms_scene(rng: random.Random) -> Scene:
    bounds = (0.0, 0.0, 12.0, 9.0)
    wall = 0.1
    door = 1.2
    # vertical wall at x=6 with one door per half, horizontal wall at y=4.5
    vy1 = _round2(rng.uniform(1.2, 2.6))
    vy2 = _round2(rng.uniform(5.8, 7.0))
    hx1 = _round2(rng.uniform(1.5, 3.5))
    hx2 = _round2(rng.uniform(7.5, 9.5))
    obstacles = (
        _rect(6.0 - wall, 0.0, 6.0 + wall, vy1),
        _rect(6.0 - wall, vy1 + door, 6.0 + wall, vy2),
        _rect(6.0 - wall, vy2 + door, 6.0 + wall, 9.0),
        _rect(0.0, 4.5 - wall, hx1, 4.5 + wall),
        _rect(hx1 + door, 4.5 - wall, hx2, 4.5 + wall),
        _rect(hx2 + door, 4.5 - wall, 12.0, 4.5 + wall),
    )
    regions = {
        "ll": (0.0, 0.0, 5.9, 4.4),
        "lr": (6.1, 0.0, 12.0, 4.4),
        "ul": (0.0, 4.6, 5.9, 9.0),
        "ur": (6.1, 4.6, 12.0, 9.0),
    }
    themes = rng.sample(sorted(_THEMES), 4)
    objects: list[SceneObject] = []
    for theme, region in zip(themes, regions.values()):
        objects.extend(_place_objects(rng, theme, region, 3))
    start_key = rng.choice(sorted(regions))
    x0, y0, x1, y1 = regions[start_key]
    start = (
        _round2(rng.uniform(x0 + 0.8, x1 - 0.8)),
        _round2(rng.uniform(y0 + 0.8, y1 - 0.8)),
        _round2(rng.uniform(-180.0, 180.0)),
    )
    target = rng.choice(sorted({o.label for o in objects}))
    return Scene(bounds, obstacles, tuple(objects), start, target, 1.0)


def _blobs_scene(rng: random.Random) -> Scene:
    bounds = (0.0, 0.0, 16.0, 12.0)
    centers = [(3.0, 3.0), (13.0, 3.0), (8.0, 9.5)]
    themes = rng.sample(sorted(_THEMES), 3)
    objects: list[SceneObject] = []
    for theme, (cx, cy) in zip(themes, centers):
        region = (cx - 1.4, cy - 1.4, cx + 1.4, cy + 1.4)
        objects.extend(_place_objects(rng, theme, region, 3))
    start = (8.0, _round2(rng.uniform(5.0, 6.5)), _round2(rng.uniform(-180.0, 180.0)))
    target = rng.choice(sorted({o.label for o in objects}))
    return Scene(bounds, (), tuple(objects), start, target, 1.0)


_BUILDERS = {"corridor": _corridor_scene, "rooms": _rooms_scene, "blobs": _blobs_scene}


def generate_scene(kind: str, seed: int) -> Scene:
    """One validated scene with its stored shortest-path length. Retries with
    derived seeds until the start-to-target path exists."""
    if kind not in _BUILDERS:
        raise ValueError(f"unknown scene kind {kind!r}; expected one of {KINDS}")
    for attempt in range(64):
        rng = random.Random((seed, attempt, kind).__repr__())
        candidate = _BUILDERS[kind](rng)
        length = shortest_path_length(candidate)
        if length is None or length < 1.0:
            continue
        scene = Scene(
            bounds=candidate.bounds,
            obstacles=candidate.obstacles,
            objects=candidate.objects,
            start=candidate.start,
            target_label=candidate.target_label,
            shortest_path_length=round(length, 4),
        )
        try:
            scene.validate()
        except SceneError:
            continue
        return scene
    raise SceneError(f"could not generate a valid {kind!r} scene for seed {seed}")


def gen_scenes(kind: str, count: int, seed: int, out_dir) -> list[Path]:
    """Write `count` scene files named <kind>_<index>.scene; deterministic for
    a fixed (kind, count, seed)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        scene = generate_scene(kind, seed + i)
        path = out / f"{kind}_{i:03d}.scene"
        save_scene(scene, path)
        paths.append(path)
    return paths
