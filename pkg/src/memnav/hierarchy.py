"""Bottom-up construction of the 4-level spatial-semantic memory.

Levels: L3 observation (one per topological node), L2 area (single-linkage
clusters under a combined spatial-semantic distance), L1 room (spatial
pre-clustering refined by room function), L0 environment root. The label
vocabularies live in data/room_labels.json and are meant to be edited.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial import ConvexHull, QhullError

from .core import Embedding, MemnavError, tokenize
from .topo import TopoMap, TopoNode

ROOT_ID = "GLOBAL_ROOT"


class EmptyInputError(MemnavError):
    pass


class Level(enum.IntEnum):
    L0 = 0  # environment root
    L1 = 1  # room
    L2 = 2  # area
    L3 = 3  # observation


@dataclass
class HierarchyConfig:
    spatial_weight: float = 0.4
    semantic_weight: float = 0.6
    theta1: float = 1.0        # base area-cluster threshold (combined distance)
    theta2: float = 3.0        # meters; room spatial pre-clustering cut
    rebuild_every: int = 5     # node insertions between full rebuilds

    def __post_init__(self):
        if abs(self.spatial_weight + self.semantic_weight - 1.0) > 1e-12:
            raise ValueError("spatial_weight + semantic_weight must equal 1.0")
        if self.theta1 <= 0 or self.theta2 <= 0 or self.rebuild_every <= 0:
            raise ValueError("hierarchy thresholds must be strictly positive")


@dataclass(eq=False)
class MemoryNode:
    """One node of the memory hierarchy.

    `position` is the observation position for L3 and the children centroid
    above; `keywords` and `latest_step` aggregate over descendants.
    """

    id: str
    level: Level
    parents: set[str] = field(default_factory=set)
    children: set[str] = field(default_factory=set)
    summary_embedding: Embedding | None = None
    keywords: frozenset[str] = frozenset()
    latest_step: int = 0
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # level-specific payload
    topo_node_id: int | None = None            # L3
    area_type: str | None = None               # L2
    hull: list[tuple[float, float]] | None = None  # L2, xy vertices
    room_function: str | None = None           # L1

    @property
    def label(self) -> str:
        if self.level == Level.L2:
            return self.area_type or ""
        if self.level == Level.L1:
            return self.room_function or ""
        return ""


class MemoryHierarchy:
    """Immutable-after-build container with the L0 root and an id index."""

    def __init__(self, nodes: dict[str, MemoryNode], root_id: str = ROOT_ID):
        self.nodes = nodes
        self.root_id = root_id

    @property
    def root(self) -> MemoryNode:
        return self.nodes[self.root_id]

    def children_of(self, node_id: str) -> list[MemoryNode]:
        return [self.nodes[c] for c in sorted(self.nodes[node_id].children)]

    def level_nodes(self, level: Level) -> list[MemoryNode]:
        return sorted((n for n in self.nodes.values() if n.level == level), key=lambda n: n.id)

    def validate(self) -> None:
        """Raise if structural invariants are broken (used by tests)."""
        for node in self.nodes.values():
            expected_parents = 0 if node.level == Level.L0 else 1
            if len(node.parents) != expected_parents:
                raise AssertionError(f"{node.id}: expected {expected_parents} parent(s)")
            for p in node.parents:
                if node.id not in self.nodes[p].children:
                    raise AssertionError(f"{node.id} missing from parent {p} children")
            for c in node.children:
                if node.id not in self.nodes[c].parents:
                    raise AssertionError(f"{c} missing parent link to {node.id}")
            if node.level == Level.L3 and node.topo_node_id is None:
                raise AssertionError(f"{node.id}: observation node without map reference")

    def dump_tree(self) -> str:
        """Indented text tree: level, id, label, child count per line."""
        lines: list[str] = []

        def walk(node_id: str, depth: int) -> None:
            node = self.nodes[node_id]
            label = node.label or "-"
            lines.append(
                "{}{} {} label={} children={}".format(
                    "  " * depth, node.level.name, node.id, label, len(node.children)
                )
            )
            for child in sorted(node.children):
                walk(child, depth + 1)

        walk(self.root_id, 0)
        return "\n".join(lines) + "\n"


def load_label_vocab() -> tuple[dict[str, list[str]], dict[str, str]]:
    """Area keyword sets and the area-type to room-function mapping."""
    payload = json.loads(
        resources.files("memnav.data").joinpath("room_labels.json").read_text("utf-8")
    )
    return payload["area_keywords"], payload["area_to_room"]


def combined_distance(a: TopoNode, b: TopoNode, cfg: HierarchyConfig) -> float:
    """Weighted sum of Euclidean separation and cosine dissimilarity."""
    spatial = float(np.linalg.norm(a.position - b.position))
    semantic = 1.0 - a.embedding.cosine(b.embedding)
    return cfg.spatial_weight * spatial + cfg.semantic_weight * semantic


def adaptive_threshold(theta1: float, observation_count: int) -> float:
    """Scale the base cluster threshold with observation volume: 1.5x above 20
    observations, 0.8x below 10, unchanged in between."""
    if observation_count < 0:
        raise ValueError("observation_count must be >= 0")
    if observation_count > 20:
        return 1.5 * theta1
    if observation_count < 10:
        return 0.8 * theta1
    return theta1


def _single_linkage_labels(condensed: np.ndarray, n: int, cutoff: float) -> np.ndarray:
    if n == 1:
        return np.array([1])
    tree = linkage(condensed, method="single")
    return fcluster(tree, t=cutoff, criterion="distance")


def _mean_embedding(embeddings: list[Embedding]) -> Embedding:
    total = np.zeros(embeddings[0].dim)
    for e in embeddings:
        total += e.values
    norm = float(np.linalg.norm(total))
    if norm < 1e-12:
        return embeddings[0]
    return Embedding(total / norm)


def _convex_hull_xy(points: np.ndarray) -> list[tuple[float, float]]:
    xy = points[:, :2]
    if len(xy) < 3:
        return [(float(x), float(y)) for x, y in xy]
    try:
        hull = ConvexHull(xy)
    except QhullError:  # collinear points
        return [(float(x), float(y)) for x, y in xy]
    return [(float(xy[i, 0]), float(xy[i, 1])) for i in hull.vertices]


def _area_type_for(members: list[TopoNode], vocab: dict[str, list[str]]) -> str:
    hits = {label: 0 for label in vocab}
    for node in members:
        tokens = set(tokenize(node.observation_desc))
        for label, keywords in vocab.items():
            hits[label] += sum(1 for k in keywords if k in tokens)
    best = max(hits.values())
    return min(label for label, count in hits.items() if count == best)


def build_l3_observations(topo_map: TopoMap) -> list[MemoryNode]:
    """One leaf memory node per topological node, in map order."""
    leaves = []
    for node in topo_map.nodes:
        leaves.append(
            MemoryNode(
                id=f"L3_{node.node_id}",
                level=Level.L3,
                summary_embedding=node.embedding,
                keywords=frozenset(tokenize(node.observation_desc)),
                latest_step=node.step_index,
                position=node.position.copy(),
                topo_node_id=node.node_id,
            )
        )
    return leaves


def build_l2_areas(
    l3_nodes: list[MemoryNode],
    source_nodes: list[TopoNode],
    cfg: HierarchyConfig,
    vocab: dict[str, list[str]] | None = None,
) -> list[MemoryNode]:
    """Cluster observations into areas with single linkage on the combined
    distance, cut at the adaptive threshold. Each cluster gets a functional
    label (most keyword hits; ties break lexicographically) and a convex-hull
    boundary of its member positions."""
    if not l3_nodes:
        raise EmptyInputError("no observations to cluster")
    if len(l3_nodes) != len(source_nodes):
        raise ValueError("one source node required per observation node")
    if vocab is None:
        vocab, _ = load_label_vocab()

    n = len(source_nodes)
    condensed = np.array(
        [
            combined_distance(source_nodes[i], source_nodes[j], cfg)
            for i in range(n)
            for j in range(i + 1, n)
        ]
    )
    cutoff = adaptive_threshold(cfg.theta1, n)
    labels = _single_linkage_labels(condensed, n, cutoff)

    clusters: dict[int, list[int]] = {}
    for idx, label in enumerate(labels):
        clusters.setdefault(int(label), []).append(idx)
    # deterministic ordering: by smallest member topo node id
    ordered = sorted(clusters.values(), key=lambda idxs: min(source_nodes[i].node_id for i in idxs))

    areas = []
    for k, member_idx in enumerate(ordered):
        members = [source_nodes[i] for i in member_idx]
        leaf_nodes = [l3_nodes[i] for i in member_idx]
        positions = np.array([m.position for m in members])
        area = MemoryNode(
            id=f"L2_{k}",
            level=Level.L2,
            children={leaf.id for leaf in leaf_nodes},
            summary_embedding=_mean_embedding([leaf.summary_embedding for leaf in leaf_nodes]),
            keywords=frozenset().union(*(leaf.keywords for leaf in leaf_nodes)),
            latest_step=max(leaf.latest_step for leaf in leaf_nodes),
            position=positions.mean(axis=0),
            area_type=_area_type_for(members, vocab),
            hull=_convex_hull_xy(positions),
        )
        for leaf in leaf_nodes:
            leaf.parents = {area.id}
        areas.append(area)
    return areas


def build_l1_rooms(
    l2_nodes: list[MemoryNode],
    cfg: HierarchyConfig,
    area_to_room: dict[str, str] | None = None,
) -> list[MemoryNode]:
    """Two-stage room formation: single-linkage spatial clustering of area
    centroids cut at theta2, then a partition of each spatial cluster by
    mapped room function."""
    if not l2_nodes:
        raise EmptyInputError("no areas to cluster")
    if area_to_room is None:
        _, area_to_room = load_label_vocab()

    n = len(l2_nodes)
    condensed = np.array(
        [
            float(np.linalg.norm(l2_nodes[i].position - l2_nodes[j].position))
            for i in range(n)
            for j in range(i + 1, n)
        ]
    )
    labels = _single_linkage_labels(condensed, n, cfg.theta2)

    spatial: dict[int, list[MemoryNode]] = {}
    for idx, label in enumerate(labels):
        spatial.setdefault(int(label), []).append(l2_nodes[idx])

    groups: list[tuple[str, list[MemoryNode]]] = []
    for members in spatial.values():
        by_function: dict[str, list[MemoryNode]] = {}
        for area in members:
            function = area_to_room.get(area.area_type or "", "generic_room")
            by_function.setdefault(function, []).append(area)
        groups.extend(by_function.items())
    groups.sort(key=lambda item: min(int(a.id.rsplit("_", 1)[1]) for a in item[1]))

    rooms = []
    for k, (function, members) in enumerate(groups):
        room = MemoryNode(
            id=f"L1_{k}",
            level=Level.L1,
            children={a.id for a in members},
            summary_embedding=_mean_embedding([a.summary_embedding for a in members]),
            keywords=frozenset().union(*(a.keywords for a in members)),
            latest_step=max(a.latest_step for a in members),
            position=np.array([a.position for a in members]).mean(axis=0),
            room_function=function,
        )
        for area in members:
            area.parents = {room.id}
        rooms.append(room)
    return rooms


def build_hierarchy(topo_map: TopoMap, cfg: HierarchyConfig) -> MemoryHierarchy:
    """Full bottom-up rebuild from the current map. Idempotent for an
    unchanged map: node ids derive from map content, not build order."""
    if len(topo_map) == 0:
        raise EmptyInputError("cannot build a hierarchy from an empty map")
    vocab, area_to_room = load_label_vocab()

    leaves = build_l3_observations(topo_map)
    areas = build_l2_areas(leaves, topo_map.nodes, cfg, vocab)
    rooms = build_l1_rooms(areas, cfg, area_to_room)

    root = MemoryNode(
        id=ROOT_ID,
        level=Level.L0,
        children={r.id for r in rooms},
        summary_embedding=_mean_embedding([r.summary_embedding for r in rooms]),
        keywords=frozenset().union(*(r.keywords for r in rooms)),
        latest_step=max(r.latest_step for r in rooms),
        position=np.array([r.position for r in rooms]).mean(axis=0),
    )
    for room in rooms:
        room.parents = {root.id}

    nodes = {n.id: n for n in [root, *rooms, *areas, *leaves]}
    return MemoryHierarchy(nodes)
