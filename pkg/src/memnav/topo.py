"""Incremental topological map: multimodal observation nodes plus
nearest-neighbor edges, grown under spatio-temporal sampling criteria."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Embedding, MemnavError, Pose


class EmptyMapError(MemnavError):
    pass


@dataclass(frozen=True, eq=False)
class TopoNode:
    """One observation record: pose, text description, target likelihood,
    semantic embedding, and the step it was captured at."""

    node_id: int
    pose: Pose
    observation_desc: str
    target_likelihood: float
    embedding: Embedding
    step_index: int

    def __post_init__(self):
        if not 0.0 <= self.target_likelihood <= 1.0:
            raise ValueError("target_likelihood must lie in [0, 1]")
        if self.node_id < 0 or self.step_index < 0:
            raise ValueError("node_id and step_index must be >= 0")

    @property
    def position(self) -> np.ndarray:
        return self.pose.position


@dataclass(frozen=True)
class Edge:
    """Undirected edge keyed (a < b), weighted by Euclidean length.

    `long_range` flags edges longer than the connection distance cap; they are
    still created so the graph stays connected.
    """

    a: int
    b: int
    length: float
    long_range: bool = False

    def __post_init__(self):
        if self.a >= self.b:
            raise ValueError("edge endpoints must satisfy a < b")


@dataclass
class MapConfig:
    s_update: int = 3          # steps between forced node additions
    delta_sample: float = 0.5  # meters; spatial criterion is strict >
    delta_connect: float = 1.0 # meters; beyond this, edges are long_range

    def __post_init__(self):
        if self.s_update <= 0 or self.delta_sample <= 0 or self.delta_connect <= 0:
            raise ValueError("map thresholds must be strictly positive")


class TopoMap:
    """Ordered node collection plus undirected nearest-neighbor edges.

    Single writer per instance; concurrent readers are fine between mutations.
    """

    def __init__(self):
        self.nodes: list[TopoNode] = []
        self.edges: list[Edge] = []
        self.last_node_step: int = -1
        self.last_node_position: np.ndarray | None = None
        self._ids: set[int] = set()

    def __len__(self) -> int:
        return len(self.nodes)

    def node_by_id(self, node_id: int) -> TopoNode:
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        raise KeyError(node_id)

    def nearest_node(self, position: np.ndarray) -> int:
        """Node id closest to `position` (Euclidean); ties break to the
        smallest id."""
        if not self.nodes:
            raise EmptyMapError("nearest_node on an empty map")
        position = np.asarray(position, dtype=float)
        best = min(
            self.nodes,
            key=lambda n: (float(np.dot(n.position - position, n.position - position)), n.node_id),
        )
        return best.node_id

    def maybe_add_node(self, candidate: TopoNode, cfg: MapConfig) -> bool:
        """Append `candidate` when a sampling criterion fires.

        Temporal: elapsed steps since the last node >= s_update (inclusive).
        Spatial: displacement from the last node > delta_sample (strict).
        The first node is always accepted. On append, the node is wired to the
        nearest existing node. Returns whether the node was appended.
        """
        if candidate.node_id in self._ids:
            raise ValueError(f"duplicate node id {candidate.node_id}")
        if self.nodes and candidate.step_index < self.last_node_step:
            raise ValueError("candidate step_index precedes the last node")

        if self.nodes:
            elapsed = candidate.step_index - self.last_node_step
            displacement = float(np.linalg.norm(candidate.position - self.last_node_position))
            if elapsed < cfg.s_update and displacement <= cfg.delta_sample:
                return False
            nearest = self.nearest_node(candidate.position)
            near_pos = self.node_by_id(nearest).position
            length = float(np.linalg.norm(candidate.position - near_pos))
            lo, hi = sorted((nearest, candidate.node_id))
            self.edges.append(Edge(lo, hi, length, long_range=length > cfg.delta_connect))

        self.nodes.append(candidate)
        self._ids.add(candidate.node_id)
        self.last_node_step = candidate.step_index
        self.last_node_position = candidate.position.copy()
        return True

    def is_connected(self) -> bool:
        if len(self.nodes) <= 1:
            return True
        adjacency: dict[int, list[int]] = {n.node_id: [] for n in self.nodes}
        for e in self.edges:
            adjacency[e.a].append(e.b)
            adjacency[e.b].append(e.a)
        seen = {self.nodes[0].node_id}
        stack = [self.nodes[0].node_id]
        while stack:
            for neighbor in adjacency[stack.pop()]:
                if neighbor not in seen:
                    seen.add(neighbor)
                    stack.append(neighbor)
        return len(seen) == len(self.nodes)

    def snapshot(self) -> str:
        """Line-delimited dump, one node or edge per line.

        Node fields: id, step, x, y, z, qw, qx, qy, qz, likelihood, description.
        Edge fields: a, b, length, long_range (0/1). Tab-separated; tabs and
        newlines in descriptions are replaced by spaces.
        """
        lines = ["topomap v1"]
        for n in self.nodes:
            desc = " ".join(n.observation_desc.split())
            x, y, z = n.position
            qw, qx, qy, qz = n.pose.quaternion
            lines.append(
                "node\t{}\t{}\t{!r}\t{!r}\t{!r}\t{!r}\t{!r}\t{!r}\t{!r}\t{!r}\t{}".format(
                    n.node_id, n.step_index, x, y, z, qw, qx, qy, qz,
                    n.target_likelihood, desc,
                )
            )
        for e in self.edges:
            lines.append(f"edge\t{e.a}\t{e.b}\t{e.length!r}\t{int(e.long_range)}")
        return "\n".join(lines) + "\n"
