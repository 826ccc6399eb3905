"""Top-down scored beam search over the memory hierarchy.

Each node is scored by a weighted sum of four evidence components (semantic,
spatial, keyword, recency); the beam keeps the best nodes per level and the
result is the top-k observation-level nodes above the score floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import TaskSpec
from .hierarchy import Level, MemoryHierarchy, MemoryNode


@dataclass
class RetrievalConfig:
    alpha_sem: float = 0.45
    alpha_spa: float = 0.30
    alpha_key: float = 0.20
    alpha_time: float = 0.05
    beam_width: int = 5
    score_floor: float = 0.4
    top_k: int = 3
    spatial_scale: float = 5.0   # meters
    time_scale: float = 600.0    # steps

    def __post_init__(self):
        total = self.alpha_sem + self.alpha_spa + self.alpha_key + self.alpha_time
        if abs(total - 1.0) > 1e-12:
            raise ValueError("component weights must sum to 1.0")
        if self.beam_width < 1 or self.top_k < 1:
            raise ValueError("beam_width and top_k must be >= 1")


@dataclass(frozen=True)
class RetrievalEntry:
    node_id: str
    score: float
    position: tuple[float, float, float]
    latest_step: int
    keywords: frozenset[str] = field(default_factory=frozenset)
    label: str = ""


@dataclass(frozen=True)
class RetrievalResult:
    """Entries sorted by score descending (ties: id ascending); every score
    exceeds the configured floor."""

    entries: tuple[RetrievalEntry, ...]
    query_step: int

    def ids(self) -> list[str]:
        return [e.node_id for e in self.entries]

    @property
    def best(self) -> RetrievalEntry | None:
        return self.entries[0] if self.entries else None


def semantic_score(node: MemoryNode, task: TaskSpec) -> float:
    """Cosine similarity mapped onto [0, 1]."""
    return 0.5 * (1.0 + task.embedding.cosine(node.summary_embedding))


def spatial_score(node: MemoryNode, agent_position: np.ndarray, scale: float = 5.0) -> float:
    """exp(-distance / scale); 1 at zero distance."""
    distance = float(np.linalg.norm(np.asarray(agent_position, dtype=float) - node.position))
    return math.exp(-distance / scale)


def keyword_score(node: MemoryNode, task: TaskSpec) -> float:
    """|task keywords matched by the node| / |task keywords| (0 for empty tasks)."""
    if not task.keywords:
        return 0.0
    return len(task.keywords & node.keywords) / max(len(task.keywords), 1)


def time_score(node: MemoryNode, current_step: int, scale: float = 600.0) -> float:
    """exp(-age / scale) where age is steps since the node was last touched."""
    if current_step < node.latest_step:
        raise ValueError("current_step precedes the node's latest step")
    return math.exp(-abs(current_step - node.latest_step) / scale)


def node_score(
    node: MemoryNode,
    task: TaskSpec,
    agent_position: np.ndarray,
    current_step: int,
    cfg: RetrievalConfig,
) -> float:
    return (
        cfg.alpha_sem * semantic_score(node, task)
        + cfg.alpha_spa * spatial_score(node, agent_position, cfg.spatial_scale)
        + cfg.alpha_key * keyword_score(node, task)
        + cfg.alpha_time * time_score(node, current_step, cfg.time_scale)
    )


def _entry(node: MemoryNode, score: float) -> RetrievalEntry:
    x, y, z = node.position
    return RetrievalEntry(
        node_id=node.id,
        score=score,
        position=(float(x), float(y), float(z)),
        latest_step=node.latest_step,
        keywords=node.keywords,
        label=node.label,
    )


def retrieve(
    hierarchy: MemoryHierarchy,
    task: TaskSpec,
    agent_position: np.ndarray,
    current_step: int,
    cfg: RetrievalConfig,
) -> RetrievalResult:
    """Beam search from the root down to the observation level.

    At each level all children of the frontier are scored and the beam keeps
    the best `beam_width`. The result is the best `top_k` observation nodes
    with score strictly above `score_floor`; an empty result is valid.
    """
    frontier = [hierarchy.root]
    scored_leaves: list[tuple[float, MemoryNode]] = []
    for _ in (Level.L1, Level.L2, Level.L3):
        children: list[MemoryNode] = []
        for node in frontier:
            children.extend(hierarchy.children_of(node.id))
        if not children:
            break
        scored = [
            (node_score(child, task, agent_position, current_step, cfg), child)
            for child in children
        ]
        scored.sort(key=lambda pair: (-pair[0], pair[1].id))
        scored = scored[: cfg.beam_width]
        frontier = [node for _, node in scored]
        if frontier and frontier[0].level == Level.L3:
            scored_leaves = scored

    kept = [(s, n) for s, n in scored_leaves if s > cfg.score_floor][: cfg.top_k]
    return RetrievalResult(tuple(_entry(n, s) for s, n in kept), current_step)


def exhaustive_retrieve(
    hierarchy: MemoryHierarchy,
    task: TaskSpec,
    agent_position: np.ndarray,
    current_step: int,
    cfg: RetrievalConfig,
) -> RetrievalResult:
    """Score every observation node directly (no beam). Reference oracle for
    tests and a correctness baseline for small hierarchies."""
    scored = [
        (node_score(leaf, task, agent_position, current_step, cfg), leaf)
        for leaf in hierarchy.level_nodes(Level.L3)
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1].id))
    kept = [(s, n) for s, n in scored if s > cfg.score_floor][: cfg.top_k]
    return RetrievalResult(tuple(_entry(n, s) for s, n in kept), current_step)
