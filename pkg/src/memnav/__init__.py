"""Memory-oriented object navigation in a deterministic 2D simulator.

Core pieces: an incremental topological map, a 4-level semantic-spatial memory
with scored beam-search retrieval, geometric action proposal with stuck
recovery, exploration-efficiency metrics (SR / SPL / AORI), and a pluggable
decision layer (scripted policy or an external decider over HTTP).
"""

from .config import RunConfig
from .core import Embedding, PolarAction, Pose, TaskSpec, embed_text
from .hierarchy import HierarchyConfig, MemoryHierarchy, build_hierarchy
from .metrics import AoriAccumulator, AoriConfig, EpisodeOutcome, discrete_steps, spl, success_rate
from .retrieval import RetrievalConfig, retrieve
from .runner import run_batch, run_episode
from .scenegen import gen_scenes, generate_scene
from .sim import Environment, Scene, load_scene, save_scene
from .topo import MapConfig, TopoMap, TopoNode

__all__ = [
    "AoriAccumulator",
    "AoriConfig",
    "Embedding",
    "Environment",
    "EpisodeOutcome",
    "HierarchyConfig",
    "MapConfig",
    "MemoryHierarchy",
    "PolarAction",
    "Pose",
    "RetrievalConfig",
    "RunConfig",
    "Scene",
    "TaskSpec",
    "TopoMap",
    "TopoNode",
    "build_hierarchy",
    "discrete_steps",
    "embed_text",
    "gen_scenes",
    "generate_scene",
    "load_scene",
    "retrieve",
    "run_batch",
    "run_episode",
    "save_scene",
    "spl",
    "success_rate",
]

__version__ = "0.1.0"
