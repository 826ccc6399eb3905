"""Run configuration: every module's knobs plus episode wiring, with a strict,
lossless JSON file form."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import MemnavError
from .hierarchy import HierarchyConfig
from .metrics import AoriConfig
from .proposer import ProposerConfig
from .recovery import StuckConfig
from .retrieval import RetrievalConfig
from .sim import SimConfig
from .topo import MapConfig

DECIDERS = ("scripted", "random", "external")


class ConfigError(MemnavError):
    pass


@dataclass
class RunConfig:
    scenes: list[str] = field(default_factory=list)
    seed: int = 0
    max_actions: int = 40
    decider: str = "scripted"
    external_url: str = ""
    external_timeout: float = 5.0
    external_retries: int = 1
    output_dir: str = "runs"
    workers: int = 1
    # Desk-scale observation disk for coverage accounting; the derived
    # (map/voxel) radius is far too wide to discriminate policies in
    # room-sized scenes.
    vision_radius: float = 0.3
    precision_range: float = 1.0   # meters to a visible target that arms fine stepping
    precision_gamma: float = 0.1
    topo: MapConfig = field(default_factory=MapConfig)
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    proposer: ProposerConfig = field(default_factory=ProposerConfig)
    stuck: StuckConfig = field(default_factory=StuckConfig)
    aori: AoriConfig = field(default_factory=AoriConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.decider not in DECIDERS:
            raise ConfigError(f"decider must be one of {DECIDERS}")
        if self.decider == "external" and not self.external_url:
            raise ConfigError("external decider requires external_url")
        if self.max_actions < 1 or self.workers < 1:
            raise ConfigError("max_actions and workers must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        return cls(**_build_kwargs(cls, payload, context="run config"))

    def merged(self, overrides: dict) -> "RunConfig":
        """New config with `overrides` (possibly nested, possibly partial)
        applied on top of this one."""
        base = self.to_dict()
        _deep_update(base, overrides, context="run config")
        return RunConfig.from_dict(base)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8")

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            payload = json.loads(Path(path).read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        cfg = cls.from_dict(payload)
        cfg.require_paths()
        return cfg

    def require_paths(self) -> None:
        for scene in self.scenes:
            if not Path(scene).exists():
                raise ConfigError(f"scene path does not exist: {scene}")


_NESTED = {
    "topo": MapConfig,
    "hierarchy": HierarchyConfig,
    "retrieval": RetrievalConfig,
    "proposer": ProposerConfig,
    "stuck": StuckConfig,
    "aori": AoriConfig,
    "sim": SimConfig,
}


def _build_kwargs(cls, payload: dict, context: str) -> dict:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError(f"{context}: unknown field(s) {unknown}")
    kwargs = {}
    for name, value in payload.items():
        nested = _NESTED.get(name)
        if nested is not None and cls is RunConfig:
            if not isinstance(value, dict):
                raise ConfigError(f"{context}: {name} must be an object")
            kwargs[name] = nested(**_build_kwargs(nested, value, context=name))
        else:
            kwargs[name] = value
    return kwargs


def _deep_update(base: dict, overrides: dict, context: str) -> None:
    for key, value in overrides.items():
        if key not in base:
            raise ConfigError(f"{context}: unknown field(s) ['{key}']")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _deep_update(base[key], value, context=key)
        else:
            base[key] = value
