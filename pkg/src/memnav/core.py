"""Shared domain vocabulary: poses, polar actions, embeddings, task specs.

Everything here is an immutable value type, safe to share across episode
workers without synchronization. Angles are radians internally; degrees only
appear at file-format and prompt boundaries.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

EMBED_DIM = 64

_QUAT_TOL = 1e-9
_EMBED_NORM_TOL = 1e-6
_TOKEN_RE = re.compile(r"[a-z0-9]+")


class MemnavError(Exception):
    """Base class for all errors raised by this package."""


class InvalidQuaternionError(MemnavError):
    pass


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens, in order of appearance."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True, eq=False)
class Pose:
    """Agent pose: 3-vector position (z fixed to 0) plus a unit quaternion
    (w, x, y, z) for orientation."""

    position: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        quat = np.asarray(self.quaternion, dtype=float)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise ValueError("position must be a finite 3-vector")
        if quat.shape != (4,):
            raise ValueError("quaternion must have 4 components (w, x, y, z)")
        if abs(float(np.linalg.norm(quat)) - 1.0) > _QUAT_TOL:
            raise InvalidQuaternionError("quaternion is not unit-norm")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "quaternion", quat)

    @classmethod
    def from_xy_yaw(cls, x: float, y: float, yaw: float) -> "Pose":
        return cls(np.array([x, y, 0.0]), yaw_to_quaternion(yaw))

    @property
    def yaw(self) -> float:
        return quaternion_yaw(self.quaternion)

    @property
    def xy(self) -> np.ndarray:
        return self.position[:2]


def yaw_to_quaternion(yaw: float) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation of `yaw` about the z axis."""
    half = 0.5 * yaw
    return np.array([math.cos(half), 0.0, 0.0, math.sin(half)])


def quaternion_yaw(quaternion: np.ndarray, tol: float = 1e-6) -> float:
    """Yaw in (-pi, pi] of the rotation about the vertical (z) axis.

    Raises InvalidQuaternionError when the input is not unit-norm within `tol`.
    """
    q = np.asarray(quaternion, dtype=float)
    if q.shape != (4,):
        raise InvalidQuaternionError("quaternion must have 4 components")
    if abs(float(np.linalg.norm(q)) - 1.0) > tol:
        raise InvalidQuaternionError("quaternion is not unit-norm")
    w, x, y, z = q
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return wrap_angle(yaw)


@dataclass(frozen=True)
class PolarAction:
    """A single agent action: move (radial distance, heading change) or stop.

    For moves, `r` is meters >= 0 and `theta` is the heading change in
    (-pi, pi] applied before translating. Stop carries no parameters.
    """

    kind: str  # "move" | "stop"
    r: float = 0.0
    theta: float = 0.0

    MOVE = "move"
    STOP = "stop"

    def __post_init__(self):
        if self.kind not in (self.MOVE, self.STOP):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind == self.MOVE:
            if not (self.r >= 0.0 and math.isfinite(self.r)):
                raise ValueError("move distance must be finite and >= 0")
            if not (-math.pi < self.theta <= math.pi):
                raise ValueError("heading change must lie in (-pi, pi]")
        elif self.r != 0.0 or self.theta != 0.0:
            raise ValueError("stop carries no parameters")

    @classmethod
    def move(cls, r: float, theta: float) -> "PolarAction":
        return cls(cls.MOVE, float(r), float(theta))

    @classmethod
    def stop(cls) -> "PolarAction":
        return cls(cls.STOP)

    @property
    def is_stop(self) -> bool:
        return self.kind == self.STOP

    def to_json(self) -> str:
        if self.is_stop:
            return json.dumps({"kind": self.kind})
        return json.dumps({"kind": self.kind, "r": self.r, "theta": self.theta})

    @classmethod
    def from_json(cls, text: str) -> "PolarAction":
        payload = json.loads(text)
        if payload["kind"] == cls.STOP:
            return cls.stop()
        return cls.move(payload["r"], payload["theta"])


@dataclass(frozen=True, eq=False)
class Embedding:
    """Unit-norm semantic vector of fixed dimension."""

    values: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.values, dtype=float)
        if vec.ndim != 1:
            raise ValueError("embedding must be a 1-D vector")
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > _EMBED_NORM_TOL:
            raise ValueError("embedding must be unit-norm (zero vector forbidden)")
        object.__setattr__(self, "values", vec)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def cosine(self, other: "Embedding") -> float:
        return float(np.clip(np.dot(self.values, other.values), -1.0, 1.0))


class HashedBagEmbedder:
    """Deterministic stand-in for a learned text encoder.

    Each token is hashed to a fixed pseudo-random direction; a text maps to the
    normalized sum of its token directions. Identical text therefore always
    yields a byte-identical vector, on any platform. Empty text maps to a
    reserved basis vector so that cosines stay defined.
    """

    def __init__(self, dim: int = EMBED_DIM):
        if dim < 2:
            raise ValueError("embedding dimension must be >= 2")
        self.dim = dim
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "big")
        vec = np.random.default_rng(seed).standard_normal(self.dim)
        vec /= np.linalg.norm(vec)
        self._token_cache[token] = vec
        return vec

    def __call__(self, text: str) -> Embedding:
        tokens = tokenize(text)
        if not tokens:
            reserved = np.zeros(self.dim)
            reserved[0] = 1.0
            return Embedding(reserved)
        total = np.zeros(self.dim)
        for token in tokens:
            total += self._token_vector(token)
        norm = float(np.linalg.norm(total))
        if norm < 1e-12:
            # Token directions cancelling exactly is not reachable with the
            # hash construction, but the zero vector must never escape.
            reserved = np.zeros(self.dim)
            reserved[0] = 1.0
            return Embedding(reserved)
        return Embedding(total / norm)


_DEFAULT_EMBEDDER = HashedBagEmbedder()


def embed_text(text: str, embedder: HashedBagEmbedder | None = None) -> Embedding:
    """Embed `text` with the configured provider (hashed bag-of-tokens by
    default). Pure: repeated calls return identical vectors."""
    provider = embedder if embedder is not None else _DEFAULT_EMBEDDER
    return provider(text)


@dataclass(frozen=True, eq=False)
class TaskSpec:
    """Navigation task: raw text, its lowercase keyword set, and an embedding."""

    raw_text: str
    keywords: frozenset[str]
    embedding: Embedding

    def __post_init__(self):
        if self.raw_text and not self.keywords:
            raise ValueError("keywords must be nonempty for nonempty task text")

    @classmethod
    def from_text(cls, text: str, embedder: HashedBagEmbedder | None = None) -> "TaskSpec":
        return cls(text, frozenset(tokenize(text)), embed_text(text, embedder))


@dataclass(frozen=True)
class AttributeDatabase:
    """Structured target knowledge: four attribute strings plus the location
    keyword set derived from `common_location`. `degraded` marks a failed or
    unknown provider lookup (all strings empty)."""

    general_description: str
    appearance_features: str
    structure_shape: str
    common_location: str
    location_keywords: frozenset[str] = field(default_factory=frozenset)
    degraded: bool = False
