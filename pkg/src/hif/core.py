"""Domain types shared by the HIF modules.

Points travel through the pipeline as ``(N, 3)`` float64 arrays wrapped in a
:class:`ScanFrame`; :class:`Point3` exists for the single-point APIs. All
probabilities are stored in direct probability form (not log-odds).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np


class HifError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(HifError, ValueError):
    """Invalid configuration value. ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class DataError(HifError):
    """Malformed or inconsistent input data (scan, pose, label files)."""


class InvariantError(HifError):
    """An internal structural invariant was violated."""


class GroundTruth(enum.IntEnum):
    STATIC = 0
    DYNAMIC = 1
    EXCLUDED = 2


class Frame(enum.Enum):
    SENSOR = "sensor"
    WORLD = "world"


@dataclass(frozen=True, slots=True)
class Point3:
    x: float
    y: float
    z: float
    frame: Frame = Frame.WORLD

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise DataError(f"non-finite point ({self.x}, {self.y}, {self.z})")


@dataclass(frozen=True, eq=False)
class RigidPose:
    """Sensor-to-world rigid transform ``p_world = R @ p + t``."""

    rotation: np.ndarray
    translation: np.ndarray
    tol: float = 1e-6

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise DataError("pose contains non-finite entries")
        residual = orthonormality_residual(R)
        if residual > self.tol or np.linalg.det(R) < 0:
            raise DataError(f"rotation is not a proper rotation (residual {residual:.3g})")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray, tol: float = 1e-6) -> "RigidPose":
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3], tol=tol)

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "RigidPose":
        Rt = self.rotation.T
        return RigidPose(Rt, -Rt @ self.translation, tol=self.tol)

    def __matmul__(self, other: "RigidPose") -> "RigidPose":
        return RigidPose(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation,
                         tol=max(self.tol, other.tol))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


def orthonormality_residual(R: np.ndarray) -> float:
    return float(np.max(np.abs(R @ R.T - np.eye(3))))


@dataclass(frozen=True, eq=False)
class ScanFrame:
    """One scan: ``points`` is ``(N, 3)`` float64 in ``frame`` coordinates.

    ``dropped`` counts points rejected at ingest or transform time because a
    coordinate was non-finite.
    """

    index: int
    points: np.ndarray
    pose: RigidPose = field(default_factory=RigidPose.identity)
    labels: Optional[np.ndarray] = None
    frame: Frame = Frame.SENSOR
    dropped: int = 0

    def __post_init__(self):
        if self.index < 0:
            raise DataError(f"scan index must be non-negative, got {self.index}")
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (len(pts),):
                raise DataError(
                    f"scan {self.index}: {len(labels)} labels for {len(pts)} points")
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.points)


def transform_to_world(scan: ScanFrame) -> ScanFrame:
    """Map a sensor-frame scan through its pose. Non-finite results are dropped."""
    if scan.frame is Frame.WORLD:
        return scan
    with np.errstate(over="ignore", invalid="ignore"):
        world = scan.pose.apply(scan.points)
    ok = np.all(np.isfinite(world), axis=1)
    labels = scan.labels
    if not ok.all():
        world = world[ok]
        labels = None if labels is None else labels[ok]
    return replace(scan, points=world, labels=labels, frame=Frame.WORLD,
                   dropped=scan.dropped + int((~ok).sum()))


@dataclass(frozen=True, slots=True)
class HeightInterval:
    b: float
    t: float
    p: float

    def __post_init__(self):
        if not self.b <= self.t:
            raise InvariantError(f"interval lower bound {self.b} above upper bound {self.t}")
        if not 0.0 <= self.p <= 1.0:
            raise InvariantError(f"interval probability {self.p} outside [0, 1]")

    @property
    def length(self) -> float:
        return self.t - self.b


@dataclass(frozen=True, slots=True)
class Pillar:
    """``p_empty`` plus sorted, interior-disjoint height intervals."""

    p_empty: float
    intervals: tuple[HeightInterval, ...] = ()

    def __post_init__(self):
        ivs = tuple(self.intervals)
        object.__setattr__(self, "intervals", ivs)
        check_disjoint(ivs)

    def __len__(self):
        return len(self.intervals)

    @classmethod
    def from_bounds(cls, bounds: Sequence[tuple[float, float]], p: float = 0.5,
                    p_empty: float = 0.5) -> "Pillar":
        return cls(p_empty, tuple(HeightInterval(float(b), float(t), p) for b, t in bounds))


def check_disjoint(intervals: Sequence[HeightInterval]) -> None:
    for a, b in zip(intervals, intervals[1:]):
        if a.b > b.b or a.t > b.b:
            raise InvariantError(
                f"intervals not sorted/disjoint: [{a.b}, {a.t}] then [{b.b}, {b.t}]")


@dataclass(frozen=True)
class HifConfig:
    origin_x: float = 0.0
    origin_y: float = 0.0
    dx: float = 1.0
    dy: float = 1.0
    alpha: float = 0.7
    beta: float = 0.3
    gap_threshold: float = 0.5
    containment_tolerance: float = 0.1
    static_threshold: float = 0.5
    p_init: float = 0.5
    clip_lo: float = 0.1
    clip_hi: float = 0.9
    lhp_enabled: bool = True
    compaction_epsilon: float = 0.01
    min_range: Optional[float] = None
    max_range: Optional[float] = None
    workers: int = 1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ConfigError(f.name, "must be finite")
        if not 0.5 < self.alpha < 1.0:
            raise ConfigError("alpha", f"must satisfy 0.5 < alpha < 1, got {self.alpha}")
        if not 0.0 < self.beta < 0.5:
            raise ConfigError("beta", f"must satisfy 0 < beta < 0.5, got {self.beta}")
        if self.dx <= 0:
            raise ConfigError("dx", f"must be > 0, got {self.dx}")
        if self.dy <= 0:
            raise ConfigError("dy", f"must be > 0, got {self.dy}")
        if self.gap_threshold <= 0:
            raise ConfigError("gap_threshold", f"must be > 0, got {self.gap_threshold}")
        if self.containment_tolerance < 0:
            raise ConfigError("containment_tolerance", "must be >= 0")
        if not 0.0 < self.static_threshold < 1.0:
            raise ConfigError("static_threshold", "must lie in (0, 1)")
        if not 0.0 < self.p_init < 1.0:
            raise ConfigError("p_init", "must lie in (0, 1)")
        if not 0.0 < self.clip_lo < self.clip_hi < 1.0:
            raise ConfigError("clip_lo", "need 0 < clip_lo < clip_hi < 1")
        if self.compaction_epsilon < 0:
            raise ConfigError("compaction_epsilon", "must be >= 0")
        for key in ("min_range", "max_range"):
            v = getattr(self, key)
            if v is not None and v < 0:
                raise ConfigError(key, "must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")

    def with_(self, **changes) -> "HifConfig":
        return replace(self, **changes)
