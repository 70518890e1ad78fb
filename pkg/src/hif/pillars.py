"""Pillar partitioning and hash-mixed pillar keys."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import HifConfig, Point3, ScanFrame

MASK64 = (1 << 64) - 1
GOLDEN64 = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def avalanche64(x: int) -> int:
    """64-bit multiply-xorshift finalizer applied to ``x`` (sign-extended)."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def avalanche64_array(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x).astype(np.int64).view(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def mix_hash(m: int, n: int) -> int:
    hm = avalanche64(m)
    hn = avalanche64(n)
    return hm ^ ((hn + GOLDEN64 + ((hm << 6) & MASK64) + (hm >> 2)) & MASK64)


def mix_hash_array(m: np.ndarray, n: np.ndarray) -> np.ndarray:
    hm = avalanche64_array(m)
    hn = avalanche64_array(n)
    with np.errstate(over="ignore"):
        return hm ^ (hn + np.uint64(GOLDEN64) + (hm << np.uint64(6)) + (hm >> np.uint64(2)))


@dataclass(frozen=True, slots=True)
class PillarKey:
    """Pillar address. The hash only accelerates lookup; equality is on (m, n)."""

    m: int
    n: int
    hash: int

    @classmethod
    def of(cls, m: int, n: int, hasher: Callable[[int, int], int] = mix_hash) -> "PillarKey":
        return cls(int(m), int(n), hasher(int(m), int(n)))

    def __eq__(self, other):
        if not isinstance(other, PillarKey):
            return NotImplemented
        return self.m == other.m and self.n == other.n

    def __hash__(self):
        return self.hash

    def __lt__(self, other: "PillarKey"):
        return (self.m, self.n) < (other.m, other.n)


def _floor_index(v: np.ndarray, origin: float, size: float) -> np.ndarray:
    idx = np.floor((v - origin) / size)
    # float rounding can push a point across a boundary; re-check the
    # left-closed / right-open membership directly
    idx = np.where(v < origin + idx * size, idx - 1, idx)
    idx = np.where(v >= origin + (idx + 1) * size, idx + 1, idx)
    return idx.astype(np.int64)


def pillar_offsets(xy: np.ndarray, cfg: HifConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised offsets for an ``(N, 2+)`` array of world coordinates."""
    xy = np.asarray(xy, dtype=np.float64)
    return (_floor_index(xy[:, 0], cfg.origin_x, cfg.dx),
            _floor_index(xy[:, 1], cfg.origin_y, cfg.dy))


def pillar_offset(point: Point3, cfg: HifConfig) -> tuple[int, int]:
    m, n = pillar_offsets(np.array([[point.x, point.y]]), cfg)
    return int(m[0]), int(n[0])


def in_pillar(x: float, y: float, m: int, n: int, cfg: HifConfig) -> bool:
    """The boundary predicate: left-closed, right-open in both axes."""
    return (cfg.origin_x + m * cfg.dx <= x < cfg.origin_x + (m + 1) * cfg.dx
            and cfg.origin_y + n * cfg.dy <= y < cfg.origin_y + (n + 1) * cfg.dy)


def group_by_pillar(points: np.ndarray, cfg: HifConfig):
    """Sort points by (m, n, z).

    Returns ``(order, m, n, starts)`` where ``order`` permutes the input,
    ``m``/``n`` are the sorted offsets and ``starts`` marks the first index of
    every pillar run (with a trailing ``len(points)`` sentinel).
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    m, n = pillar_offsets(points, cfg)
    order = np.lexsort((points[:, 2], n, m))
    m, n = m[order], n[order]
    if len(order) == 0:
        return order, m, n, np.array([0], dtype=np.int64)
    change = np.flatnonzero((m[1:] != m[:-1]) | (n[1:] != n[:-1])) + 1
    starts = np.concatenate(([0], change, [len(order)])).astype(np.int64)
    return order, m, n, starts


def assign_points(scan: ScanFrame, cfg: HifConfig) -> dict[PillarKey, np.ndarray]:
    """Bucket a world-frame scan's z values by pillar."""
    order, m, n, starts = group_by_pillar(scan.points, cfg)
    z = scan.points[order, 2]
    hashes = mix_hash_array(m[starts[:-1]], n[starts[:-1]])
    buckets = {}
    for i, (s, e) in enumerate(zip(starts[:-1], starts[1:])):
        key = PillarKey(int(m[s]), int(n[s]), int(hashes[i]))
        buckets[key] = z[s:e]
    return buckets
