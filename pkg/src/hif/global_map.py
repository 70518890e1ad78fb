"""Global pillar dictionary, scan integration and point classification."""
from __future__ import annotations

import enum
import math
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .bayes import fuse_pillar, new_pillar
from .core import (DataError, Frame, HeightInterval, HifConfig, Pillar, Point3,
                   ScanFrame, transform_to_world)
from .intervals import build_local_pillars
from .pillars import PillarKey, group_by_pillar, mix_hash_array, pillar_offset

MAGIC = b"HIFM"
FORMAT_VERSION = 1
# HifConfig fields echoed into the map header, in order; ``workers`` is a
# runtime knob and deliberately not part of the file
_CFG_FLOATS = ("origin_x", "origin_y", "dx", "dy", "alpha", "beta", "gap_threshold",
               "containment_tolerance", "static_threshold", "p_init", "clip_lo",
               "clip_hi", "compaction_epsilon", "min_range", "max_range")


class PointClass(enum.IntEnum):
    STATIC = 0
    DYNAMIC = 1


@dataclass
class ScanTiming:
    index: int
    n_points: int
    n_local: int
    n_matched: int
    n_inserted: int
    ms: float


def crop_range(scan: ScanFrame, cfg: HifConfig) -> ScanFrame:
    """Apply the optional min/max sensor-range ingest filters (sensor frame)."""
    if (cfg.min_range is None and cfg.max_range is None) or scan.frame is not Frame.SENSOR:
        return scan
    r = np.linalg.norm(scan.points, axis=1)
    keep = np.ones(len(r), dtype=bool)
    if cfg.min_range is not None:
        keep &= r >= cfg.min_range
    if cfg.max_range is not None:
        keep &= r <= cfg.max_range
    labels = None if scan.labels is None else scan.labels[keep]
    return ScanFrame(scan.index, scan.points[keep], scan.pose, labels, scan.frame, scan.dropped)


class GlobalHeightMap:
    """Pillar dictionary. Keys hash with the mixed pillar hash and compare by (m, n)."""

    def __init__(self, cfg: Optional[HifConfig] = None):
        self.cfg = cfg or HifConfig()
        self.table: dict[PillarKey, Pillar] = {}
        self.scan_count = 0
        self.last_index: Optional[int] = None

    def __len__(self):
        return len(self.table)

    def __contains__(self, key: PillarKey):
        return key in self.table

    def __getitem__(self, key: PillarKey) -> Pillar:
        return self.table[key]

    def get(self, m: int, n: int) -> Optional[Pillar]:
        return self.table.get(PillarKey.of(m, n))

    def n_intervals(self) -> int:
        return sum(len(p) for p in self.table.values())

    def integrate_scan(self, scan: ScanFrame) -> ScanTiming:
        """Fuse one scan into the map. Scan indices must strictly increase."""
        t0 = time.perf_counter()
        if self.last_index is not None and scan.index <= self.last_index:
            raise DataError(
                f"scan {scan.index} arrived after scan {self.last_index}; order must increase")
        world = transform_to_world(crop_range(scan, self.cfg))
        local = build_local_pillars(world, self.cfg)

        matched = [k for k in local if k in self.table]
        inserted = [k for k in local if k not in self.table]
        cfg = self.cfg
        if cfg.workers > 1 and len(matched) > 1:
            with ThreadPoolExecutor(cfg.workers) as pool:
                fused = list(pool.map(lambda k: fuse_pillar(local[k], self.table[k], cfg), matched))
        else:
            fused = [fuse_pillar(local[k], self.table[k], cfg) for k in matched]
        for k, pillar in zip(matched, fused):
            if pillar.intervals:
                self.table[k] = pillar
            else:
                # only possible with zero tolerance and degenerate intervals
                del self.table[k]
        for k in inserted:
            self.table[k] = new_pillar(local[k], cfg)

        self.scan_count += 1
        self.last_index = scan.index
        return ScanTiming(scan.index, len(world), len(local), len(matched), len(inserted),
                          (time.perf_counter() - t0) * 1000.0)

    def classify_point(self, point: Point3) -> PointClass:
        m, n = pillar_offset(point, self.cfg)
        pillar = self.table.get(PillarKey.of(m, n))
        if pillar is None:
            return PointClass.DYNAMIC
        eps, tau = self.cfg.containment_tolerance, self.cfg.static_threshold
        for iv in pillar.intervals:
            if iv.p >= tau and iv.b - eps <= point.z <= iv.t + eps:
                return PointClass.STATIC
        return PointClass.DYNAMIC

    def classify_cloud(self, points: Union[np.ndarray, Iterable[Point3]]) -> np.ndarray:
        """Vectorised :meth:`classify_point`; returns ``PointClass`` codes as int8."""
        if not isinstance(points, np.ndarray):
            points = np.array([(p.x, p.y, p.z) for p in points], dtype=np.float64)
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        out = np.full(len(points), PointClass.DYNAMIC, dtype=np.int8)
        if len(points) == 0:
            return out
        order, m, n, starts = group_by_pillar(points, self.cfg)
        z = points[order, 2]
        heads = starts[:-1]
        hashes = mix_hash_array(m[heads], n[heads])
        eps, tau = self.cfg.containment_tolerance, self.cfg.static_threshold
        static = np.zeros(len(points), dtype=bool)
        for i, (s, e) in enumerate(zip(heads, starts[1:])):
            pillar = self.table.get(PillarKey(int(m[s]), int(n[s]), int(hashes[i])))
            if pillar is None:
                continue
            keep = [iv for iv in pillar.intervals if iv.p >= tau]
            if not keep:
                continue
            lo = np.array([iv.b for iv in keep]) - eps
            hi = np.maximum.accumulate(np.array([iv.t for iv in keep]) + eps)
            zz = z[s:e]
            idx = np.searchsorted(lo, zz, side="right") - 1
            ok = idx >= 0
            ok[ok] = zz[ok] <= hi[idx[ok]]
            static[s:e] = ok
        out[order[static]] = PointClass.STATIC
        return out

    # -- serialization -------------------------------------------------------

    def to_bytes(self) -> bytes:
        cfg = self.cfg
        vals = [math.nan if getattr(cfg, k) is None else float(getattr(cfg, k))
                for k in _CFG_FLOATS]
        parts = [MAGIC, struct.pack("<I", FORMAT_VERSION),
                 struct.pack(f"<{len(vals)}d", *vals),
                 struct.pack("<B", int(cfg.lhp_enabled)),
                 struct.pack("<qqQ", self.scan_count,
                             -1 if self.last_index is None else self.last_index,
                             len(self.table))]
        for key in sorted(self.table):
            pillar = self.table[key]
            parts.append(struct.pack("<qqdI", key.m, key.n, pillar.p_empty, len(pillar)))
            flat = [v for iv in pillar.intervals for v in (iv.b, iv.t, iv.p)]
            parts.append(struct.pack(f"<{len(flat)}d", *flat))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "GlobalHeightMap":
        try:
            return cls._unpack(memoryview(data))
        except struct.error as exc:
            raise DataError(f"truncated map file ({len(data)} bytes): {exc}") from None

    @classmethod
    def _unpack(cls, view: memoryview) -> "GlobalHeightMap":
        data = view
        if bytes(view[:4]) != MAGIC:
            raise DataError("not a HIF map file (bad magic)")
        (version,) = struct.unpack_from("<I", view, 4)
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported map format version {version}")
        off = 8
        vals = struct.unpack_from(f"<{len(_CFG_FLOATS)}d", view, off)
        off += 8 * len(_CFG_FLOATS)
        (lhp,) = struct.unpack_from("<B", view, off)
        off += 1
        kw = {k: (None if math.isnan(v) else v) for k, v in zip(_CFG_FLOATS, vals)}
        cfg = HifConfig(**kw, lhp_enabled=bool(lhp))
        scan_count, last_index, n_pillars = struct.unpack_from("<qqQ", view, off)
        off += 24
        gmap = cls(cfg)
        gmap.scan_count = scan_count
        gmap.last_index = None if last_index < 0 else last_index
        for _ in range(n_pillars):
            m, n, p_empty, count = struct.unpack_from("<qqdI", view, off)
            off += struct.calcsize("<qqdI")
            flat = struct.unpack_from(f"<{3 * count}d", view, off)
            off += 24 * count
            ivs = tuple(HeightInterval(*flat[3 * i:3 * i + 3]) for i in range(count))
            gmap.table[PillarKey.of(m, n)] = Pillar(p_empty, ivs)
        if off != len(data):
            raise DataError(f"trailing bytes in map file ({len(data) - off})")
        return gmap

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GlobalHeightMap":
        return cls.from_bytes(Path(path).read_bytes())


assert {f.name for f in fields(HifConfig)} == set(_CFG_FLOATS) | {"lhp_enabled", "workers"}
