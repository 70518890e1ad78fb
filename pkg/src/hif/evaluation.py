"""Point-level accuracy (SA / DA / AA) and runtime statistics."""
from __future__ import annotations

import csv
import io
import json
import math
import resource
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import GroundTruth
from .global_map import PointClass


@dataclass(frozen=True)
class AccuracyReport:
    sa: Optional[float]
    da: Optional[float]
    aa: Optional[float]
    retained_static: int = 0
    removed_static: int = 0
    removed_dynamic: int = 0
    retained_dynamic: int = 0
    excluded: int = 0

    @classmethod
    def from_counts(cls, retained_static: int, removed_static: int, removed_dynamic: int,
                    retained_dynamic: int, excluded: int = 0) -> "AccuracyReport":
        n_s = retained_static + removed_static
        n_d = removed_dynamic + retained_dynamic
        sa = 100.0 * retained_static / n_s if n_s else None
        da = 100.0 * removed_dynamic / n_d if n_d else None
        return cls(sa, da, associated_accuracy(sa, da), retained_static, removed_static,
                   removed_dynamic, retained_dynamic, excluded)


def associated_accuracy(sa: Optional[float], da: Optional[float]) -> Optional[float]:
    """Geometric mean of static and dynamic accuracy (percent)."""
    if sa is None or da is None:
        return None
    return math.sqrt(sa * da)


def score(predictions: Sequence[int], ground_truth: Sequence[int]) -> AccuracyReport:
    pred = np.asarray(predictions)
    gt = np.asarray(ground_truth)
    if pred.shape != gt.shape:
        raise ValueError(f"{len(pred)} predictions for {len(gt)} ground-truth labels")
    is_static = gt == GroundTruth.STATIC
    is_dynamic = gt == GroundTruth.DYNAMIC
    kept = pred == PointClass.STATIC
    return AccuracyReport.from_counts(
        retained_static=int(np.count_nonzero(is_static & kept)),
        removed_static=int(np.count_nonzero(is_static & ~kept)),
        removed_dynamic=int(np.count_nonzero(is_dynamic & ~kept)),
        retained_dynamic=int(np.count_nonzero(is_dynamic & kept)),
        excluded=int(np.count_nonzero(gt == GroundTruth.EXCLUDED)),
    )


@dataclass(frozen=True)
class RuntimeReport:
    mean_ms: float
    std_ms: float
    fps: float
    n_frames: int
    peak_memory_mb: Optional[float] = None


def peak_memory_mb() -> Optional[float]:
    try:
        rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    except (OSError, ValueError):
        return None
    # bytes on macOS, kilobytes elsewhere
    return rss / 2**20 if sys.platform == "darwin" else rss / 1024


def runtime_stats(per_scan_ms: Sequence[float], memory: bool = True) -> RuntimeReport:
    """Mean, population std and FPS of per-frame runtimes in milliseconds."""
    ms = np.asarray(per_scan_ms, dtype=np.float64)
    if ms.size == 0:
        raise ValueError("runtime_stats needs at least one timing")
    mean = float(ms.mean())
    return RuntimeReport(mean, float(ms.std()), 1000.0 / mean, int(ms.size),
                         peak_memory_mb() if memory else None)


REPORT_FIELDS = ("sa", "da", "aa", "retained_static", "removed_static", "removed_dynamic",
                 "retained_dynamic", "excluded", "mean_ms", "std_ms", "fps", "n_frames",
                 "peak_memory_mb")


def _fmt(key: str, value) -> Optional[str]:
    if value is None:
        return None
    if key in ("sa", "da", "aa", "fps", "peak_memory_mb"):
        return f"{value:.2f}"
    if key in ("mean_ms", "std_ms"):
        return f"{value:.3f}"
    return str(int(value))


def report_row(acc: Optional[AccuracyReport], rt: Optional[RuntimeReport]) -> dict:
    row = {}
    for key in REPORT_FIELDS:
        src = acc if key in AccuracyReport.__dataclass_fields__ else rt
        row[key] = _fmt(key, getattr(src, key) if src is not None else None)
    return row


def emit_report(acc: Optional[AccuracyReport], rt: Optional[RuntimeReport],
                format: str = "csv") -> str:
    """Serialise one report row. Absent values become empty cells (CSV) or null (JSON)."""
    row = report_row(acc, rt)
    if format == "json":
        obj = {k: (None if v is None else (int(v) if "." not in v else float(v)))
               for k, v in row.items()}
        return json.dumps(obj, indent=2) + "\n"
    if format != "csv":
        raise ValueError(f"unknown report format {format!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    writer.writerow(["" if row[k] is None else row[k] for k in REPORT_FIELDS])
    return buf.getvalue()
