"""Ingest -> integrate -> classify, as a library call."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

import numpy as np

from .core import ConfigError, DataError, HifConfig, ScanFrame, transform_to_world
from .dataset_io import RunConfig, ground_truth, iter_frames
from .evaluation import AccuracyReport, score
from .global_map import GlobalHeightMap, ScanTiming, crop_range
from .synthetic import gen_scene, load_scene


@dataclass
class PipelineResult:
    map: GlobalHeightMap
    timings: list[ScanTiming]
    points: np.ndarray                  # accumulated world-frame points
    labels: Optional[np.ndarray]        # raw labels, aligned with ``points``
    predictions: np.ndarray             # PointClass codes
    dropped: int = 0
    frame_sizes: list[int] = field(default_factory=list)

    @property
    def static_points(self) -> np.ndarray:
        return self.points[self.predictions == 0]

    def accuracy(self) -> AccuracyReport:
        if self.labels is None:
            raise DataError("no ground-truth labels available for evaluation")
        return score(self.predictions, ground_truth(self.labels))


def frames_for(run: RunConfig, seed: Optional[int] = None) -> Iterator[ScanFrame]:
    if run.sequence is not None:
        return iter_frames(run.sequence)
    if run.scene_file is not None:
        scene = load_scene(run.scene_file)
        return iter(gen_scene(scene, run.seed if seed is None else seed))
    raise ConfigError("scan_dir", "config names neither a sequence nor a scene_file")


def run_frames(frames: Iterable[ScanFrame], cfg: HifConfig, online: bool = False) -> PipelineResult:
    """Integrate every frame, then classify all accumulated points.

    With ``online=True`` each scan is instead classified against the map right
    after it has been integrated.
    """
    gmap = GlobalHeightMap(cfg)
    timings, chunks, label_chunks, online_pred = [], [], [], []
    labelled = True
    dropped = 0
    for scan in frames:
        world = transform_to_world(crop_range(scan, cfg))
        timings.append(gmap.integrate_scan(world))
        dropped += world.dropped
        chunks.append(world.points)
        labelled = labelled and world.labels is not None
        label_chunks.append(world.labels)
        if online:
            online_pred.append(gmap.classify_cloud(world.points))
    points = np.concatenate(chunks) if chunks else np.zeros((0, 3))
    labels = None
    if labelled and label_chunks:
        labels = np.concatenate(label_chunks)
    if online:
        pred = np.concatenate(online_pred) if online_pred else np.zeros(0, np.int8)
    else:
        pred = gmap.classify_cloud(points)
    return PipelineResult(gmap, timings, points, labels, pred, dropped,
                          [len(c) for c in chunks])


def run(run_cfg: RunConfig, seed: Optional[int] = None, lhp: Optional[bool] = None,
        online: bool = False) -> PipelineResult:
    cfg = run_cfg.hif if lhp is None else replace(run_cfg.hif, lhp_enabled=lhp)
    return run_frames(frames_for(run_cfg, seed), cfg, online=online)
