"""Synthetic LiDAR scenes with exact labels, and a dense-grid reference filter.

Random numbers come from a counter-based generator so that fixtures can be
reproduced in any language: the ``i``-th 64-bit word of stream ``s`` under
seed ``k`` is ``avalanche64(key + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)``
with ``key = avalanche64(k) ^ avalanche64(s + 1)`` (the splitmix64 output
function). Normals use Box-Muller on pairs of words, uniforms the top 53 bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .bayes import bayes_filter
from .core import ConfigError, HifConfig, Pillar, RigidPose, ScanFrame
from .pillars import GOLDEN64, avalanche64, avalanche64_array

LABEL_GROUND = 40
LABEL_STRUCTURE = 50
LABEL_MOVING = 252


# -- portable random numbers -------------------------------------------------

def random_words(seed: int, stream: int, n: int) -> np.ndarray:
    key = avalanche64(seed) ^ avalanche64(stream + 1)
    i = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        ctr = np.uint64(key) + i * np.uint64(GOLDEN64)
    return avalanche64_array(ctr.view(np.int64))


def random_uniform(seed: int, stream: int, n: int) -> np.ndarray:
    """Uniform draws in [0, 1)."""
    return (random_words(seed, stream, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def random_normal(seed: int, stream: int, n: int) -> np.ndarray:
    w = random_words(seed, stream, 2 * n) >> np.uint64(11)
    u1 = (w[0::2].astype(np.float64) + 1.0) * 2.0**-53
    u2 = w[1::2].astype(np.float64) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


# -- scene description -------------------------------------------------------

def _vec3(v, name: str) -> tuple:
    try:
        out = tuple(float(x) for x in v)
    except TypeError:
        raise ConfigError(name, "expected a list of 3 numbers") from None
    if len(out) != 3:
        raise ConfigError(name, "expected a list of 3 numbers")
    return out


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; ``velocity`` in metres per scan (zero for static boxes)."""

    lo: tuple
    hi: tuple
    velocity: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec3(self.lo, "lo"))
        object.__setattr__(self, "hi", _vec3(self.hi, "hi"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ConfigError("box", f"empty box {self.lo} .. {self.hi}")

    def at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        shift = np.asarray(self.velocity) * k
        return np.asarray(self.lo) + shift, np.asarray(self.hi) + shift


@dataclass(frozen=True)
class SceneSpec:
    n_scans: int = 50
    sensor_start: tuple = (0.0, 0.0, 1.73)
    sensor_velocity: tuple = (0.5, 0.0, 0.0)
    n_azimuth: int = 720
    n_beams: int = 64
    elev_min_deg: float = -24.8
    elev_max_deg: float = 2.0
    max_range: float = 50.0
    range_jitter: float = 0.01
    # ground patch (xmin, xmax, ymin, ymax) on z = 0; None for no ground
    ground: Optional[tuple] = (-40.0, 70.0, -12.0, 12.0)
    static_boxes: tuple = ()
    moving_boxes: tuple = ()

    def validate(self) -> None:
        if self.n_scans < 1:
            raise ConfigError("n_scans", "need at least one scan")
        if self.ground is None and not self.static_boxes and not self.moving_boxes:
            raise ConfigError("ground", "scene has no geometry")
        if self.ground is not None:
            x0, x1, y0, y1 = self.ground
            if x0 >= x1 or y0 >= y1:
                raise ConfigError("ground", "empty ground patch")
        if self.n_azimuth < 1 or self.n_beams < 1:
            raise ConfigError("n_beams", "need at least one ray")
        if self.max_range <= 0:
            raise ConfigError("max_range", "must be > 0")
        if self.range_jitter < 0:
            raise ConfigError("range_jitter", "must be >= 0")

    def sensor_at(self, k: int) -> np.ndarray:
        return np.asarray(self.sensor_start, float) + k * np.asarray(self.sensor_velocity, float)


def default_scene() -> SceneSpec:
    """Street between two walls; one car-sized box overtakes the sensor at 1 m/scan."""
    return SceneSpec(
        static_boxes=(Box((-40.0, 8.0, 0.0), (70.0, 8.3, 3.0)),
                      Box((-40.0, -8.3, 0.0), (70.0, -8.0, 3.0))),
        moving_boxes=(Box((-12.0, 2.0, 0.0), (-8.0, 3.8, 1.6), (1.0, 0.0, 0.0)),),
    )


def occlusion_scene() -> SceneSpec:
    """Parked sensor; a slow box creeps between it and a wall, shadowing the
    ground and the wall base for many consecutive scans."""
    return SceneSpec(
        n_scans=50,
        sensor_velocity=(0.0, 0.0, 0.0),
        max_range=20.0,
        ground=(-20.0, 20.0, -6.0, 9.0),
        static_boxes=(Box((-20.0, 8.0, 0.0), (20.0, 8.3, 3.0)),),
        moving_boxes=(Box((-9.0, 2.0, 0.0), (-5.0, 3.8, 1.6), (0.2, 0.0, 0.0)),),
    )


def _scene_from_dict(doc: dict) -> SceneSpec:
    kw = {}
    known = {f for f in SceneSpec.__dataclass_fields__}
    for key, value in doc.items():
        if key == "static_box":
            kw["static_boxes"] = tuple(Box(**b) for b in value)
        elif key == "moving_box":
            kw["moving_boxes"] = tuple(Box(**b) for b in value)
        elif key in known and key not in ("static_boxes", "moving_boxes"):
            kw[key] = tuple(value) if isinstance(value, list) else value
        else:
            raise ConfigError(key, "unknown scene key")
    scene = SceneSpec(**kw)
    scene.validate()
    return scene


def load_scene(path: Union[str, Path]) -> SceneSpec:
    """Read a scene file (same key-value syntax as the run config).

    Boxes are given as ``[[static_box]]`` / ``[[moving_box]]`` tables with
    ``lo``, ``hi`` and (moving only) ``velocity``. The names ``default`` and
    ``occlusion`` select the built-in scenes.
    """
    from .dataset_io import tomllib

    if str(path) in BUILTIN_SCENES:
        return BUILTIN_SCENES[str(path)]()
    try:
        doc = tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("scene_file", f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("scene_file", str(exc)) from None
    try:
        return _scene_from_dict(doc)
    except TypeError as exc:
        raise ConfigError("scene_file", str(exc)) from None


BUILTIN_SCENES = {"default": default_scene, "occlusion": occlusion_scene}


# -- ray casting -------------------------------------------------------------

def ray_directions(scene: SceneSpec) -> np.ndarray:
    az = np.arange(scene.n_azimuth) * (2.0 * np.pi / scene.n_azimuth)
    if scene.n_beams == 1:
        el = np.array([math.radians(scene.elev_min_deg)])
    else:
        el = np.radians(np.linspace(scene.elev_min_deg, scene.elev_max_deg, scene.n_beams))
    A, E = np.meshgrid(az, el, indexing="ij")
    return np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)


def _hit_box(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Entry distance of every ray into the box (inf on a miss)."""
    safe = np.where(np.abs(dirs) < 1e-12, 1e-12, dirs)
    t1 = (lo - origin) / safe
    t2 = (hi - origin) / safe
    tmin = np.minimum(t1, t2).max(axis=1)
    tmax = np.maximum(t1, t2).min(axis=1)
    hit = (tmax >= tmin) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def cast_scan(scene: SceneSpec, k: int, dirs: Optional[np.ndarray] = None):
    """Nearest-hit ranges for scan ``k``: returns ``(range, label)`` per ray."""
    if dirs is None:
        dirs = ray_directions(scene)
    o = scene.sensor_at(k)
    best = np.full(len(dirs), np.inf)
    label = np.zeros(len(dirs), dtype=np.uint32)
    if scene.ground is not None:
        x0, x1, y0, y1 = scene.ground
        down = dirs[:, 2] < -1e-12
        t = np.full(len(dirs), np.inf)
        t[down] = -o[2] / dirs[down, 2]
        p = o + dirs * np.where(np.isfinite(t), t, 0.0)[:, None]
        inside = (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)
        t[~inside] = np.inf
        closer = t < best
        best[closer], label[closer] = t[closer], LABEL_GROUND
    for boxes, lab, moving in ((scene.static_boxes, LABEL_STRUCTURE, False),
                               (scene.moving_boxes, LABEL_MOVING, True)):
        for box in boxes:
            lo, hi = box.at(k) if moving else (np.asarray(box.lo), np.asarray(box.hi))
            t = _hit_box(o, dirs, lo, hi)
            closer = t < best
            best[closer], label[closer] = t[closer], lab
    return best, label


def gen_scene(scene: SceneSpec, seed: int = 0) -> list[ScanFrame]:
    """Sensor-frame scans with SemanticKITTI-style labels (moving boxes = 252)."""
    scene.validate()
    dirs = ray_directions(scene)
    frames = []
    for k in range(scene.n_scans):
        r, label = cast_scan(scene, k, dirs)
        hit = r <= scene.max_range
        r, label, d = r[hit], label[hit], dirs[hit]
        if scene.range_jitter > 0:
            r = r + scene.range_jitter * random_normal(seed, k, len(r))
        pts = d * r[:, None]
        pose = RigidPose(np.eye(3), scene.sensor_at(k))
        frames.append(ScanFrame(k, pts, pose, label))
    return frames


# -- dense reference filter --------------------------------------------------

@dataclass
class ObservationPattern:
    """Evidence for one pillar: the stored state before the first scan
    (``None`` for a fresh pillar) and, per scan, the observed ``(b, t)``
    clusters or ``None`` when the pillar is not hit."""

    initial: Optional[Pillar]
    scans: Sequence[Optional[Sequence[tuple[float, float]]]] = field(default_factory=list)


@dataclass
class GridState:
    z: np.ndarray           # cell centres
    p: np.ndarray           # probability per cell, NaN where absent
    p_empty: Optional[float]


def grid_oracle(pattern: ObservationPattern, cfg: HifConfig, z_lo: float, z_hi: float,
                cell: float = 1e-3) -> GridState:
    """Replay the per-pillar update on 1 mm cells, one Bayes step per cell.

    A cell is observed in a scan when its centre lies within
    ``containment_tolerance`` of an observed cluster. Unobserved cells below
    the lowest observed height keep their value when LHP is enabled.
    """
    n = int(round((z_hi - z_lo) / cell))
    z = z_lo + (np.arange(n) + 0.5) * cell
    p = np.full(n, np.nan)
    p_empty = None
    a, b = cfg.alpha, cfg.beta
    tol = cfg.containment_tolerance

    def bf(x, ps, pd):
        return np.clip(bayes_filter(x, ps, pd), cfg.clip_lo, cfg.clip_hi)

    if pattern.initial is not None:
        p_empty = pattern.initial.p_empty
        for iv in pattern.initial.intervals:
            p[(z >= iv.b) & (z < iv.t)] = iv.p

    for obs in pattern.scans:
        if not obs:
            continue
        seen = np.zeros(n, dtype=bool)
        for lo, hi in obs:
            seen |= (z >= lo - tol) & (z <= hi + tol)
        if p_empty is None:
            p[seen] = bf(cfg.p_init, a, b)
            p_empty = cfg.p_init
            continue
        p_empty = bayes_filter(p_empty, 1 - a, 1 - b)
        present = ~np.isnan(p)
        base = min(lo for lo, _ in obs)
        keep = present & ~seen & (z <= base) if cfg.lhp_enabled else np.zeros(n, dtype=bool)
        new = p.copy()
        new[present & seen] = bf(p[present & seen], a, b)
        new[~present & seen] = bf(p_empty, a, b)
        neg = present & ~seen & ~keep
        new[neg] = bf(p[neg], 1 - a, 1 - b)
        p = new
    return GridState(z, p, p_empty)
