"""KITTI / SemanticKITTI readers and writers, and the run configuration file.

Formats:

* scans: ``<scan_dir>/<index:06d>.bin``, little-endian float32 ``x y z intensity``
* labels: ``<label_dir>/<index:06d>.label``, little-endian uint32, class in low 16 bits
* poses: one line per frame, 12 floats (row-major 3x4)
* calib: lines ``Key: v1 ... v12``; only ``Tr`` is used
* config: flat ``key = value`` lines (TOML syntax)
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from .core import (ConfigError, DataError, GroundTruth, HifConfig, RigidPose, ScanFrame,
                   orthonormality_residual)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PathLike = Union[str, Path]

DYNAMIC_CLASSES = range(252, 260)
EXCLUDED_CLASSES = (0, 1)
POSE_TOL = 1e-4


def _read_bin_raw(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise DataError(f"{path}: truncated point record at byte offset {len(raw) - len(raw) % 16}")
    return np.frombuffer(raw, dtype="<f4").reshape(-1, 4)[:, :3].astype(np.float64)


def read_scan_bin(path: PathLike, stats: Optional[dict] = None) -> np.ndarray:
    """Read a velodyne ``.bin`` scan as an ``(N, 3)`` float64 array.

    Intensity is discarded; points with non-finite coordinates are dropped and
    counted in ``stats["dropped"]`` when a dict is given.
    """
    pts = _read_bin_raw(path)
    ok = np.all(np.isfinite(pts), axis=1)
    if stats is not None:
        stats["dropped"] = stats.get("dropped", 0) + int((~ok).sum())
    return pts[ok] if not ok.all() else pts


def write_scan_bin(path: PathLike, points: np.ndarray, intensity: Optional[np.ndarray] = None) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rec = np.zeros((len(pts), 4), dtype="<f4")
    rec[:, :3] = pts
    if intensity is not None:
        rec[:, 3] = intensity
    Path(path).write_bytes(rec.tobytes())


def _parse_row12(text: str, where: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split()]
    except ValueError:
        raise DataError(f"{where}: non-numeric value") from None
    if len(vals) != 12:
        raise DataError(f"{where}: expected 12 numbers, got {len(vals)}")
    T = np.eye(4)
    T[:3, :] = np.array(vals).reshape(3, 4)
    return T


def read_calib(calib_file: PathLike) -> np.ndarray:
    """The 4x4 ``Tr`` (LiDAR to camera) matrix from a KITTI ``calib.txt``."""
    for lineno, line in enumerate(Path(calib_file).read_text().splitlines(), 1):
        key, _, rest = line.partition(":")
        if key.strip() == "Tr":
            return _parse_row12(rest, f"{calib_file}:{lineno}")
    raise DataError(f"{calib_file}: no 'Tr:' line")


def _to_pose(T: np.ndarray, where: str) -> RigidPose:
    R = T[:3, :3]
    residual = orthonormality_residual(R)
    if residual > POSE_TOL or np.linalg.det(R) <= 0:
        raise DataError(f"{where}: rotation not rigid (orthonormality residual {residual:.3g})")
    # project onto SO(3) so the text rounding does not leak into the map
    U, _, Vt = np.linalg.svd(R)
    return RigidPose(U @ Vt, T[:3, 3])


def read_poses(pose_file: PathLike, calib_file: Optional[PathLike] = None) -> list[RigidPose]:
    """One LiDAR-to-world pose per line: ``inv(Tr) @ P @ Tr`` (identity ``Tr`` without calib)."""
    Tr = read_calib(calib_file) if calib_file is not None else np.eye(4)
    Tr_inv = np.linalg.inv(Tr)
    poses = []
    lines = Path(pose_file).read_text().splitlines()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        where = f"{pose_file}:{lineno}"
        poses.append(_to_pose(Tr_inv @ _parse_row12(line, where) @ Tr, where))
    return poses


def write_poses(pose_file: PathLike, poses: list[RigidPose]) -> None:
    lines = [" ".join(repr(float(v)) for v in p.matrix[:3, :].ravel()) for p in poses]
    Path(pose_file).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_labels(path: PathLike, n_points: Optional[int] = None) -> np.ndarray:
    """Raw uint32 SemanticKITTI labels; checked against the scan's point count if given."""
    raw = Path(path).read_bytes()
    if len(raw) % 4:
        raise DataError(f"{path}: length {len(raw)} is not a multiple of 4")
    labels = np.frombuffer(raw, dtype="<u4").astype(np.uint32)
    if n_points is not None and len(labels) != n_points:
        raise DataError(f"{path}: {len(labels)} labels but the scan has {n_points} points")
    return labels


def write_labels(path: PathLike, labels: np.ndarray) -> None:
    Path(path).write_bytes(np.asarray(labels, dtype="<u4").tobytes())


def ground_truth(labels: np.ndarray) -> np.ndarray:
    """Map raw labels to :class:`GroundTruth` codes (int8)."""
    sem = np.asarray(labels, dtype=np.uint32) & 0xFFFF
    gt = np.full(sem.shape, GroundTruth.STATIC, dtype=np.int8)
    gt[(sem >= DYNAMIC_CLASSES.start) & (sem < DYNAMIC_CLASSES.stop)] = GroundTruth.DYNAMIC
    gt[np.isin(sem, EXCLUDED_CLASSES)] = GroundTruth.EXCLUDED
    return gt


@dataclass(frozen=True)
class SequenceSpec:
    scan_dir: Path
    pose_file: Path
    calib_file: Optional[Path] = None
    label_dir: Optional[Path] = None
    frame_start: int = 0
    frame_end: Optional[int] = None

    def validate(self) -> None:
        if self.frame_end is not None and self.frame_start > self.frame_end:
            raise ConfigError("frame_start", f"{self.frame_start} > frame_end {self.frame_end}")
        for key in ("scan_dir", "pose_file", "calib_file", "label_dir"):
            p = getattr(self, key)
            if p is not None and not p.exists():
                raise DataError(f"{key}: {p} does not exist")

    def scan_path(self, i: int) -> Path:
        return self.scan_dir / f"{i:06d}.bin"

    def label_path(self, i: int) -> Path:
        return self.label_dir / f"{i:06d}.label"


def iter_frames(seq: SequenceSpec, with_labels: bool = True) -> Iterator[ScanFrame]:
    """Yield sensor-frame scans of the configured range in index order."""
    seq.validate()
    poses = read_poses(seq.pose_file, seq.calib_file)
    end = seq.frame_end if seq.frame_end is not None else len(poses) - 1
    if end >= len(poses):
        raise DataError(f"{seq.pose_file}: {len(poses)} poses, frame {end} requested")
    for i in range(seq.frame_start, end + 1):
        path = seq.scan_path(i)
        if not path.exists():
            raise DataError(f"missing scan {path}")
        pts = _read_bin_raw(path)
        labels = None
        if with_labels and seq.label_dir is not None:
            labels = read_labels(seq.label_path(i), n_points=len(pts))
        ok = np.all(np.isfinite(pts), axis=1)
        if not ok.all():
            pts = pts[ok]
            labels = None if labels is None else labels[ok]
        yield ScanFrame(i, pts, poses[i], labels, dropped=int((~ok).sum()))


# -- configuration -----------------------------------------------------------

_HIF_KEYS = {f.name: f for f in fields(HifConfig)}
_SEQ_KEYS = ("scan_dir", "pose_file", "calib_file", "label_dir", "frame_start", "frame_end")
_RUN_KEYS = ("scene_file", "seed")
_SECTIONS = {"hif": set(_HIF_KEYS), "sequence": set(_SEQ_KEYS) | set(_RUN_KEYS)}


@dataclass(frozen=True)
class RunConfig:
    hif: HifConfig
    sequence: Optional[SequenceSpec] = None
    scene_file: Union[Path, str, None] = None   # path, or a built-in scene name
    seed: int = 0


def _check_type(key: str, value, kind) -> None:
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(key, f"expected {kind.__name__}, got {value!r}")


def parse_config(text: str, base_dir: Path = Path(".")) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<syntax>", str(exc)) from None
    flat = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in _SECTIONS:
                raise ConfigError(key, "unknown section")
            for sub, v in value.items():
                if sub not in _SECTIONS[key]:
                    raise ConfigError(f"{key}.{sub}", "unknown key")
                flat[sub] = v
        else:
            flat[key] = value

    hif_kw = {}
    for key, value in flat.items():
        if key in _HIF_KEYS:
            kind = {"lhp_enabled": bool, "workers": int}.get(key, float)
            _check_type(key, value, kind)
            hif_kw[key] = float(value) if kind is float else value
        elif key in ("frame_start", "frame_end", "seed"):
            _check_type(key, value, int)
        elif key in _SEQ_KEYS or key == "scene_file":
            _check_type(key, value, str)
        else:
            raise ConfigError(key, "unknown key")
    hif = HifConfig(**hif_kw)

    def path(key):
        return None if key not in flat else (base_dir / flat[key])

    seq = None
    if "scan_dir" in flat or "pose_file" in flat:
        for key in ("scan_dir", "pose_file"):
            if key not in flat:
                raise ConfigError(key, "required when a sequence is configured")
        seq = SequenceSpec(path("scan_dir"), path("pose_file"), path("calib_file"),
                           path("label_dir"), flat.get("frame_start", 0), flat.get("frame_end"))
        if seq.frame_end is not None and seq.frame_start > seq.frame_end:
            raise ConfigError("frame_start", f"{seq.frame_start} > frame_end {seq.frame_end}")
    elif "label_dir" in flat or "calib_file" in flat:
        raise ConfigError("scan_dir", "required when a sequence is configured")
    scene = flat.get("scene_file")
    if scene is not None and scene not in ("default", "occlusion"):
        scene = path("scene_file")
    return RunConfig(hif, seq, scene, flat.get("seed", 0))


def load_config(path: PathLike) -> RunConfig:
    """Read a run configuration. Relative paths resolve against the file's directory."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)
