"""hif command line: run, eval, bench, ablate, synth.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import logging
import shutil
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import pipeline
from .core import ConfigError, DataError, HifError, InvariantError
from .dataset_io import RunConfig, load_config, write_labels, write_poses, write_scan_bin
from .evaluation import REPORT_FIELDS, emit_report, report_row, runtime_stats
from .synthetic import gen_scene, load_scene

log = logging.getLogger("hif")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Staging:
    """Write outputs into a scratch directory and move them into place only on success."""

    def __init__(self, out: Path):
        self.out = out

    def __enter__(self) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".hif-", dir=self.out))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                for f in sorted(self.tmp.iterdir()):
                    target = self.out / f.name
                    if target.is_dir():
                        shutil.rmtree(target)
                    f.replace(target)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _load(args) -> RunConfig:
    run = load_config(args.config)
    hif = run.hif
    if getattr(args, "no_lhp", False):
        hif = replace(hif, lhp_enabled=False)
    if getattr(args, "workers", None):
        hif = replace(hif, workers=args.workers)
    seed = run.seed if args.seed is None else args.seed
    return replace(run, hif=hif, seed=seed)


def _write_timing(path: Path, result) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "points", "local_pillars", "matched", "inserted", "ms"])
        for t in result.timings:
            w.writerow([t.index, t.n_points, t.n_local, t.n_matched, t.n_inserted, f"{t.ms:.3f}"])


def _write_run_outputs(tmp: Path, result) -> None:
    write_scan_bin(tmp / "cleaned.bin", result.static_points)
    result.map.save(tmp / "map.hif")
    _write_timing(tmp / "timing.csv", result)


def _summary(result, rt) -> str:
    n = len(result.points)
    kept = int((result.predictions == 0).sum())
    return (f"frames {rt.n_frames}  pillars {len(result.map)}  intervals {result.map.n_intervals()}\n"
            f"points {n}  kept {kept}  removed {n - kept}\n"
            f"runtime mean {rt.mean_ms:.3f} ms  std {rt.std_ms:.3f} ms  fps {rt.fps:.2f}")


def cmd_run(args) -> int:
    run = _load(args)
    with _Staging(Path(args.out)) as tmp:
        result = pipeline.run(run, online=args.online)
        if not result.timings:
            raise DataError("no frames in the configured range")
        _write_run_outputs(tmp, result)
        rt = runtime_stats([t.ms for t in result.timings])
        (tmp / "runtime.csv").write_text(emit_report(None, rt, "csv"))
    print(_summary(result, rt))
    return EXIT_OK


def cmd_eval(args) -> int:
    run = _load(args)
    if run.sequence is not None and run.sequence.label_dir is None:
        raise ConfigError("label_dir", "evaluation needs ground-truth labels")
    with _Staging(Path(args.out)) as tmp:
        result = pipeline.run(run, online=args.online)
        if not result.timings:
            raise DataError("no frames in the configured range")
        acc = result.accuracy()
        rt = runtime_stats([t.ms for t in result.timings])
        _write_run_outputs(tmp, result)
        (tmp / "accuracy.csv").write_text(emit_report(acc, rt, "csv"))
        (tmp / "accuracy.json").write_text(emit_report(acc, rt, "json"))
    print(_summary(result, rt))
    print(emit_report(acc, rt, args.format), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    run = _load(args)
    if run.sequence is not None and run.sequence.label_dir is None:
        raise ConfigError("label_dir", "ablation needs ground-truth labels")
    rows = []
    for lhp in (False, True):
        result = pipeline.run(run, lhp=lhp)
        acc = result.accuracy()
        rows.append({"lhp": "on" if lhp else "off", **report_row(acc, None)})
    with _Staging(Path(args.out)) as tmp:
        with open(tmp / "ablation.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, ["lhp", "sa", "da", "aa"], extrasaction="ignore",
                               lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    for r in rows:
        print(f"LHP {r['lhp']:>3}  SA {r['sa']}  DA {r['da']}  AA {r['aa']}")
    return EXIT_OK


def bench(run: RunConfig, reps: int, warmup: int = 1):
    """Repeat the integration loop; returns per-repetition reports and the pooled one."""
    if reps < 1:
        raise ConfigError("reps", "repetitions must be >= 1")
    frames = list(pipeline.frames_for(run))
    per_rep, pooled = [], []
    for i in range(warmup + reps):
        result = pipeline.run_frames(frames, run.hif)
        ms = [t.ms for t in result.timings]
        if i >= warmup:
            per_rep.append(runtime_stats(ms))
            pooled.extend(ms)
    return per_rep, runtime_stats(pooled)


def cmd_bench(args) -> int:
    run = _load(args)
    if args.reps < 1:
        raise ConfigError("reps", "repetitions must be >= 1")
    per_rep, pooled = bench(run, args.reps, args.warmup)
    lines = ["repetition," + ",".join(REPORT_FIELDS[8:])]
    for i, rt in enumerate(per_rep):
        row = report_row(None, rt)
        lines.append(f"{i}," + ",".join(row[k] or "" for k in REPORT_FIELDS[8:]))
    row = report_row(None, pooled)
    lines.append("pooled," + ",".join(row[k] or "" for k in REPORT_FIELDS[8:]))
    text = "\n".join(lines) + "\n"
    if args.out:
        with _Staging(Path(args.out)) as tmp:
            (tmp / "bench.csv").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_synth(args) -> int:
    """Write a synthetic scene as a KITTI-style sequence plus a ready-to-run config."""
    scene = load_scene(args.scene)
    frames = gen_scene(scene, args.seed or 0)
    with _Staging(Path(args.out)) as tmp:
        (tmp / "velodyne").mkdir()
        (tmp / "labels").mkdir()
        for f in frames:
            write_scan_bin(tmp / "velodyne" / f"{f.index:06d}.bin", f.points)
            write_labels(tmp / "labels" / f"{f.index:06d}.label", f.labels)
        write_poses(tmp / "poses.txt", [f.pose for f in frames])
        (tmp / "config.toml").write_text(
            'scan_dir = "velodyne"\npose_file = "poses.txt"\nlabel_dir = "labels"\n'
            f"frame_start = 0\nframe_end = {len(frames) - 1}\n")
    print(f"wrote {len(frames)} frames to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hif", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_required=True):
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=out_required, type=Path)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--no-lhp", action="store_true", help="disable low-height preservation")
        p.add_argument("--workers", type=int, default=None)
        return p

    p = common(sub.add_parser("run", help="clean a sequence"))
    p.add_argument("--online", action="store_true", help="classify each scan as it arrives")
    p.set_defaults(func=cmd_run)

    p = common(sub.add_parser("eval", help="clean and score against labels"))
    p.add_argument("--online", action="store_true")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("ablate", help="score with and without LHP"))
    p.set_defaults(func=cmd_ablate)

    p = common(sub.add_parser("bench", help="runtime statistics"), out_required=False)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a synthetic scene to disk")
    p.add_argument("--scene", required=True, help="scene file, or 'default' / 'occlusion'")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"hif: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"hif: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantError, HifError) as exc:
        print(f"hif: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    log.debug("%s finished in %.2fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
