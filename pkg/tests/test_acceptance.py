"""Acceptance criteria 1-8. Each test records one PASS/FAIL/SKIP line."""
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from hif import pipeline
from hif.bayes import OverlapCase, bayes_filter, fuse_pillar, new_pillar
from hif.cli import main
from hif.core import HeightInterval, HifConfig, Pillar
from hif.dataset_io import RunConfig, SequenceSpec
from hif.global_map import GlobalHeightMap
from hif.pillars import PillarKey, in_pillar, mix_hash, pillar_offsets
from hif.synthetic import ObservationPattern, grid_oracle


def record(n, ok, detail, skipped=False):
    status = "SKIP" if skipped else ("PASS" if ok else "FAIL")
    line = f"criterion {n}: {status}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return ok


# -- 1 -----------------------------------------------------------------------

def test_criterion_1_bayes_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    exact = bayes_filter(0.5, 0.7, 0.3) == 0.7
    p = rng.uniform(0, 1, 1000)
    neutral = max(abs(bayes_filter(x, 0.5, 0.5) - x) for x in p)
    ps = rng.uniform(1e-3, 1 - 1e-3, 1000)
    # alpha > 0.5, beta < 0.5, drawn independently
    alphas = rng.uniform(0.501, 0.999, 1000)
    betas = rng.uniform(0.001, 0.499, 1000)
    inverse = max(abs(bayes_filter(bayes_filter(x, a, b), 1 - a, 1 - b) - x)
                  for x, a, b in zip(ps, alphas, betas))
    symmetric = max(abs(bayes_filter(bayes_filter(x, a, 1 - a), 1 - a, a) - x)
                    for x, a in zip(ps, alphas))
    elapsed = time.perf_counter() - t0
    ok = exact and neutral <= 1e-12 and inverse <= 1e-12 and elapsed < 1.0
    record(1, ok, f"bf(0.5,.7,.3)==0.7 {exact}; max|bf(p,.5,.5)-p|={neutral:.1e}; "
                  f"max inverse error {inverse:.2e} over independent (p,a,b) "
                  f"[{symmetric:.1e} when b=1-a]; {elapsed:.2f}s")
    assert exact and neutral <= 1e-12 and elapsed < 1.0
    assert inverse <= 1e-12, "confirm/negate are inverses only when beta = 1 - alpha"


# -- 2 and 3 -----------------------------------------------------------------

CELL = 1e-3
Z_LO, Z_HI = -1.5, 4.5


def random_clusters(rng, gap):
    k = int(rng.integers(1, 4))
    out, z = [], rng.uniform(-1.0, 0.5)
    for _ in range(k):
        b = z
        t = b + rng.uniform(0.01, 1.0)
        if t > 3.3:
            break
        out.append((round(b, 4), round(t, 4)))
        z = t + gap + rng.uniform(0.01, 0.8)
    return out


def random_scenario(rng, cfg):
    initial = None
    if rng.random() < 0.5:
        ends = np.sort(rng.choice(np.arange(-1000, 3300), size=2 * int(rng.integers(1, 4)),
                                  replace=False)) / 1000.0
        ivs = tuple(HeightInterval(b, t, float(rng.uniform(0.1, 0.9)))
                    for b, t in zip(ends[0::2], ends[1::2]))
        initial = Pillar(float(rng.uniform(0.05, 0.95)), ivs)
    scans = [None if rng.random() < 0.2 else random_clusters(rng, cfg.gap_threshold)
             for _ in range(10)]
    return ObservationPattern(initial, scans)


def pillar_on_grid(pillar, z):
    p = np.full(len(z), np.nan)
    if pillar is None:
        return p
    for iv in pillar.intervals:
        p[(z >= iv.b) & (z < iv.t)] = iv.p
    return p


def check_pillar(pillar, cfg):
    ivs = pillar.intervals
    sorted_ok = all(a.b <= a.t <= b.b for a, b in zip(ivs, ivs[1:]))
    clip_ok = all(cfg.clip_lo <= iv.p <= cfg.clip_hi for iv in ivs)
    return sorted_ok and clip_ok


def coverage_ok(local, glob, trace, z):
    covered = np.zeros(len(z), dtype=bool)
    for iv in local.intervals + glob.intervals:
        covered |= (z > iv.b) & (z < iv.t)
    hits = np.zeros(len(z), dtype=int)
    for b, t, case, _ in trace:
        if case is not OverlapCase.DISCARD:
            hits += (z > b) & (z < t)
    ends = np.array([e for iv in local.intervals + glob.intervals for e in (iv.b, iv.t)])
    away = np.min(np.abs(z[:, None] - ends[None, :]), axis=1) > 1e-12
    return bool(np.all(hits[away] == covered[away]))


def replay(pattern, cfg, z, coverage_cfg=None):
    """Run fuse_pillar over the pattern; returns (final pillar, invariant violations)."""
    pillar = pattern.initial
    violations = 0
    for obs in pattern.scans:
        if not obs:
            continue
        local = Pillar.from_bounds(obs, p=cfg.p_init)
        if pillar is None:
            pillar = new_pillar(local, cfg)
        else:
            if coverage_cfg is not None:
                trace = []
                fuse_pillar(local, pillar, coverage_cfg, trace)
                violations += not coverage_ok(local, pillar, trace, z)
            pillar = fuse_pillar(local, pillar, cfg)
        violations += not check_pillar(pillar, cfg)
    return pillar, violations


def endpoint_mask(pattern, cfg, z):
    ends = []
    if pattern.initial is not None:
        ends += [e for iv in pattern.initial.intervals for e in (iv.b, iv.t)]
    tol = cfg.containment_tolerance
    for obs in pattern.scans:
        for b, t in obs or ():
            ends += [b, t, b - tol, t + tol]
    ends = np.asarray(ends)
    return np.min(np.abs(z[:, None] - ends[None, :]), axis=1) <= 1.5 * CELL


@pytest.fixture(scope="module")
def oracle_runs():
    rng = np.random.default_rng(2024)
    z = Z_LO + (np.arange(int(round((Z_HI - Z_LO) / CELL))) + 0.5) * CELL
    t0 = time.perf_counter()
    worst, mismatched, violations, runs, compared = 0.0, 0, 0, 0, 0
    for i in range(200):
        tol = 0.0 if i % 2 else 0.1
        base = HifConfig(containment_tolerance=tol, compaction_epsilon=0.0)
        pattern = random_scenario(rng, base)
        for lhp in (True, False):
            cfg = base.with_(lhp_enabled=lhp)
            cov_cfg = cfg.with_(containment_tolerance=0.0)
            pillar, v = replay(pattern, cfg, z, coverage_cfg=cov_cfg)
            violations += v
            want = grid_oracle(pattern, cfg, Z_LO, Z_HI, CELL).p
            got = pillar_on_grid(pillar, z)
            keep = ~endpoint_mask(pattern, cfg, z)
            same_nan = np.isnan(want[keep]) == np.isnan(got[keep])
            both = keep & ~np.isnan(want) & ~np.isnan(got)
            err = float(np.max(np.abs(want[both] - got[both]), initial=0.0))
            worst = max(worst, err)
            compared += int(both.sum())
            mismatched += int((~same_nan).sum()) + int(err > 1e-9)
            runs += 1
    return dict(worst=worst, mismatched=mismatched, violations=violations, runs=runs,
                compared=compared,
                elapsed=time.perf_counter() - t0)


def test_criterion_2_grid_oracle(oracle_runs):
    r = oracle_runs
    ok = r["mismatched"] == 0 and r["worst"] <= 1e-9 and r["elapsed"] < 30
    record(2, ok, f"{r['runs']} runs (200 scenarios x LHP on/off), max |dp| {r['worst']:.1e}, "
                  f"{r['mismatched']} disagreements in {r['compared']} compared cells, {r['elapsed']:.1f}s")
    assert ok


def test_criterion_3_invariants(oracle_runs):
    r = oracle_runs
    ok = r["violations"] == 0
    record(3, ok, f"{r['violations']} violations of ordering/clipping/coverage "
                  f"over {r['runs']} runs")
    assert ok


# -- 4 and 5 -----------------------------------------------------------------

def test_criterion_4_synthetic_end_to_end(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('scene_file = "default"\n')
    code = main(["eval", "--config", str(cfg), "--out", str(tmp_path / "out")])
    capsys.readouterr()
    acc = json.loads((tmp_path / "out" / "accuracy.json").read_text())
    ok = code == 0 and acc["sa"] >= 98.0 and acc["da"] >= 95.0
    record(4, ok, f"default street scene: SA {acc['sa']:.2f} (>= 98), DA {acc['da']:.2f} (>= 95), "
                  f"AA {acc['aa']:.2f}")
    assert ok


def test_criterion_5_lhp_ablation():
    run = RunConfig(HifConfig(), scene_file="occlusion")
    on = pipeline.run(run, lhp=True).accuracy()
    off = pipeline.run(run, lhp=False).accuracy()
    gain, loss = on.sa - off.sa, off.da - on.da
    ok = gain >= 3.0 and loss <= 1.0
    record(5, ok, f"occlusion scene: SA {off.sa:.2f} -> {on.sa:.2f} (+{gain:.2f}, need >= 3), "
                  f"DA {off.da:.2f} -> {on.da:.2f} (change {-loss:+.2f}, need >= -1)")
    assert ok


# -- 6 -----------------------------------------------------------------------

@pytest.mark.dataset
def test_criterion_6_kitti_regression():
    root = os.environ.get("HIF_KITTI_ROOT")
    if not root:
        record(6, False, "HIF_KITTI_ROOT not set; KITTI sequence 00 regression not run",
               skipped=True)
        pytest.skip("HIF_KITTI_ROOT not set")
    seq_dir = Path(root) / "sequences" / "00"
    calib = seq_dir / "calib.txt"
    seq = SequenceSpec(seq_dir / "velodyne", seq_dir / "poses.txt",
                       calib if calib.exists() else None, seq_dir / "labels", 4390, 4530)
    result = pipeline.run(RunConfig(HifConfig(), seq))
    acc = result.accuracy()
    mean_ms = float(np.mean([t.ms for t in result.timings]))
    ok = abs(acc.aa - 96.92) <= 3.0 and mean_ms <= 40.0
    record(6, ok, f"KITTI 00 [4390, 4530]: AA {acc.aa:.2f} (96.92 +/- 3), "
                  f"mean {mean_ms:.2f} ms/frame (<= 40)")
    assert ok


# -- 7 -----------------------------------------------------------------------

def test_criterion_7_determinism(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('scene_file = "occlusion"\n')
    outs = []
    for name, extra in (("a", []), ("b", []), ("c", ["--workers", "2"])):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / name)] + extra) == 0
        outs.append(tuple((tmp_path / name / f).read_bytes() for f in ("map.hif", "cleaned.bin")))
    capsys.readouterr()
    repeat, parallel = outs[0] == outs[1], outs[0] == outs[2]
    record(7, repeat and parallel, f"repeat run byte-identical {repeat}; "
                                   f"workers=2 byte-identical {parallel}")
    assert repeat and parallel


# -- 8 -----------------------------------------------------------------------

def test_criterion_8_hash_and_partition():
    coords = [(m, n) for m in range(-100, 101) for n in range(-100, 101)]
    # 12-bit hash: ~10 keys share every hash value
    coarse = lambda m, n: mix_hash(m, n) >> 52
    bad = 0
    for hasher in (mix_hash, coarse):
        gmap = GlobalHeightMap()
        for m, n in coords:
            gmap.table[PillarKey.of(m, n, hasher)] = Pillar.from_bounds([(m, m + 1 + (n + 101))])
        bad += len(gmap) != len(coords)
        for m, n in coords:
            iv = gmap[PillarKey.of(m, n, hasher)].intervals[0]
            bad += (iv.b, iv.t) != (m, m + 1 + (n + 101))
    distinct = len({mix_hash(m, n) for m, n in coords})
    # every key collides under a constant hash; lookups must still resolve
    const = GlobalHeightMap()
    few = coords[::97]
    for m, n in few:
        const.table[PillarKey.of(m, n, lambda *_: 7)] = Pillar.from_bounds([(m, n + 200)])
    bad += sum(const[PillarKey.of(m, n, lambda *_: 7)].intervals[0].t != n + 200 for m, n in few)

    rng = np.random.default_rng(8)
    disagree = 0
    for cfg in (HifConfig(), HifConfig(origin_x=0.3, origin_y=-7.1, dx=0.7, dy=1.3)):
        xy = rng.uniform(-500, 500, (50_000, 2))
        # a fifth of the points sit exactly on, or one ulp either side of, a boundary
        k = len(xy) // 5
        grid = np.round((xy[:k] - [cfg.origin_x, cfg.origin_y]) / [cfg.dx, cfg.dy])
        on = grid * [cfg.dx, cfg.dy] + [cfg.origin_x, cfg.origin_y]
        xy[:k] = np.nextafter(on, on + rng.choice([-1.0, 0.0, 1.0], size=on.shape))
        m, n = pillar_offsets(xy, cfg)
        for (x, y), mi, ni in zip(xy, m, n):
            disagree += not in_pillar(x, y, int(mi), int(ni), cfg)
    ok = bad == 0 and disagree == 0
    record(8, ok, f"{len(coords)} keys, {len(coords) - distinct} hash collisions, "
                  f"{bad} wrong lookups under forced collisions; "
                  f"{disagree} partition disagreements on 100000 points")
    assert ok
