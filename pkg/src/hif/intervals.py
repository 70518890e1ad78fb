"""Height interval construction: per-pillar 1-D single-linkage clustering."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import HeightInterval, HifConfig, Pillar, ScanFrame
from .pillars import PillarKey, group_by_pillar, mix_hash_array


def build_intervals(z_values: Sequence[float], cfg: HifConfig) -> list[tuple[float, float]]:
    """Cluster heights, splitting wherever consecutive sorted values differ by
    more than ``cfg.gap_threshold``. Returns ``(min, max)`` per cluster.

    >>> from hif.core import HifConfig
    >>> build_intervals([0.0, 0.1, 1.5, 1.6], HifConfig(gap_threshold=0.5))
    [(0.0, 0.1), (1.5, 1.6)]
    """
    z = np.sort(np.asarray(z_values, dtype=np.float64).ravel())
    if z.size == 0:
        raise ValueError("build_intervals needs at least one height value")
    cuts = np.flatnonzero(np.diff(z) > cfg.gap_threshold)
    lo = np.concatenate(([0], cuts + 1))
    hi = np.concatenate((cuts, [z.size - 1]))
    return [(float(z[a]), float(z[b])) for a, b in zip(lo, hi)]


def build_local_pillars(scan: ScanFrame, cfg: HifConfig) -> dict[PillarKey, Pillar]:
    """Local pillar set of one world-frame scan, placeholder probabilities ``p_init``.

    Equivalent to :func:`hif.pillars.assign_points` followed by
    :func:`build_intervals` per bucket, done in one sorted pass.
    """
    order, m, n, starts = group_by_pillar(scan.points, cfg)
    if len(order) == 0:
        return {}
    z = scan.points[order, 2]
    # a cluster breaks at a pillar change or at a vertical gap
    brk = np.zeros(len(z), dtype=bool)
    brk[starts[:-1]] = True
    brk[1:] |= np.diff(z) > cfg.gap_threshold
    first = np.flatnonzero(brk)
    last = np.concatenate((first[1:] - 1, [len(z) - 1]))

    heads = starts[:-1]
    hashes = mix_hash_array(m[heads], n[heads])
    # cluster ranges [c0, c1) belonging to each pillar
    cidx = np.searchsorted(first, starts)

    p = cfg.p_init
    local = {}
    for i, s in enumerate(heads):
        key = PillarKey(int(m[s]), int(n[s]), int(hashes[i]))
        ivs = tuple(HeightInterval(float(z[a]), float(z[b]), p)
                    for a, b in zip(first[cidx[i]:cidx[i + 1]], last[cidx[i]:cidx[i + 1]]))
        local[key] = Pillar(p, ivs)
    return local
