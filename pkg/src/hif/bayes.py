"""Probabilistic fusion of a local pillar into its global counterpart.

Per matched pillar and scan:

1. ``p_empty`` receives one negative update.
2. The endpoints of both interval sets are merged and every consecutive pair
   becomes a candidate interval.
3. Each candidate is classified by whether it overlaps the current
   observation and/or the stored intervals, and its probability is updated
   accordingly (confirm, negate, seed from ``p_empty``, keep, or drop).
4. Probabilities are clipped, touching neighbours with (nearly) equal
   probabilities are merged, and the result replaces the stored pillar.

The local intervals are widened by ``containment_tolerance`` before step 2;
that widened footprint is what counts as "observed" in this scan.
"""
from __future__ import annotations

import enum
from typing import Optional, Sequence

from .core import HeightInterval, HifConfig, InvariantError, Pillar, check_disjoint


class OverlapCase(enum.Enum):
    DISCARD = "discard"
    CONFIRMED = "confirmed"
    NEGATIVE = "negative"
    NOVEL = "novel"
    LHP_RETAINED = "lhp_retained"


def bayes_filter(p: float, p_s: float, p_d: float) -> float:
    """Binary Bayes update of ``p`` with likelihoods ``p_s`` (static) / ``p_d`` (dynamic)."""
    num = p_s * p
    return num / (num + p_d * (1.0 - p))


def update_empty(p_empty: float, cfg: HifConfig) -> float:
    return bayes_filter(p_empty, 1.0 - cfg.alpha, 1.0 - cfg.beta)


def clip(p: float, cfg: HifConfig) -> float:
    return max(cfg.clip_lo, min(cfg.clip_hi, p))


def extract_base(local: Pillar) -> float:
    """Lowest observed height in the pillar; space below it is unknown this scan."""
    if not local.intervals:
        raise ValueError("extract_base needs a non-empty pillar")
    return min(iv.b for iv in local.intervals)


def widen(intervals: Sequence[HeightInterval], tol: float) -> list[HeightInterval]:
    """Pad every interval by ``tol`` on both sides, merging any that now touch."""
    out: list[HeightInterval] = []
    for iv in sorted(intervals, key=lambda h: h.b):
        b, t = iv.b - tol, iv.t + tol
        if out and b <= out[-1].t:
            prev = out[-1]
            out[-1] = HeightInterval(prev.b, max(prev.t, t), prev.p)
        else:
            out.append(HeightInterval(b, t, iv.p))
    return out


def refine_endpoints(local: Pillar, global_: Pillar) -> list[float]:
    """Sorted, de-duplicated union of all interval endpoints of both pillars."""
    ends = set()
    for iv in local.intervals:
        ends.add(iv.b)
        ends.add(iv.t)
    for iv in global_.intervals:
        ends.add(iv.b)
        ends.add(iv.t)
    return sorted(ends)


def candidates(endpoints: Sequence[float]) -> list[tuple[float, float]]:
    return list(zip(endpoints[:-1], endpoints[1:]))


def _overlap_len(b: float, t: float, iv: HeightInterval) -> float:
    return min(t, iv.t) - max(b, iv.b)


def overlapping(candidate: tuple[float, float], intervals: Sequence[HeightInterval],
                tol: float = 0.0) -> list[HeightInterval]:
    """Intervals whose tol-widened closure meets the candidate's open interior."""
    b, t = candidate
    return [iv for iv in intervals if b < iv.t + tol and iv.b - tol < t]


def best_match(candidate: tuple[float, float],
               matches: Sequence[HeightInterval]) -> Optional[HeightInterval]:
    """Larger overlap wins, then lower ``b``."""
    if not matches:
        return None
    b, t = candidate
    return min(matches, key=lambda iv: (-_overlap_len(b, t, iv), iv.b))


def _case(in_local: bool, in_global: bool, cand_t: float, b_base: float,
          lhp: bool) -> OverlapCase:
    if in_local:
        return OverlapCase.CONFIRMED if in_global else OverlapCase.NOVEL
    if not in_global:
        return OverlapCase.DISCARD
    if lhp and cand_t <= b_base:
        return OverlapCase.LHP_RETAINED
    return OverlapCase.NEGATIVE


def classify_candidate(candidate: tuple[float, float], local: Pillar, global_: Pillar,
                       b_base: float, cfg: HifConfig) -> OverlapCase:
    observed = widen(local.intervals, cfg.containment_tolerance)
    return _case(bool(overlapping(candidate, observed)),
                 bool(overlapping(candidate, global_.intervals)),
                 candidate[1], b_base, cfg.lhp_enabled)


def compact(intervals: Sequence[HeightInterval], eps: float) -> list[HeightInterval]:
    """Merge touching neighbours whose probabilities differ by at most ``eps``.

    Merged probability is the length-weighted mean (identical when equal).
    """
    out: list[HeightInterval] = []
    for iv in intervals:
        if out and out[-1].t == iv.b and abs(out[-1].p - iv.p) <= eps:
            prev = out[-1]
            if prev.p == iv.p:
                p = prev.p
            else:
                w0, w1 = prev.length, iv.length
                p = (prev.p * w0 + iv.p * w1) / (w0 + w1) if w0 + w1 > 0 else 0.5 * (prev.p + iv.p)
            out[-1] = HeightInterval(prev.b, iv.t, p)
        else:
            out.append(iv)
    return out


def fuse_pillar(local: Pillar, global_: Pillar, cfg: HifConfig,
                trace: Optional[list] = None) -> Pillar:
    """Fold one scan's local pillar into the stored pillar; returns the replacement.

    If ``trace`` is a list, ``(b, t, OverlapCase, p)`` is appended for every
    candidate (``p`` is ``None`` for discarded ones), before compaction.
    """
    if not local.intervals:
        raise ValueError("fuse_pillar needs a non-empty local pillar")
    try:
        check_disjoint(local.intervals)
        check_disjoint(global_.intervals)
    except InvariantError as exc:
        raise InvariantError(f"fuse_pillar input: {exc}") from None

    p_empty = update_empty(global_.p_empty, cfg)
    b_base = extract_base(local)
    observed = widen(local.intervals, cfg.containment_tolerance)
    stored = global_.intervals
    alpha, beta = cfg.alpha, cfg.beta
    lo, hi = cfg.clip_lo, cfg.clip_hi

    ends = sorted({iv.b for iv in observed} | {iv.t for iv in observed}
                  | {iv.b for iv in stored} | {iv.t for iv in stored})
    out: list[HeightInterval] = []
    i = j = 0
    for cb, ct in zip(ends[:-1], ends[1:]):
        # both lists are sorted and disjoint: skip everything ending at or below cb
        while i < len(observed) and observed[i].t <= cb:
            i += 1
        while j < len(stored) and stored[j].t <= cb:
            j += 1
        in_local = i < len(observed) and observed[i].b < ct
        g_matches = []
        k = j
        while k < len(stored) and stored[k].b < ct:
            g_matches.append(stored[k])
            k += 1
        g = best_match((cb, ct), g_matches)
        case = _case(in_local, g is not None, ct, b_base, cfg.lhp_enabled)

        if case is OverlapCase.DISCARD:
            if trace is not None:
                trace.append((cb, ct, case, None))
            continue
        if case is OverlapCase.CONFIRMED:
            p = bayes_filter(g.p, alpha, beta)
        elif case is OverlapCase.NEGATIVE:
            p = bayes_filter(g.p, 1.0 - alpha, 1.0 - beta)
        elif case is OverlapCase.NOVEL:
            p = bayes_filter(p_empty, alpha, beta)
        else:
            p = g.p
        p = max(lo, min(hi, p))
        if trace is not None:
            trace.append((cb, ct, case, p))
        out.append(HeightInterval(cb, ct, p))

    return Pillar(p_empty, tuple(compact(out, cfg.compaction_epsilon)))


def new_pillar(local: Pillar, cfg: HifConfig) -> Pillar:
    """Stored form of a pillar seen for the first time: one positive update from ``p_init``."""
    p = clip(bayes_filter(cfg.p_init, cfg.alpha, cfg.beta), cfg)
    ivs = widen(local.intervals, cfg.containment_tolerance)
    return Pillar(cfg.p_init, tuple(HeightInterval(iv.b, iv.t, p) for iv in ivs))
