import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hif.evaluation import (REPORT_FIELDS, AccuracyReport, RuntimeReport, associated_accuracy,
                            emit_report, runtime_stats, score)

S, D, X = 0, 1, 2

GOLDEN_CSV = (
    "sa,da,aa,retained_static,removed_static,removed_dynamic,retained_dynamic,excluded,"
    "mean_ms,std_ms,fps,n_frames,peak_memory_mb\n"
    "98.40,95.46,96.92,9840,160,9546,454,12,11.620,0.500,86.06,3,\n"
)


def known_reports():
    acc = AccuracyReport.from_counts(9840, 160, 9546, 454, 12)
    rt = RuntimeReport(11.62, 0.5, 1000 / 11.62, 3, None)
    return acc, rt


def test_associated_accuracy_table_row():
    assert round(associated_accuracy(98.40, 95.46), 2) == 96.92


def test_associated_accuracy_annihilator():
    assert associated_accuracy(100.0, 0.0) == 0.0


def test_score_all_correct():
    rep = score([S, S, D, S], [S, S, D, X])
    assert (rep.sa, rep.da, rep.aa) == (100.0, 100.0, 100.0)
    assert rep.excluded == 1


def test_score_counts():
    rep = score([S, D, D, S, S, D], [S, S, D, D, X, X])
    assert (rep.retained_static, rep.removed_static) == (1, 1)
    assert (rep.removed_dynamic, rep.retained_dynamic) == (1, 1)
    assert rep.sa == rep.da == 50.0


def test_score_absent_classes():
    rep = score([S, D], [S, S])
    assert rep.sa == 50.0 and rep.da is None and rep.aa is None
    rep = score([], [])
    assert rep.sa is rep.da is rep.aa is None


def test_score_length_mismatch():
    with pytest.raises(ValueError, match="3 predictions for 2"):
        score([S, S, S], [S, S])


@given(st.lists(st.tuples(st.sampled_from([S, D]), st.sampled_from([S, D, X])), min_size=1),
       st.randoms())
def test_score_permutation_equivariant(pairs, rnd):
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    a = score(*zip(*pairs))
    b = score(*zip(*shuffled))
    assert a == b
    if a.aa is not None and a.aa > 0:
        assert math.isclose(a.aa ** 2, a.sa * a.da, rel_tol=1e-9)


@pytest.mark.parametrize("ms,mean,std,fps", [
    ([10, 10, 10], 10, 0, 100),
    ([5, 15], 10, 5, 100),
])
def test_runtime_stats(ms, mean, std, fps):
    rt = runtime_stats(ms)
    assert (rt.mean_ms, rt.std_ms, rt.fps, rt.n_frames) == (mean, std, fps, len(ms))


def test_runtime_fps_table_value():
    rt = runtime_stats([11.62])
    assert f"{rt.fps:.2f}" == "86.06"
    assert math.isclose(rt.fps, 1000 / rt.mean_ms, rel_tol=1e-6)


def test_runtime_empty():
    with pytest.raises(ValueError):
        runtime_stats([])


def test_runtime_memory_best_effort():
    rt = runtime_stats([1.0])
    assert rt.peak_memory_mb is None or rt.peak_memory_mb > 0
    assert runtime_stats([1.0], memory=False).peak_memory_mb is None


def test_golden_csv():
    assert emit_report(*known_reports(), "csv") == GOLDEN_CSV


def test_json_round_trip():
    acc, rt = known_reports()
    obj = json.loads(emit_report(acc, rt, "json"))
    assert list(obj) == list(REPORT_FIELDS)
    assert obj["sa"] == 98.40 and obj["aa"] == 96.92 and obj["excluded"] == 12
    assert obj["mean_ms"] == 11.62 and obj["n_frames"] == 3
    assert obj["peak_memory_mb"] is None
    assert emit_report(acc, rt, "json") == emit_report(acc, rt, "json")


def test_absent_metrics_serialized():
    acc = AccuracyReport.from_counts(5, 0, 0, 0)
    obj = json.loads(emit_report(acc, None, "json"))
    assert obj["sa"] == 100.0 and obj["da"] is None and obj["aa"] is None
    assert obj["mean_ms"] is None
    row = emit_report(acc, None, "csv").splitlines()[1].split(",")
    assert row[:3] == ["100.00", "", ""]
    assert row[8:] == [""] * 5


def test_unknown_format():
    with pytest.raises(ValueError):
        emit_report(None, None, "xml")
