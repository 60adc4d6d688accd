# tests/test_metrics.py
import json
import math

import numpy as np
import pytest

from nodulemorph.metrics import COLUMNS, CaseScore, build_report, dsc, nodule_dsc
from nodulemorph.models import BBox, CaseManifest, CaseRecord, GrayImage, NoduleType, SliceEntry


def _score(case_id, nodule_type, diameter_mm, value, method="coarse-to-fine"):
    return CaseScore(case_id=case_id, nodule_type=nodule_type, diameter_mm=diameter_mm, dsc=value, method=method)


def _record(ground_truth):
    shape = ground_truth[0].shape if ground_truth[0] is not None else (4, 4)
    slices = tuple(
        SliceEntry(f"s{i}.pgm", BBox(0, 0, shape[1], shape[0]), None if g is None else f"g{i}.pgm")
        for i, g in enumerate(ground_truth)
    )
    manifest = CaseManifest("c1", NoduleType.SOLID, 8.0, slices)
    images = [GrayImage(np.zeros(shape, dtype=np.uint16)) for _ in ground_truth]
    return CaseRecord(manifest, images, list(ground_truth))


# --- Dice ---


def test_dsc_examples():
    pred = np.array([[1, 1, 0, 0]], dtype=bool)
    gt = np.array([[0, 1, 1, 0]], dtype=bool)
    assert dsc(pred, gt) == pytest.approx(0.5)
    assert dsc(gt, gt) == 1.0
    assert dsc(pred, ~pred) == 0.0


def test_dsc_both_empty_is_one():
    empty = np.zeros((3, 3), dtype=bool)
    assert dsc(empty, empty) == 1.0


def test_dsc_one_empty_is_zero():
    empty = np.zeros((3, 3), dtype=bool)
    assert dsc(empty, ~empty) == 0.0


def test_dsc_shape_mismatch():
    with pytest.raises(ValueError):
        dsc(np.zeros((2, 2), dtype=bool), np.zeros((2, 3), dtype=bool))


def test_dsc_matches_set_oracle():
    rng = np.random.default_rng(99)
    for _ in range(500):
        shape = tuple(rng.integers(1, 9, size=2))
        pred = rng.random(shape) > rng.random()
        gt = rng.random(shape) > rng.random()
        p = {tuple(ix) for ix in np.argwhere(pred)}
        g = {tuple(ix) for ix in np.argwhere(gt)}
        expected = 1.0 if not p and not g else 2 * len(p & g) / (len(p) + len(g))
        value = dsc(pred, gt)
        assert abs(value - expected) <= 1e-12
        assert value == dsc(gt, pred)
        assert 0.0 <= value <= 1.0


# --- Per-nodule Dice ---


def test_nodule_dsc_is_volumetric():
    gt = [np.zeros((4, 4), dtype=bool), np.zeros((4, 4), dtype=bool)]
    gt[0][0, :] = True
    gt[1][:2, :] = True
    pred = [gt[0].copy(), np.zeros((4, 4), dtype=bool)]
    # 2 * 4 / (4 + 12), not the mean of the slice scores
    assert nodule_dsc(_record(gt), pred) == pytest.approx(0.5)


def test_nodule_dsc_ignores_unlabelled_slices():
    gt = [np.ones((4, 4), dtype=bool), None]
    pred = [np.ones((4, 4), dtype=bool), np.ones((4, 4), dtype=bool)]
    assert nodule_dsc(_record(gt), pred) == 1.0


def test_missing_prediction_counts_as_empty():
    gt = [np.ones((4, 4), dtype=bool)]
    assert nodule_dsc(_record(gt), [None]) == 0.0


def test_case_score_keeps_slice_scores():
    gt = [np.ones((4, 4), dtype=bool), np.ones((4, 4), dtype=bool)]
    pred = [np.ones((4, 4), dtype=bool), None]
    score = CaseScore.from_case(_record(gt), pred, method="plain-thresholding")
    assert score.slice_dsc == {0: 1.0, 1: 0.0}
    assert score.method == "plain-thresholding"
    assert score.dsc == pytest.approx(2 * 16 / 48)


# --- Stratified report ---


def test_report_strata_and_average():
    scores = [
        _score("a", NoduleType.SOLID, 5.0, 0.8),
        _score("b", NoduleType.SOLID, 12.0, 0.6),
        _score("c", NoduleType.MGGN, 25.0, 0.4),
    ]
    report = build_report(scores)
    row = report.rows["coarse-to-fine"]
    assert row["Avg"] == pytest.approx(0.6)
    assert row["Solid"] == pytest.approx(0.7)
    assert row["mGGN"] == pytest.approx(0.4)
    assert row["pGGN"] is None
    assert row["(0,10)"] == pytest.approx(0.8)
    assert row["[10,20)"] == pytest.approx(0.6)
    assert row["[20,inf)"] == pytest.approx(0.4)
    assert report.counts["coarse-to-fine"]["Solid"] == 2
    assert report.counts["coarse-to-fine"]["pGGN"] == 0


def test_avg_is_over_nodules_not_strata():
    scores = [_score(str(i), NoduleType.SOLID, 5.0, 1.0) for i in range(3)]
    scores.append(_score("g", NoduleType.PGGN, 5.0, 0.0))
    row = build_report(scores).rows["coarse-to-fine"]
    assert row["Avg"] == pytest.approx(0.75)


def test_bin_edges():
    scores = [_score("a", NoduleType.SOLID, 10.0, 0.2), _score("b", NoduleType.SOLID, 20.0, 0.9)]
    row = build_report(scores).rows["coarse-to-fine"]
    assert row["(0,10)"] is None
    assert row["[10,20)"] == pytest.approx(0.2)
    assert row["[20,inf)"] == pytest.approx(0.9)


def test_methods_keep_their_rows():
    scores = [
        _score("a", NoduleType.SOLID, 5.0, 0.9),
        _score("a", NoduleType.SOLID, 5.0, 0.3, method="plain-thresholding"),
    ]
    report = build_report(scores)
    assert report.methods == ["coarse-to-fine", "plain-thresholding"]
    assert report.rows["plain-thresholding"]["Avg"] == pytest.approx(0.3)


def test_text_table_shows_na():
    report = build_report([_score("a", NoduleType.PGGN, 15.0, 0.5)])
    text = report.to_text()
    header = text.splitlines()[0]
    assert header.split() == ["method"] + COLUMNS
    assert "n/a" in text
    assert "0.500" in text


def test_frame_uses_nan_for_empty_strata():
    frame = build_report([_score("a", NoduleType.PGGN, 15.0, 0.5)]).to_frame()
    assert list(frame.columns) == COLUMNS + ["n"]
    assert math.isnan(frame.loc["coarse-to-fine", "Solid"])
    assert frame.loc["coarse-to-fine", "n"] == 1


def test_json_is_plain():
    report = build_report([_score("a", NoduleType.SOLID, 15.0, 0.5)])
    data = json.loads(report.to_json())
    assert data["columns"] == COLUMNS
    assert data["rows"]["coarse-to-fine"]["pGGN"] is None
    assert data["records"][0]["case_id"] == "a"
