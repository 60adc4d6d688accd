# tests/test_strategies.py
from pathlib import Path

import numpy as np
import pytest

from nodulemorph.config import DEFAULT, PipelineConfig
from nodulemorph.metrics import dsc, nodule_dsc
from nodulemorph.models import BBox, CaseManifest, CaseRecord, GrayImage, NoduleType, SliceEntry
from nodulemorph.phantom import PhantomKind, PhantomSpec, generate, suite_spec
from nodulemorph.pipeline import segment_slice
from nodulemorph.strategies import (
    STRATEGIES,
    CoarseToFine,
    PlainDeformable,
    PlainThresholding,
    SegmentationStrategy,
)


def _record(phantom, case_id="p1"):
    slices = tuple(
        SliceEntry(Path(f"slice_{i:03d}.pgm"), phantom.roi_box, Path(f"gt_{i:03d}.pgm"))
        for i in range(len(phantom.images))
    )
    manifest = CaseManifest(
        case_id,
        phantom.spec.kind.nodule_type,
        phantom.spec.diameter_mm,
        slices,
        center_index=phantom.spec.center_index,
    )
    return CaseRecord(manifest, list(phantom.images), list(phantom.ground_truth))


def _blank_record(n_slices=3):
    roi = BBox(0, 0, 24, 24)
    slices = tuple(SliceEntry(Path(f"s{i}.pgm"), roi, Path(f"g{i}.pgm")) for i in range(n_slices))
    manifest = CaseManifest("blank", NoduleType.SOLID, 5.0, slices, center_index=1)
    images = [GrayImage(np.full((24, 24), 250, dtype=np.uint16)) for _ in range(n_slices)]
    return CaseRecord(manifest, images, [np.zeros((24, 24), dtype=bool)] * n_slices)


def test_strategy_registry():
    assert set(STRATEGIES) == {"plain-thresholding", "plain-deformable", "coarse-to-fine"}
    assert STRATEGIES["coarse-to-fine"] is CoarseToFine


def test_abstract_strategy_cannot_be_built():
    with pytest.raises(TypeError):
        SegmentationStrategy()  # pylint: disable=abstract-class-instantiated


def test_plain_thresholding_keeps_largest_component():
    pixels = np.zeros((32, 32), dtype=np.uint16)
    pixels[4:10, 4:10] = 900
    pixels[15:27, 15:27] = 900
    result = PlainThresholding().segment_slice(
        GrayImage(pixels), BBox(0, 0, 32, 32), PipelineConfig(smoothing_sigma=0)
    )
    assert result.ok
    assert result.area == 144


def test_plain_deformable_drops_vessels():
    phantom = generate(PhantomSpec(seed=4, kind=PhantomKind.VESSEL_ATTACHED, nodule_diameter_px=16))
    result = PlainDeformable().segment_slice(phantom.images[0], phantom.roi_box, DEFAULT)
    vessels = phantom.vessels[0]
    assert (result.mask & vessels).sum() <= 0.2 * vessels.sum()


def test_baseline_failure_is_reported():
    record = _blank_record(1)
    result = PlainThresholding().segment_slice(record.images[0], record.roi_boxes[0], DEFAULT)
    assert not result.ok
    assert "No candidate region" in result.error


def test_coarse_to_fine_segments_every_slice():
    phantom = generate(PhantomSpec(seed=1, kind=PhantomKind.SOLID, nodule_diameter_px=16, n_slices=3))
    results = CoarseToFine().segment_case(_record(phantom), DEFAULT)
    assert [r.slice_index for r in results] == [0, 1, 2]
    assert all(r.ok for r in results)
    assert all(r.trace is not None for r in results)


def test_coarse_to_fine_without_propagation_matches_2d():
    phantom = generate(PhantomSpec(seed=6, nodule_diameter_px=12, n_slices=3))
    record = _record(phantom)
    strategy = CoarseToFine(use_3d=False)
    results = strategy.segment_case(record, DEFAULT)
    for i, r in enumerate(results):
        alone = strategy.segment_slice(record.images[i], record.roi_boxes[i], DEFAULT, slice_index=i)
        assert np.array_equal(r.mask, alone.mask)


def test_coarse_to_fine_beats_plain_on_the_wall():
    c2f, plain = [], []
    for seed in range(4):
        phantom = generate(PhantomSpec(seed=seed, kind=PhantomKind.JUXTAPLEURAL, nodule_diameter_px=14))
        record = _record(phantom)
        c2f.append(nodule_dsc(record, [r.mask for r in CoarseToFine().segment_case(record, DEFAULT)]))
        plain.append(nodule_dsc(record, [r.mask for r in PlainThresholding().segment_case(record, DEFAULT)]))
    assert np.mean(c2f) > np.mean(plain) + 0.2


def test_failed_center_gives_empty_slices(caplog):
    results = CoarseToFine().segment_case(_blank_record(), DEFAULT, keep_stages=True)
    assert len(results) == 3
    assert not any(r.ok for r in results)
    assert all(r.error for r in results)
    assert all("05_final" in r.stages for r in results)
    assert "blank" in caplog.text


def test_repr_names_the_label():
    assert "coarse-to-fine" in repr(CoarseToFine())


def test_self_adapting_correction_beats_plain_on_small_nodules():
    """Centre slices of the default suite whose nodule covers < 10% of the ROI."""
    fine, plain, iterations = [], [], []
    for index in range(100):
        phantom = generate(suite_spec(42, index))
        center = phantom.spec.center_index
        img, gt, roi = phantom.images[center], phantom.ground_truth[center], phantom.roi_box

        result = segment_slice(img, roi, DEFAULT)
        if result.trace is not None:
            iterations.append(result.trace.iterations)
        if gt.sum() >= 0.1 * roi.area:
            continue
        fine.append(dsc(result.mask, gt))
        plain.append(dsc(PlainThresholding().segment_slice(img, roi, DEFAULT).mask, gt))

    assert len(fine) >= 30
    assert np.mean(fine) - np.mean(plain) >= 0.10

    assert max(iterations) <= DEFAULT.max_iter + 1
    assert np.mean(np.array(iterations) <= 10) >= 0.95
