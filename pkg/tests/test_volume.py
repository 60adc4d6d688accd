# tests/test_volume.py
import numpy as np
import pytest

from nodulemorph.config import DEFAULT, PipelineConfig
from nodulemorph.exceptions import SegmentationFailure
from nodulemorph.metrics import dsc
from nodulemorph.models import BBox, GrayImage
from nodulemorph.phantom import PhantomKind, PhantomSpec, generate
from nodulemorph.pipeline import segment_slice
from nodulemorph.volume import SliceStack, choose_center, segment_slices_independently, segment_stack

# Allow pytest fixtures to intentionally shadow outer-scope names (e.g. `stack`).
# pylint: disable=redefined-outer-name

SIZE = 40
ROI = BBox(0, 0, SIZE, SIZE)
CLEAN = PipelineConfig(smoothing_sigma=0)


def _slice(radius, cx=20, cy=20):
    pixels = np.full((SIZE, SIZE), 200, dtype=np.uint16)
    if radius > 0:
        ys, xs = np.mgrid[0:SIZE, 0:SIZE]
        pixels[np.hypot(xs - cx, ys - cy) <= radius] = 800
    return GrayImage(pixels)


@pytest.fixture
def stack():
    """Five slices: blank, small, large, small, blank."""
    images = [_slice(0), _slice(4), _slice(8), _slice(5), _slice(0)]
    return SliceStack(images, [ROI] * 5)


# --- Stack validation ---


def test_stack_needs_slices():
    with pytest.raises(ValueError):
        SliceStack([], [])


def test_stack_needs_one_box_per_slice():
    with pytest.raises(ValueError):
        SliceStack([_slice(3), _slice(3)], [ROI])


def test_stack_needs_equal_shapes():
    other = GrayImage(np.zeros((SIZE, SIZE + 1), dtype=np.uint16))
    with pytest.raises(ValueError):
        SliceStack([_slice(3), other], [ROI, ROI])


def test_stack_rejects_center_out_of_range():
    with pytest.raises(ValueError):
        SliceStack([_slice(3)], [ROI], center_index=1)


# --- Propagation ---


def test_center_is_largest_slice(stack):
    assert choose_center(stack, CLEAN) == 2


def test_manifest_center_wins(stack):
    stack.center_index = 3
    assert choose_center(stack, CLEAN) == 3


def test_single_slice_equals_2d():
    img = _slice(7, 18, 22)
    results = segment_stack(SliceStack([img], [ROI]), DEFAULT)
    assert len(results) == 1
    assert np.array_equal(results[0].mask, segment_slice(img, ROI, DEFAULT).mask)


def test_slices_inherit_boxes_from_the_center(stack):
    results = segment_stack(stack, CLEAN)
    assert [r.slice_index for r in results] == [0, 1, 2, 3, 4]
    assert results[2].box == ROI

    for inner, outer in ((2, 1), (2, 3)):
        expected = results[inner].region.bbox.dilate(CLEAN.margin, (SIZE, SIZE)).intersect(ROI)
        assert results[outer].box == expected


def test_blank_slices_are_empty_and_keep_last_box(stack):
    results = segment_stack(stack, CLEAN)
    for i in (0, 4):
        assert not results[i].ok
        assert not results[i].mask.any()
        assert results[i].error
    assert results[0].box == results[1].region.bbox.dilate(CLEAN.margin, (SIZE, SIZE)).intersect(ROI)
    assert results[4].box == results[3].region.bbox.dilate(CLEAN.margin, (SIZE, SIZE)).intersect(ROI)


def test_gap_slice_does_not_reset_the_box():
    images = [_slice(6), _slice(8), _slice(0), _slice(5)]
    results = segment_stack(SliceStack(images, [ROI] * 4, center_index=1), CLEAN)
    assert not results[2].ok
    # Slice 3 still inherits from slice 1, the last good one
    assert results[3].box == results[1].region.bbox.dilate(CLEAN.margin, (SIZE, SIZE)).intersect(ROI)
    assert results[3].ok


def test_inherited_boxes_stay_in_roi():
    roi = BBox(10, 10, 30, 30)
    images = [_slice(6), _slice(9), _slice(6)]
    results = segment_stack(SliceStack(images, [roi] * 3), CLEAN)
    for r in results:
        assert r.box.intersect(roi) == r.box
        assert not (r.mask & ~roi.mask((SIZE, SIZE))).any()


def test_failed_center_raises():
    blank = SliceStack([_slice(0)] * 3, [ROI] * 3, center_index=1)
    with pytest.raises(SegmentationFailure):
        segment_stack(blank, CLEAN)


def test_independent_slices_use_the_roi(stack):
    results = segment_slices_independently(stack, CLEAN)
    assert all(r.box == ROI for r in results)
    assert [r.ok for r in results] == [False, True, True, True, False]


def test_propagation_helps_the_smallest_slices():
    """A vessel beside the nodule outgrows its top and bottom cross-sections."""
    scored = []
    for seed in range(25):
        phantom = generate(PhantomSpec(seed=seed, nodule_diameter_px=16, n_slices=5, crossing_vessel_gap_px=14))
        propagated = segment_stack(phantom.stack, DEFAULT)
        independent = segment_slices_independently(phantom.stack, DEFAULT)
        for gt, a, b in zip(phantom.ground_truth, propagated, independent):
            scored.append((int(gt.sum()), dsc(a.mask, gt), dsc(b.mask, gt)))

    scored.sort(key=lambda s: s[0])
    smallest = scored[: len(scored) // 4]
    gain = np.mean([s[1] for s in smallest]) - np.mean([s[2] for s in smallest])
    assert gain >= 0.05


def test_propagation_keeps_the_halo_of_mixed_nodules():
    recalls = []
    for seed in range(10):
        phantom = generate(PhantomSpec(seed=seed, kind=PhantomKind.MGGN, nodule_diameter_px=20, n_slices=5))
        masks = np.stack([r.mask for r in segment_stack(phantom.stack, DEFAULT)])
        halo = np.stack(phantom.halo)
        recalls.append((masks & halo).sum() / halo.sum())
    assert np.mean(recalls) >= 0.85
