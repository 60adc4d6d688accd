# tests/test_morphology.py
import time
from fractions import Fraction

import numpy as np
import pytest

from nodulemorph.exceptions import DegenerateInputError
from nodulemorph.models import BBox, GrayImage
from nodulemorph.morphology import (
    Region,
    StructuringElement,
    binarize_mean,
    closing,
    connected_components,
    opening,
    otsu_binarize,
    otsu_threshold,
    rasterize_segment,
)


def _image(rows):
    return GrayImage(np.array(rows, dtype=np.uint16))


def _full(img):
    return BBox(0, 0, img.width, img.height)


def _otsu_oracle(values):
    """Exhaustive search over every split of the distinct values, smallest wins ties."""
    values = np.asarray(values, dtype=np.int64).ravel()
    best_t, best_score = None, None
    for t in np.unique(values)[:-1].tolist():
        fg = values[values > t]
        bg = values[values <= t]
        # w0 * w1 * (m1 - m0)^2 scaled by N^2, kept exact with fractions
        diff = Fraction(int(fg.sum()), fg.size) - Fraction(int(bg.sum()), bg.size)
        score = bg.size * fg.size * diff * diff
        if best_score is None or score > best_score:
            best_t, best_score = t, score
    return best_t


# --- Thresholding ---


def test_binarize_mean_example():
    img = _image([[10, 10], [10, 50]])
    assert binarize_mean(img, _full(img)).tolist() == [[False, False], [False, True]]


def test_binarize_mean_constant_is_empty():
    img = _image([[7] * 4] * 4)
    assert not binarize_mean(img, _full(img)).any()


def test_binarize_mean_stays_inside_roi():
    img = _image(np.arange(36).reshape(6, 6))
    roi = BBox(1, 1, 4, 4)
    mask = binarize_mean(img, roi)
    assert not mask[~roi.mask(mask.shape)].any()


def test_binarize_mean_rejects_bad_roi():
    img = _image([[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        binarize_mean(img, BBox(0, 0, 3, 2))


def test_binarize_mean_with_reference_box():
    img = _image([[10, 10, 10, 10, 40, 50]])
    roi = BBox(4, 0, 6, 1)
    assert binarize_mean(img, roi)[0].tolist() == [False] * 5 + [True]
    assert binarize_mean(img, roi, _full(img))[0].tolist() == [False] * 4 + [True, True]


def test_otsu_binarize_with_reference_box():
    img = _image([[10, 10, 10, 10, 200, 300]])
    roi = BBox(4, 0, 6, 1)
    assert otsu_binarize(img, roi)[0].tolist() == [False] * 5 + [True]
    assert otsu_binarize(img, roi, _full(img))[0].tolist() == [False] * 4 + [True, True]


def test_otsu_two_level():
    img = _image([[10, 10, 200, 200]])
    t = otsu_threshold(img, _full(img))
    assert 10 <= t < 200
    assert t == 10


def test_otsu_constant_roi_is_degenerate():
    img = _image([[5, 5], [5, 5]])
    with pytest.raises(DegenerateInputError):
        otsu_threshold(img, _full(img))


def test_otsu_matches_exhaustive_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(200):
        img = GrayImage(rng.integers(0, 256, size=(16, 16)).astype(np.uint16))
        assert otsu_threshold(img, _full(img)) == _otsu_oracle(img.pixels)
    # Oracle dominates the runtime; generous bound
    assert time.perf_counter() - start < 30


def test_otsu_oracle_agrees_on_sixteen_bit_values():
    rng = np.random.default_rng(7)
    for _ in range(20):
        pixels = rng.choice([100, 1000, 1200, 5000, 60000], size=(16, 16)).astype(np.uint16)
        img = GrayImage(pixels)
        assert otsu_threshold(img, _full(img)) == _otsu_oracle(pixels)


# --- Components ---


def test_diagonal_pixels_are_one_component():
    mask = np.array([[1, 0], [0, 1]], dtype=bool)
    regions = connected_components(mask)
    assert len(regions) == 1
    assert regions[0].area == 2


def test_empty_mask_has_no_components():
    assert connected_components(np.zeros((5, 5), dtype=bool)) == []


def test_components_are_in_raster_order():
    mask = np.zeros((6, 6), dtype=bool)
    mask[4, 0] = True
    mask[0, 5] = True
    mask[2, 2:4] = True
    regions = connected_components(mask)
    assert [r.bbox.to_list() for r in regions] == [[5, 0, 6, 1], [2, 2, 4, 3], [0, 4, 1, 5]]


def test_region_properties():
    mask = np.zeros((5, 5), dtype=bool)
    mask[1:4, 1:4] = True
    region = Region(mask)
    assert region.area == 9
    assert region.centroid == (2.0, 2.0)
    assert region.bbox == BBox(1, 1, 4, 4)
    assert (2, 2) not in region.boundary
    assert len(region.boundary) == 8


# --- Opening / closing ---


def test_closing_fills_gap_between_bars():
    mask = np.zeros((10, 10), dtype=bool)
    mask[:, 3] = True
    mask[:, 5] = True
    closed = closing(mask, StructuringElement(1))
    assert closed[1:9, 4].all()


def test_closing_is_extensive_at_borders():
    rng = np.random.default_rng(5)
    for _ in range(20):
        mask = rng.random((12, 12)) > 0.6
        assert not (mask & ~closing(mask, StructuringElement(2))).any()


def test_opening_is_idempotent_and_anti_extensive():
    rng = np.random.default_rng(6)
    se = StructuringElement(1)
    for _ in range(20):
        mask = rng.random((15, 15)) > 0.4
        once = opening(mask, se)
        assert not (once & ~mask).any()
        assert np.array_equal(opening(once, se), once)


def test_opening_removes_isolated_pixel():
    mask = np.zeros((7, 7), dtype=bool)
    mask[3, 3] = True
    assert not opening(mask, StructuringElement(1)).any()


def test_structuring_element_radius_checked():
    with pytest.raises(ValueError):
        StructuringElement(0)


# --- Segments ---


def test_segment_diagonal():
    assert rasterize_segment((0, 0), (2, 2)) == [(0, 0), (1, 1), (2, 2)]


def test_segment_single_point():
    assert rasterize_segment((3, 3), (3, 3)) == [(3, 3)]


def test_segment_properties():
    rng = np.random.default_rng(11)
    for _ in range(200):
        p = tuple(int(v) for v in rng.integers(-20, 20, size=2))
        q = tuple(int(v) for v in rng.integers(-20, 20, size=2))
        forward = rasterize_segment(p, q)
        backward = rasterize_segment(q, p)
        assert forward[0] == p and forward[-1] == q
        assert set(forward) == set(backward)
        for (x0, y0), (x1, y1) in zip(forward, forward[1:]):
            assert max(abs(x1 - x0), abs(y1 - y0)) == 1
