"""
Raster kernels shared by every pipeline stage.

Conventions: foreground is 8-connected and background 4-connected. Every
threshold is strict (value > t), so a constant patch is all background.
Pixels outside the image count as background.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage
from skimage.morphology import disk

from .exceptions import DegenerateInputError
from .models import BBox, BinaryMask, GrayImage, Point

logger = logging.getLogger(__name__)

EIGHT = np.ones((3, 3), dtype=bool)
FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class StructuringElement:
    """Digital disk of the given radius."""

    radius: int = 2

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"Structuring element radius must be >= 1, got {self.radius}.")

    @property
    def footprint(self) -> np.ndarray:
        return disk(self.radius).astype(bool)


class Region:
    """
    One 8-connected foreground component, stored as a full-image mask.
    """

    def __init__(self, mask: BinaryMask):
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("Region cannot be empty.")
        self.mask = mask

    def __repr__(self) -> str:
        return f"<Region area={self.area} bbox={self.bbox.to_list()}>"

    @cached_property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask))

    @cached_property
    def centroid(self) -> Tuple[float, float]:
        """(x, y) mean of the pixel coordinates."""
        ys, xs = np.nonzero(self.mask)
        return float(xs.mean()), float(ys.mean())

    @cached_property
    def bbox(self) -> BBox:
        return BBox.tight(self.mask)

    @cached_property
    def boundary(self) -> List[Point]:
        """Pixels with a 4-neighbour in the background, in row-major order."""
        ys, xs = np.nonzero(boundary_mask(self.mask))
        return list(zip(xs.tolist(), ys.tolist()))


def boundary_mask(mask: BinaryMask) -> BinaryMask:
    """Foreground pixels with at least one background 4-neighbour."""
    inner = ndimage.binary_erosion(mask, structure=FOUR, border_value=0)
    return mask & ~inner


def _check_roi(img: GrayImage, roi: BBox) -> None:
    if roi.is_empty:
        raise ValueError(f"ROI {roi.to_list()} is empty.")
    if not roi.fits(img.shape):
        raise ValueError(f"ROI {roi.to_list()} does not fit image of shape {img.shape}.")


def binarize_mean(img: GrayImage, roi: BBox, reference: Optional[BBox] = None) -> BinaryMask:
    """
    Marks ROI pixels strictly brighter than the mean of `reference`.

    `reference` defaults to the ROI itself.
    """
    _check_roi(img, roi)
    reference = roi if reference is None else reference
    _check_roi(img, reference)
    patch = img.pixels[roi.slices].astype(np.int64)
    ref = img.pixels[reference.slices].astype(np.int64)
    out = np.zeros(img.shape, dtype=bool)
    # v > sum / n  <=>  v * n > sum, kept in integers
    out[roi.slices] = patch * ref.size > int(ref.sum())
    return out


def otsu_threshold(img: GrayImage, roi: BBox) -> int:
    """
    Threshold maximising the between-class variance of the ROI histogram.

    Foreground is `value > t`. Ties go to the smallest threshold.

    Raises:
        DegenerateInputError: if the ROI holds fewer than two distinct values.
    """
    _check_roi(img, roi)
    values, counts = np.unique(img.pixels[roi.slices], return_counts=True)
    if values.size < 2:
        raise DegenerateInputError(
            f"ROI {roi.to_list()} holds a single intensity; Otsu threshold is undefined."
        )
    return otsu_from_histogram(values, counts)


def otsu_from_histogram(values: np.ndarray, counts: np.ndarray) -> int:
    """Otsu threshold over distinct sorted `values` with their `counts`."""
    values = values.astype(np.int64)
    counts = counts.astype(np.int64)
    n_total = int(counts.sum())
    s_total = int((counts * values).sum())

    n0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(counts * values)[:-1]
    n1 = n_total - n0

    # between-class variance up to the constant 1/N^4: (N*S0 - n0*S)^2 / (n0*n1)
    num = n_total * s0.astype(float) - n0.astype(float) * s_total
    score = num * num / (n0.astype(float) * n1.astype(float))

    candidates = np.flatnonzero(score >= score.max() * (1 - 1e-9))

    def exact(k: int) -> Fraction:
        diff = n_total * int(s0[k]) - int(n0[k]) * s_total
        return Fraction(diff * diff, int(n0[k]) * int(n1[k]))

    best_k = int(candidates[0])
    best = exact(best_k)
    for k in candidates[1:]:
        score_k = exact(int(k))
        if score_k > best:
            best_k, best = int(k), score_k
    return int(values[best_k])


def otsu_binarize(img: GrayImage, roi: BBox, reference: Optional[BBox] = None) -> BinaryMask:
    """
    Otsu foreground of the ROI, falling back to the mean on a flat histogram.

    The threshold is computed on `reference` (default: the ROI) and applied
    to the ROI pixels.
    """
    _check_roi(img, roi)
    reference = roi if reference is None else reference
    try:
        t = otsu_threshold(img, reference)
    except DegenerateInputError:
        logger.debug("Flat ROI %s, falling back to mean threshold", reference.to_list())
        return binarize_mean(img, roi, reference)
    out = np.zeros(img.shape, dtype=bool)
    out[roi.slices] = img.pixels[roi.slices] > t
    return out


def connected_components(mask: BinaryMask) -> List[Region]:
    """8-connected components ordered by their first pixel in raster order."""
    labels, n = ndimage.label(mask, structure=EIGHT)
    if n == 0:
        return []
    flat = np.arange(labels.size).reshape(labels.shape)
    firsts = ndimage.minimum(flat, labels, index=np.arange(1, n + 1))
    return [Region(labels == k + 1) for k in np.argsort(firsts, kind="stable")]


def largest_region(regions: List[Region]) -> Optional[Region]:
    """Largest region; the earliest one wins a tie."""
    if not regions:
        return None
    return max(regions, key=lambda r: r.area)


def opening(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Erosion then dilation. Never adds pixels."""
    fp = se.footprint
    eroded = ndimage.binary_erosion(mask, structure=fp, border_value=0)
    return ndimage.binary_dilation(eroded, structure=fp, border_value=0)


def closing(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Dilation then erosion. Never removes pixels, image borders included."""
    fp = se.footprint
    r = se.radius
    padded = np.pad(np.asarray(mask, dtype=bool), r)
    dilated = ndimage.binary_dilation(padded, structure=fp)
    closed = ndimage.binary_erosion(dilated, structure=fp, border_value=0)
    return closed[r:-r, r:-r]


def digital_segments(starts: np.ndarray, ends: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rasterises many segments at once.

    Args:
        starts: (m, 2) integer array of (x, y) start points.
        ends: (m, 2) integer array of (x, y) end points.

    Returns:
        xs, ys arrays of shape (m, L + 1), L being the longest segment's step
        count. Shorter segments repeat their end point.
    """
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, 2)
    ends = np.asarray(ends, dtype=np.int64).reshape(-1, 2)
    delta = ends - starts
    n = np.abs(delta).max(axis=1)
    length = int(n.max()) if n.size else 0

    k = np.minimum(np.arange(length + 1)[None, :], n[:, None])
    denom = 2 * np.maximum(n, 1)[:, None]
    xs = starts[:, :1] + (2 * k * delta[:, :1] + n[:, None]) // denom
    ys = starts[:, 1:] + (2 * k * delta[:, 1:] + n[:, None]) // denom
    return xs, ys


def canonical_pairs(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Orders each (a, b) pair so the lexicographically smaller (x, y) comes first."""
    swap = (b[:, 0] < a[:, 0]) | ((b[:, 0] == a[:, 0]) & (b[:, 1] < a[:, 1]))
    first = np.where(swap[:, None], b, a)
    second = np.where(swap[:, None], a, b)
    return first, second


def rasterize_segment(p: Point, q: Point) -> List[Point]:
    """
    8-connected digital segment from p to q, both endpoints included.

    The pixel set does not depend on the direction of travel.
    """
    swap = tuple(q) < tuple(p)
    a, b = (q, p) if swap else (p, q)
    xs, ys = digital_segments(np.array([a]), np.array([b]))
    points = list(zip(xs[0].tolist(), ys[0].tolist()))
    return points[::-1] if swap else points
