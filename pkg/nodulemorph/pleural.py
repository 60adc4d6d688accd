"""
Lung-wall removal by chord cover.

Inside the lung the nodule is the convex side of the grey/black interface,
so chords drawn between interface pixels through foreground cover it. Wall
tissue sits on the concave side and stays uncovered.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy import ndimage
from skimage.morphology import convex_hull_image

from .config import PleuralRule
from .models import BBox, BinaryMask, GrayImage, Point
from .morphology import EIGHT, FOUR, binarize_mean, canonical_pairs, connected_components, digital_segments

logger = logging.getLogger(__name__)

# Number of chords rasterised per vectorised batch
_CHUNK = 4096

# Share of a chord's pixels that must lie off the cutting line for it to count
MIN_INTERIOR_SHARE = 0.5


@dataclass
class CuttingLine:
    """Foreground pixels touching the background inside the ROI, in row-major order."""

    points: List[Point] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def mask(self, shape: Tuple[int, int]) -> BinaryMask:
        out = np.zeros(shape, dtype=bool)
        if self.points:
            xs, ys = zip(*self.points)
            out[list(ys), list(xs)] = True
        return out


def extract_cutting_line(mask: BinaryMask, roi: BBox) -> CuttingLine:
    """
    Foreground pixels of `roi` with a background 4-neighbour that also lies in `roi`.

    The ROI edge is not an interface: neighbours outside it are ignored.
    """
    inside = roi.mask(mask.shape)
    fg = mask & inside
    bg = inside & ~mask
    if not fg.any() or not bg.any():
        return CuttingLine()

    touching = ndimage.binary_dilation(bg, structure=FOUR) & fg
    ys, xs = np.nonzero(touching)
    return CuttingLine(list(zip(xs.tolist(), ys.tolist())))


def _chord_cover(region: BinaryMask, interior: BinaryMask, points: np.ndarray) -> BinaryMask:
    """
    Pixels of all-foreground chords between `points` that run mostly through `interior`.

    Chords hugging a concave edge only graze the interior at staircase steps
    and do not count.
    """
    covered = np.zeros_like(region)
    first, second = np.triu_indices(len(points), k=1)
    for start in range(0, first.size, _CHUNK):
        a, b = canonical_pairs(points[first[start:start + _CHUNK]], points[second[start:start + _CHUNK]])
        xs, ys = digital_segments(a, b)
        steps = np.abs(b - a).max(axis=1)
        real = np.arange(xs.shape[1])[None, :] <= steps[:, None]
        inside = region[ys, xs].all(axis=1)
        through = (interior[ys, xs] & real).sum(axis=1)
        evidence = inside & (through >= MIN_INTERIOR_SHARE * (steps + 1))
        if evidence.any():
            covered[ys[evidence], xs[evidence]] = True
    return covered


def _retain(region: BinaryMask, on_line: BinaryMask, max_points: int, rule: PleuralRule) -> BinaryMask:
    ys, xs = np.nonzero(on_line)
    interior = region & ~on_line
    if xs.size < 2 or (rule is PleuralRule.HULL and not interior.any()):
        # No chord can carry evidence either way
        return region

    points = np.stack([xs, ys], axis=1)
    if len(points) > max_points:
        step = math.ceil(len(points) / max_points)
        points = points[::step]

    if rule is PleuralRule.CHORD:
        # Every pixel of an all-foreground chord passes the share test
        return _chord_cover(region, region, points)

    covered = _chord_cover(region, interior, points)
    keep = np.zeros_like(region)
    for part in connected_components(covered):
        keep |= convex_hull_image(part.mask) & region
    # Chord endpoints can miss single boundary pixels next to the hull
    keep |= ndimage.binary_dilation(keep, structure=EIGHT) & on_line
    return keep


def retain_chord_covered(
    fg: BinaryMask, roi: BBox, max_line_points: int = 1024, rule: PleuralRule = PleuralRule.HULL
) -> BinaryMask:
    """
    Drops foreground that no interior chord between cutting-line pixels covers.

    Each 8-connected region is handled on its own; a chord joining two regions
    would have to cross background anyway. Regions with fewer than two
    cutting-line pixels carry no wall evidence and are kept whole.

    With `PleuralRule.CHORD` a pixel survives iff it lies on an all-foreground
    chord. `PleuralRule.HULL` only counts chords with at least
    MIN_INTERIOR_SHARE of their pixels off the cutting line, keeps the convex
    hull of each covered component inside the region, and adds cutting-line
    pixels 8-adjacent to what is kept.
    """
    fg = fg & roi.mask(fg.shape)
    line = extract_cutting_line(fg, roi)
    if not line.points:
        return fg.copy()

    on_line = line.mask(fg.shape)
    keep = np.zeros_like(fg)
    for region in connected_components(fg):
        keep |= _retain(region.mask, on_line & region.mask, max_line_points, rule)

    logger.debug(
        "Pleural removal on %s: %d of %d foreground pixels kept",
        roi.to_list(),
        int(keep.sum()),
        int(fg.sum()),
    )
    return keep


def remove_pleural_surface(
    img: GrayImage, roi: BBox, max_line_points: int = 1024, rule: PleuralRule = PleuralRule.HULL
) -> BinaryMask:
    """
    Mean-binarised ROI foreground with the lung wall removed.

    Args:
        img: ROI crop.
        roi: Box inside `img` to binarise.
        max_line_points: Cutting-line points kept per region before pairing.
        rule: Which covered pixels are retained.
    """
    return retain_chord_covered(binarize_mean(img, roi), roi, max_line_points, rule)


def wall_mask(
    img: GrayImage, roi: BBox, max_line_points: int = 1024, rule: PleuralRule = PleuralRule.HULL
) -> BinaryMask:
    """Foreground pixels classified as lung wall."""
    fg = binarize_mean(img, roi)
    return fg & ~retain_chord_covered(fg, roi, max_line_points, rule)
