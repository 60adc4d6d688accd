"""
Fine segmentation: dividing-line noise reduction and self-adapting box correction.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .coarse import coarse_segment, filter_by_size
from .config import PipelineConfig
from .exceptions import SegmentationFailure
from .models import BBox, BinaryMask, CorrectionTrace, GrayImage, Point, StopReason
from .morphology import EIGHT, Region, canonical_pairs, digital_segments, largest_region, rasterize_segment

logger = logging.getLogger(__name__)


@dataclass
class DividingLine:
    """A short chord whose removal splits a region, and the resulting split."""

    p: Point
    q: Point
    length_px: float
    chord: List[Point]
    kept: Region
    removed: List[Region]


def _gate(length: float) -> float:
    """Smallest area a piece cut off by a chord of `length` must exceed to be noise."""
    return math.pi * ((length + 1) / 2) ** 2


def _candidate_pairs(region: Region, alpha: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Boundary pairs closer than alpha whose chord stays inside the region,
    sorted by length then lexicographically by (p, q).
    """
    pts = np.array(region.boundary, dtype=np.int64)
    if len(pts) < 2:
        empty = np.empty((0, 2), dtype=np.int64)
        return empty, empty, np.empty(0)

    i, j = np.triu_indices(len(pts), k=1)
    diff = pts[j] - pts[i]
    length = np.hypot(diff[:, 0], diff[:, 1])
    close = length < alpha
    p, q = canonical_pairs(pts[i[close]], pts[j[close]])
    length = length[close]
    if length.size == 0:
        return p, q, length

    xs, ys = digital_segments(p, q)
    inside = region.mask[ys, xs].all(axis=1)
    # Chords of adjacent pixels contain no third pixel and cannot split anything
    long_enough = np.abs(q - p).max(axis=1) >= 2
    keep = inside & long_enough
    p, q, length = p[keep], q[keep], length[keep]

    order = np.lexsort((q[:, 1], q[:, 0], p[:, 1], p[:, 0], length))
    return p[order], q[order], length[order]


def find_dividing_line(region: Region, alpha: float) -> Optional[DividingLine]:
    """
    First valid dividing line of `region`, or None.

    A line is valid when its chord disconnects the region and at least one
    piece other than the nodule piece is larger than the area gate.
    """
    box = region.bbox.dilate(1, region.mask.shape)
    crop = region.mask[box.slices]
    cx, cy = region.centroid
    centre = (int(round(cy)) - box.y0, int(round(cx)) - box.x0)

    p_all, q_all, lengths = _candidate_pairs(region, alpha)
    for p, q, length in zip(p_all.tolist(), q_all.tolist(), lengths.tolist()):
        chord = rasterize_segment(tuple(p), tuple(q))
        cut = crop.copy()
        for x, y in chord:
            cut[y - box.y0, x - box.x0] = False

        labels, n = ndimage.label(cut, structure=EIGHT)
        if n < 2:
            continue

        sizes = np.bincount(labels.ravel())[1:]
        if labels[centre] > 0:
            nodule = int(labels[centre])
        else:
            nodule = int(np.argmax(sizes)) + 1

        gate = _gate(length)
        noise = [k for k in range(1, n + 1) if k != nodule and sizes[k - 1] > gate]
        if not noise:
            continue

        removed = []
        kept = region.mask.copy()
        for k in noise:
            piece = np.zeros_like(region.mask)
            piece[box.slices] = labels == k
            kept &= ~piece
            removed.append(Region(piece))

        return DividingLine(tuple(p), tuple(q), length, chord, Region(kept), removed)
    return None


def reduce_surrounding_noise(region: Region, cfg: PipelineConfig) -> Region:
    """
    Cuts off attachments joined to the nodule by necks shorter than alpha.

    Applies the shortest valid dividing line first and repeats until none is left.
    """
    current = region
    while True:
        line = find_dividing_line(current, cfg.alpha)
        if line is None:
            return current
        logger.debug(
            "Dividing line %s-%s (d=%.2f) removes %d px",
            line.p,
            line.q,
            line.length_px,
            sum(r.area for r in line.removed),
        )
        current = line.kept


def ggo_evenness_check(
    ring: BinaryMask,
    solid: Region,
    img: GrayImage,
    cfg: PipelineConfig,
    background: BinaryMask,
) -> bool:
    """
    True when `ring` evenly surrounds `solid` with a ground-glass intensity.

    Args:
        ring: Pixels the shrunken box dropped around the solid structure.
        solid: Region whose centroid anchors the angular sectors and whose
            mean intensity bounds the ring from above.
        img: Intensities to average.
        cfg: Supplies tau and the sector count.
        background: ROI pixels outside the nodule; their mean bounds the ring from below.
    """
    if not ring.any() or not background.any():
        return False

    cx, cy = solid.centroid
    ys, xs = np.nonzero(ring)
    angles = np.arctan2(ys - cy, xs - cx)
    sectors = np.floor((angles + np.pi) / (2 * np.pi / cfg.n_sectors)).astype(int) % cfg.n_sectors
    counts = np.bincount(sectors, minlength=cfg.n_sectors).astype(float)
    cv = counts.std() / counts.mean()

    pixels = img.pixels.astype(float)
    ring_mean = pixels[ring].mean()
    background_mean = pixels[background].mean()
    solid_mean = pixels[solid.mask].mean()
    logger.debug(
        "Evenness: cv=%.3f ring=%.1f background=%.1f solid=%.1f",
        cv,
        ring_mean,
        background_mean,
        solid_mean,
    )
    return bool(cv <= cfg.tau and background_mean < ring_mean < solid_mean)


def threshold_box(
    img: GrayImage,
    box: BBox,
    cfg: PipelineConfig,
    wall: Optional[BinaryMask] = None,
    reference: Optional[BBox] = None,
) -> Optional[Region]:
    """
    Largest region left in `box` after coarse segmentation and noise reduction.

    Regions that noise reduction shrinks to `s_m` pixels or fewer are dropped.
    """
    regions = coarse_segment(img, box, cfg, wall, reference)
    reduced = [reduce_surrounding_noise(r, cfg) for r in regions]
    return largest_region(filter_by_size(reduced, cfg.s_m))


def find_box(region: Region) -> BBox:
    """Tight box of `region` grown by one pixel, clamped to the image."""
    return region.bbox.dilate(1, region.mask.shape)


def ground_glass_contour(
    img: GrayImage,
    cur: Region,
    box: BBox,
    ring: BinaryMask,
    background: BinaryMask,
    cfg: PipelineConfig,
    wall: Optional[BinaryMask] = None,
) -> Region:
    """
    Grows `cur` over the faint pixels of its ground-glass rim.

    Pixels of `box` within `cfg.margin` of the tight box of `cur` join when
    they are brighter than the midpoint of the background and ring means and
    8-connected to `cur`. Attachments are then cut by noise reduction.
    """
    pixels = img.pixels.astype(float)
    level = (pixels[background].mean() + pixels[ring].mean()) / 2

    near = cur.bbox.dilate(cfg.margin, img.shape).intersect(box)
    faint = near.mask(img.shape) & (pixels > level)
    if wall is not None:
        faint &= ~wall
    labels, _ = ndimage.label(faint | cur.mask, structure=EIGHT)
    touching = np.unique(labels[cur.mask])
    grown = np.isin(labels, touching[touching > 0])
    logger.debug("Ground-glass contour at %.1f adds %d px", level, int(np.count_nonzero(grown & ~cur.mask)))
    return reduce_surrounding_noise(Region(grown), cfg)


def self_adapting_correct(
    img: GrayImage,
    original_box: BBox,
    cfg: PipelineConfig,
    wall: Optional[BinaryMask] = None,
    entry_reference: Optional[BBox] = None,
) -> Tuple[Region, CorrectionTrace]:
    """
    Shrinks the box around the nodule until it is close enough.

    Args:
        img: ROI crop (smoothed if smoothing is on).
        original_box: Starting box inside `img`.
        cfg: Pipeline configuration.
        wall: Lung-wall pixels excluded from every threshold step.
        entry_reference: Box whose pixels set the threshold of the first step,
            e.g. the manifest ROI when `original_box` was inherited. Later
            steps threshold on their own box.

    Returns:
        The final contour and the trace of visited boxes.

    Raises:
        SegmentationFailure: if no region larger than s_m survives in `original_box`.
    """
    trace = CorrectionTrace()

    cur_box = original_box
    cur = threshold_box(img, cur_box, cfg, wall, entry_reference)
    if cur is None:
        raise SegmentationFailure(f"No candidate region in box {original_box.to_list()}.")
    trace.record(cur_box, cur.area)

    if cur.area / cur_box.area >= cfg.rho:
        trace.stop_reason = StopReason.BOX_CONVERGED
        return cur, trace

    next_box = find_box(cur)
    iterations = 0
    while next_box.area < cur_box.area / cfg.epsilon:
        if iterations >= cfg.max_iter:
            trace.stop_reason = StopReason.MAX_ITER
            return cur, trace
        iterations += 1

        nxt = threshold_box(img, next_box, cfg, wall)
        if nxt is None:
            trace.stop_reason = StopReason.MIN_SIZE_GUARD
            return cur, trace

        ring = cur.mask & ~nxt.mask
        if cfg.ggo_stop and ring.any():
            background = original_box.mask(img.shape) & ~cur.mask
            if ggo_evenness_check(ring, nxt, img, cfg, background):
                trace.stop_reason = StopReason.GGO_EVENNESS
                return ground_glass_contour(img, cur, cur_box, ring, background, cfg, wall), trace

        cur_box, cur = next_box, nxt
        trace.record(cur_box, cur.area)
        if cur.area / cur_box.area >= cfg.rho:
            break
        next_box = find_box(cur)

    trace.stop_reason = StopReason.BOX_CONVERGED
    return cur, trace
