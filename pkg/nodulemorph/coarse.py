"""
Coarse segmentation: candidate-pixel selection and size filtering.
"""
import logging
from typing import List, Optional

from .config import CoarseMethod, PipelineConfig
from .models import BBox, BinaryMask, GrayImage
from .morphology import (
    Region,
    StructuringElement,
    binarize_mean,
    closing,
    connected_components,
    opening,
    otsu_binarize,
)

logger = logging.getLogger(__name__)


def deformable_mask(
    img: GrayImage,
    roi: BBox,
    se_radius: int,
    wall: Optional[BinaryMask] = None,
    reference: Optional[BBox] = None,
) -> BinaryMask:
    """
    Otsu foreground, closed, minus the wall, then opened.

    The Otsu threshold comes from `reference` when given, else from `roi`.
    """
    se = StructuringElement(se_radius)
    closed = closing(otsu_binarize(img, roi, reference), se) & roi.mask(img.shape)
    if wall is not None:
        closed &= ~wall
    return opening(closed, se)


def candidate_mask(
    img: GrayImage,
    roi: BBox,
    cfg: PipelineConfig,
    wall: Optional[BinaryMask] = None,
    reference: Optional[BBox] = None,
) -> BinaryMask:
    """Candidate nodule pixels inside `roi` for the configured coarse method."""
    if cfg.coarse_method is CoarseMethod.PLAIN_THRESHOLD:
        fg = binarize_mean(img, roi, reference)
        if wall is not None:
            fg &= ~wall
        return fg
    return deformable_mask(img, roi, cfg.se_radius, wall, reference)


def filter_by_size(regions: List[Region], s_m: int) -> List[Region]:
    """Keeps regions strictly larger than `s_m` pixels."""
    return [r for r in regions if r.area > s_m]


def coarse_segment(
    img: GrayImage,
    roi: BBox,
    cfg: PipelineConfig,
    wall: Optional[BinaryMask] = None,
    reference: Optional[BBox] = None,
) -> List[Region]:
    """
    Prospective nodule areas inside `roi`.

    Args:
        img: ROI crop (already smoothed if smoothing is on).
        roi: Box to segment.
        cfg: Pipeline configuration; selects the coarse method and s_m.
        wall: Lung-wall pixels to exclude, as produced by pleural removal.
        reference: Box the threshold is computed on; defaults to `roi`.

    Returns:
        Regions with area > s_m in raster order of their first pixel. Empty
        when nothing survives.
    """
    regions = filter_by_size(connected_components(candidate_mask(img, roi, cfg, wall, reference)), cfg.s_m)
    logger.debug(
        "Coarse %s on %s: %d candidate regions",
        cfg.coarse_method.value,
        roi.to_list(),
        len(regions),
    )
    return regions
