"""
Single-slice pipeline: smoothing, lung-wall removal, coarse and fine segmentation.
"""
import logging
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .coarse import candidate_mask
from .config import PipelineConfig
from .exceptions import SegmentationFailure
from .fine import self_adapting_correct, threshold_box
from .models import BBox, GrayImage, SliceResult
from .morphology import binarize_mean
from .pleural import retain_chord_covered

logger = logging.getLogger(__name__)

STAGES = ("01_binarized", "02_wall_removed", "03_coarse", "04_denoised", "05_final")


def preprocess(img: GrayImage, cfg: PipelineConfig) -> GrayImage:
    """Gaussian pre-filter of the crop, rounded back to integer intensities."""
    if cfg.smoothing_sigma == 0:
        return img
    smoothed = gaussian_filter(img.pixels.astype(float), sigma=cfg.smoothing_sigma, mode="nearest")
    return img.with_pixels(np.clip(np.rint(smoothed), 0, 65535))


def segment_slice(
    img: GrayImage,
    roi: BBox,
    cfg: PipelineConfig,
    box: Optional[BBox] = None,
    slice_index: int = 0,
    keep_stages: bool = False,
) -> SliceResult:
    """
    Runs the full 2D pipeline on one slice.

    Args:
        img: Raw ROI crop.
        roi: Manifest ROI; lung-wall removal always runs on it.
        cfg: Pipeline configuration.
        box: Narrower starting box for coarse segmentation and correction,
            e.g. inherited from a neighbouring slice. Clipped to `roi`.
        slice_index: Index recorded on the result.
        keep_stages: Keep the intermediate masks on the result.

    Returns:
        A SliceResult; `region` is None and `error` is set when nothing survives.
    """
    smoothed = preprocess(img, cfg)

    # 1. Lung-wall removal
    binarized = binarize_mean(smoothed, roi)
    kept = retain_chord_covered(binarized, roi, cfg.max_line_points, cfg.pleural_rule)
    wall = binarized & ~kept

    # 2. Coarse and fine segmentation inside the working box
    work_box = roi if box is None else box.intersect(roi)
    if work_box.is_empty:
        work_box = roi
    # Inherited boxes keep the threshold of the full ROI at entry
    reference = None if work_box == roi else roi

    result = SliceResult(slice_index=slice_index, shape=img.shape, box=work_box)
    if keep_stages:
        candidates = candidate_mask(smoothed, work_box, cfg, wall, reference)
        first = threshold_box(smoothed, work_box, cfg, wall, reference)
        result.stages = {
            "01_binarized": binarized,
            "02_wall_removed": kept,
            "03_coarse": candidates,
            "04_denoised": first.mask if first is not None else np.zeros(img.shape, dtype=bool),
        }

    try:
        region, trace = self_adapting_correct(smoothed, work_box, cfg, wall, reference)
    except SegmentationFailure as e:
        logger.debug("Slice %d failed: %s", slice_index, e)
        result.error = str(e)
        if keep_stages:
            result.stages["05_final"] = np.zeros(img.shape, dtype=bool)
        return result

    result.region = region
    result.trace = trace
    if keep_stages:
        result.stages["05_final"] = region.mask
    logger.debug(
        "Slice %d: area %d after %d boxes (%s)",
        slice_index,
        region.area,
        trace.iterations,
        trace.stop_reason.value,
    )
    return result
