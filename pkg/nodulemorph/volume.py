"""
Slice-to-slice box propagation from the centre slice outward.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

from .coarse import coarse_segment
from .config import PipelineConfig
from .exceptions import SegmentationFailure
from .models import BBox, GrayImage, SliceResult
from .pipeline import preprocess, segment_slice
from .pleural import wall_mask

logger = logging.getLogger(__name__)


@dataclass
class SliceStack:
    """Ordered slices of one nodule with their manifest ROIs."""

    images: List[GrayImage]
    boxes: List[BBox]
    center_index: Optional[int] = None

    def __post_init__(self):
        if not self.images:
            raise ValueError("SliceStack needs at least one slice.")
        if len(self.images) != len(self.boxes):
            raise ValueError("SliceStack needs one ROI box per slice.")
        if len({img.spacing_mm for img in self.images}) > 1:
            raise ValueError("All slices of a stack must share pixel spacing.")
        if len({img.shape for img in self.images}) > 1:
            raise ValueError("All slices of a stack must share their size.")
        if self.center_index is not None and not 0 <= self.center_index < len(self.images):
            raise ValueError(f"center_index {self.center_index} outside [0, {len(self.images)}).")

    def __len__(self) -> int:
        return len(self.images)


def choose_center(stack: SliceStack, cfg: PipelineConfig) -> int:
    """Slice with the largest coarse foreground; the first one wins a tie."""
    if stack.center_index is not None:
        return stack.center_index

    areas = []
    for img, roi in zip(stack.images, stack.boxes):
        smoothed = preprocess(img, cfg)
        wall = wall_mask(smoothed, roi, cfg.max_line_points, cfg.pleural_rule)
        areas.append(sum(r.area for r in coarse_segment(smoothed, roi, cfg, wall)))
    return max(range(len(areas)), key=lambda i: areas[i])


def segment_stack(stack: SliceStack, cfg: PipelineConfig, keep_stages: bool = False) -> List[SliceResult]:
    """
    Segments every slice, narrowing each slice's box from its inner neighbour.

    Raises:
        SegmentationFailure: if the centre slice yields no region.
    """
    center = choose_center(stack, cfg)
    results: List[Optional[SliceResult]] = [None] * len(stack)

    anchor = segment_slice(
        stack.images[center], stack.boxes[center], cfg, slice_index=center, keep_stages=keep_stages
    )
    if not anchor.ok:
        raise SegmentationFailure(f"Centre slice {center} failed: {anchor.error}")
    results[center] = anchor

    for step in (-1, 1):
        last = anchor.region
        index = center + step
        while 0 <= index < len(stack):
            img, roi = stack.images[index], stack.boxes[index]
            inherited = last.bbox.dilate(cfg.margin, img.shape).intersect(roi)
            result = segment_slice(img, roi, cfg, box=inherited, slice_index=index, keep_stages=keep_stages)
            if result.ok:
                last = result.region
            else:
                logger.debug("Slice %d empty, keeping box of the last good slice", index)
            results[index] = result
            index += step

    return results


def segment_slices_independently(
    stack: SliceStack, cfg: PipelineConfig, keep_stages: bool = False
) -> List[SliceResult]:
    """Every slice on its own manifest ROI, no propagation."""
    return [
        segment_slice(img, roi, cfg, slice_index=i, keep_stages=keep_stages)
        for i, (img, roi) in enumerate(zip(stack.images, stack.boxes))
    ]
