"""
Segmentation methods: the two plain baselines and the coarse-to-fine pipeline.
"""
import logging
from typing import List

import numpy as np

from ..coarse import deformable_mask, filter_by_size
from ..config import PipelineConfig
from ..exceptions import SegmentationFailure
from ..models import BBox, BinaryMask, CaseRecord, GrayImage, SliceResult
from ..morphology import binarize_mean, connected_components, largest_region
from ..pipeline import preprocess, segment_slice
from ..volume import SliceStack, segment_slices_independently, segment_stack
from .abstract import SegmentationStrategy

logger = logging.getLogger(__name__)


def _largest_result(candidates: BinaryMask, s_m: int, shape, slice_index: int, roi: BBox) -> SliceResult:
    result = SliceResult(slice_index=slice_index, shape=shape, box=roi)
    region = largest_region(filter_by_size(connected_components(candidates), s_m))
    if region is None:
        result.error = f"No candidate region in box {roi.to_list()}."
    result.region = region
    return result


class PlainThresholding(SegmentationStrategy):
    """
    Mean-threshold baseline: pixels above the ROI mean, largest component > s_m.
    """

    label = "plain-thresholding"

    def segment_slice(self, img, roi, config, slice_index=0, keep_stages=False) -> SliceResult:
        binarized = binarize_mean(preprocess(img, config), roi)
        result = _largest_result(binarized, config.s_m, img.shape, slice_index, roi)
        if keep_stages:
            result.stages = {"01_binarized": binarized, "05_final": result.mask}
        return result


class PlainDeformable(SegmentationStrategy):
    """
    Otsu, closing and opening on the ROI, largest component > s_m. No wall removal.
    """

    label = "plain-deformable"

    def segment_slice(self, img, roi, config, slice_index=0, keep_stages=False) -> SliceResult:
        candidates = deformable_mask(preprocess(img, config), roi, config.se_radius)
        result = _largest_result(candidates, config.s_m, img.shape, slice_index, roi)
        if keep_stages:
            result.stages = {"03_coarse": candidates, "05_final": result.mask}
        return result


class CoarseToFine(SegmentationStrategy):
    """
    Lung-wall removal, coarse segmentation, noise reduction and box correction,
    propagated from the centre slice unless `use_3d` is off.
    """

    label = "coarse-to-fine"

    def __init__(self, use_3d: bool = True):
        self.use_3d = use_3d

    def segment_slice(
        self,
        img: GrayImage,
        roi: BBox,
        config: PipelineConfig,
        slice_index: int = 0,
        keep_stages: bool = False,
    ) -> SliceResult:
        return segment_slice(img, roi, config, slice_index=slice_index, keep_stages=keep_stages)

    def segment_case(self, case: CaseRecord, config: PipelineConfig, keep_stages: bool = False) -> List[SliceResult]:
        stack = SliceStack(case.images, case.roi_boxes, case.manifest.center_index)
        if not self.use_3d:
            return segment_slices_independently(stack, config, keep_stages)
        try:
            return segment_stack(stack, config, keep_stages)
        except SegmentationFailure as e:
            logger.warning("Case '%s': %s", case.case_id, e)
            # No anchor to propagate from; every slice is reported empty
            return [
                SliceResult(slice_index=i, shape=img.shape, error=str(e), stages=self._empty_stages(img, keep_stages))
                for i, img in enumerate(case.images)
            ]

    @staticmethod
    def _empty_stages(img: GrayImage, keep_stages: bool):
        if not keep_stages:
            return {}
        return {"05_final": np.zeros(img.shape, dtype=bool)}
