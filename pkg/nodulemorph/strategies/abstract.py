"""
Abstract base classes for segmentation strategies.
"""
from abc import ABC, abstractmethod
from typing import List

from ..config import PipelineConfig
from ..models import BBox, CaseRecord, GrayImage, SliceResult


class SegmentationStrategy(ABC):
    """
    Abstract base class for a nodule segmentation method.

    A strategy turns one slice (or one case) into SliceResults. It holds no
    per-case state, so one instance can serve many worker processes.
    """

    #: Row label used in reports and as the prediction sub-directory name
    label: str = "strategy"

    @abstractmethod
    def segment_slice(
        self,
        img: GrayImage,
        roi: BBox,
        config: PipelineConfig,
        slice_index: int = 0,
        keep_stages: bool = False,
    ) -> SliceResult:
        """
        Segments a single slice inside its ROI.

        Args:
            img: Raw ROI crop.
            roi: Manifest ROI box.
            config: Pipeline configuration.
            slice_index: Index recorded on the result.
            keep_stages: Keep intermediate masks for stage dumps.
        """

    def segment_case(self, case: CaseRecord, config: PipelineConfig, keep_stages: bool = False) -> List[SliceResult]:
        """
        Segments every slice of a case. Slices are independent unless overridden.
        """
        return [
            self.segment_slice(img, roi, config, slice_index=i, keep_stages=keep_stages)
            for i, (img, roi) in enumerate(zip(case.images, case.roi_boxes))
        ]

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} '{self.label}'>"
