"""
Segmentation strategies for nodule ROI crops.
"""
from .abstract import SegmentationStrategy
from .methods import CoarseToFine, PlainDeformable, PlainThresholding

STRATEGIES = {s.label: s for s in (PlainThresholding, PlainDeformable, CoarseToFine)}
