"""
nodulemorph - Coarse-to-fine morphological segmentation of lung nodule ROI crops.
"""

# 1. The Core Controller
# The user's primary starting point.
from .core import SegmentationRun

# 2. Data Models
# Rasters, boxes, manifests and per-slice results.
from .models import BBox, CaseManifest, CaseRecord, CorrectionTrace, GrayImage, NoduleType, SliceResult, StopReason
from .morphology import Region

# 3. Configurations
# Pipeline parameters and presets.
from .config import DEFAULT, PLAIN, CoarseMethod, PipelineConfig, load_config

# 4. Errors
from .exceptions import (
    ConfigError,
    DecodeError,
    DegenerateInputError,
    ManifestError,
    NodulemorphError,
    SegmentationFailure,
)

# 5. Strategies
# The segmentation methods needed for SegmentationRun.process()
from .strategies import CoarseToFine, PlainDeformable, PlainThresholding, SegmentationStrategy

# 6. Evaluation and synthetic data
from .metrics import StratifiedReport, build_report, dsc, nodule_dsc
from .phantom import PhantomKind, PhantomSpec, generate, generate_suite

# Define what gets imported with `from nodulemorph import *`
__all__ = [
    "SegmentationRun",
    "BBox",
    "CaseManifest",
    "CaseRecord",
    "CorrectionTrace",
    "GrayImage",
    "NoduleType",
    "SliceResult",
    "StopReason",
    "Region",
    "DEFAULT",
    "PLAIN",
    "CoarseMethod",
    "PipelineConfig",
    "load_config",
    "ConfigError",
    "DecodeError",
    "DegenerateInputError",
    "ManifestError",
    "NodulemorphError",
    "SegmentationFailure",
    "CoarseToFine",
    "PlainDeformable",
    "PlainThresholding",
    "SegmentationStrategy",
    "StratifiedReport",
    "build_report",
    "dsc",
    "nodule_dsc",
    "PhantomKind",
    "PhantomSpec",
    "generate",
    "generate_suite",
]
