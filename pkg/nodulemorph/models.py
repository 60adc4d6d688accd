"""
Data models for ROI crops, boxes, case manifests and per-slice results.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .morphology import Region

# (x, y) pixel coordinate; x is the column, y the row
Point = Tuple[int, int]

# Boolean (height, width) array; True marks foreground
BinaryMask = np.ndarray


@dataclass(frozen=True)
class GrayImage:
    """
    Single-channel ROI crop with 8- or 16-bit intensities.

    The pixel array is copied to uint16 and frozen on construction.
    """

    pixels: np.ndarray
    spacing_mm: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"GrayImage needs a non-empty 2D array, got shape {arr.shape}.")
        if arr.dtype.kind not in "uif":
            raise ValueError(f"GrayImage cannot hold dtype {arr.dtype}.")
        if arr.min() < 0 or arr.max() > 65535:
            raise ValueError("GrayImage intensities must lie in [0, 65535].")

        frozen = np.array(arr, dtype=np.uint16)
        frozen.flags.writeable = False
        object.__setattr__(self, "pixels", frozen)

        if self.spacing_mm is not None:
            dx, dy = (float(v) for v in self.spacing_mm)
            if dx <= 0 or dy <= 0:
                raise ValueError("Pixel spacing must be positive.")
            object.__setattr__(self, "spacing_mm", (dx, dy))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    def with_pixels(self, pixels: np.ndarray) -> "GrayImage":
        """New image over `pixels`, keeping this image's spacing."""
        return GrayImage(pixels, self.spacing_mm)


@dataclass(frozen=True)
class BBox:
    """
    Axis-aligned box in pixel coordinates. The max corner is exclusive.
    """

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"Inverted box {self.to_list()}.")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def is_empty(self) -> bool:
        return self.area == 0

    @property
    def slices(self) -> Tuple[slice, slice]:
        """Row/column slices for indexing a (height, width) array."""
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def fits(self, shape: Tuple[int, int]) -> bool:
        height, width = shape
        return self.x0 >= 0 and self.y0 >= 0 and self.x1 <= width and self.y1 <= height

    def intersect(self, other: "BBox") -> "BBox":
        x0, y0 = max(self.x0, other.x0), max(self.y0, other.y0)
        x1, y1 = min(self.x1, other.x1), min(self.y1, other.y1)
        if x1 <= x0 or y1 <= y0:
            return BBox(x0, y0, x0, y0)
        return BBox(x0, y0, x1, y1)

    def dilate(self, margin: int, shape: Optional[Tuple[int, int]] = None) -> "BBox":
        """Grows the box by `margin` on every side, clamped to `shape` when given."""
        x0, y0 = self.x0 - margin, self.y0 - margin
        x1, y1 = self.x1 + margin, self.y1 + margin
        if shape is not None:
            height, width = shape
            x0, y0 = max(x0, 0), max(y0, 0)
            x1, y1 = min(x1, width), min(y1, height)
        return BBox(x0, y0, x1, y1)

    def mask(self, shape: Tuple[int, int]) -> BinaryMask:
        out = np.zeros(shape, dtype=bool)
        out[self.slices] = True
        return out

    @classmethod
    def tight(cls, mask: BinaryMask) -> Optional["BBox"]:
        """Smallest box holding every True pixel, or None for an empty mask."""
        ys, xs = np.nonzero(mask)
        if ys.size == 0:
            return None
        return cls(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)

    def to_list(self) -> List[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, values) -> "BBox":
        x0, y0, x1, y1 = (int(v) for v in values)
        return cls(x0, y0, x1, y1)


class NoduleType(str, Enum):
    SOLID = "solid"
    MGGN = "mGGN"
    PGGN = "pGGN"


# Diameter strata (mm), half-open on the right
DIAMETER_BINS: List[Tuple[str, float, float]] = [
    ("(0,10)", 0.0, 10.0),
    ("[10,20)", 10.0, 20.0),
    ("[20,inf)", 20.0, math.inf),
]


def diameter_bin(diameter_mm: float) -> str:
    """Label of the diameter stratum holding `diameter_mm`."""
    for label, low, high in DIAMETER_BINS:
        if low <= diameter_mm < high:
            return label
    raise ValueError(f"Diameter must be positive, got {diameter_mm}.")


class RoiSource(str, Enum):
    PREDEFINED = "predefined"
    DETECTED = "detected"


@dataclass(frozen=True)
class SliceEntry:
    image_path: Path
    roi_box: BBox
    gt_mask_path: Optional[Path] = None


@dataclass(frozen=True)
class CaseManifest:
    """One nodule: its label, its size and the ordered slices covering it."""

    case_id: str
    nodule_type: NoduleType
    diameter_mm: float
    slices: Tuple[SliceEntry, ...]
    center_index: Optional[int] = None
    roi_source: RoiSource = RoiSource.PREDEFINED
    spacing_mm: Optional[Tuple[float, float]] = None

    @property
    def diameter_bin(self) -> str:
        return diameter_bin(self.diameter_mm)

    @property
    def labeled_indices(self) -> List[int]:
        return [i for i, s in enumerate(self.slices) if s.gt_mask_path is not None]


@dataclass
class CaseRecord:
    """A manifest entry with its rasters loaded."""

    manifest: CaseManifest
    images: List[GrayImage]
    ground_truth: List[Optional[BinaryMask]]

    @property
    def case_id(self) -> str:
        return self.manifest.case_id

    @property
    def roi_boxes(self) -> List[BBox]:
        return [s.roi_box for s in self.manifest.slices]


class StopReason(str, Enum):
    BOX_CONVERGED = "box_converged"
    MIN_SIZE_GUARD = "min_size_guard"
    GGO_EVENNESS = "ggo_evenness"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class TraceStep:
    box: BBox
    contour_area: int


@dataclass
class CorrectionTrace:
    """Boxes visited by the self-adapting correction loop, in order."""

    steps: List[TraceStep] = field(default_factory=list)
    stop_reason: Optional[StopReason] = None

    def record(self, box: BBox, contour_area: int) -> None:
        self.steps.append(TraceStep(box, int(contour_area)))

    @property
    def iterations(self) -> int:
        return len(self.steps)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stop_reason": self.stop_reason.value if self.stop_reason else None,
            "iterations": [
                {"box": s.box.to_list(), "contour_area": s.contour_area} for s in self.steps
            ],
        }


@dataclass
class SliceResult:
    """Outcome of segmenting one slice. `region` is None when the slice failed."""

    slice_index: int
    shape: Tuple[int, int]
    region: Optional["Region"] = None
    trace: Optional[CorrectionTrace] = None
    box: Optional[BBox] = None
    stages: Dict[str, BinaryMask] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.region is not None

    @property
    def mask(self) -> BinaryMask:
        if self.region is None:
            return np.zeros(self.shape, dtype=bool)
        return self.region.mask

    @property
    def area(self) -> int:
        return 0 if self.region is None else self.region.area
