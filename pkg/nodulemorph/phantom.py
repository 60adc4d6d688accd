"""
Deterministic synthetic nodule phantoms with exact ground truth.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from skimage.draw import line as draw_line

from .models import BBox, BinaryMask, GrayImage, NoduleType, RoiSource
from .utils.writers import save_gray_image, save_mask, write_json
from .volume import SliceStack

logger = logging.getLogger(__name__)


class PhantomKind(str, Enum):
    SOLID = "solid"
    MGGN = "mGGN"
    PGGN = "pGGN"
    JUXTAPLEURAL = "juxtapleural"
    VESSEL_ATTACHED = "vessel_attached"

    @property
    def nodule_type(self) -> NoduleType:
        if self is PhantomKind.MGGN:
            return NoduleType.MGGN
        if self is PhantomKind.PGGN:
            return NoduleType.PGGN
        return NoduleType.SOLID


# Diameter ranges (mm) sampled for each stratum of a suite
SUITE_DIAMETERS_MM: List[Tuple[float, float]] = [(4.2, 9.1), (10.5, 18.9), (21.0, 28.0)]

@dataclass(frozen=True)
class PhantomSpec:
    """
    Generator parameters for one phantom case.

    Intensities are raw 16-bit values; they only need to keep the ordering
    solid > halo > background. Pure ground-glass lesions are all halo; mixed
    ones carry a solid centre out to `core_ratio` of their radius.
    """

    seed: int
    kind: PhantomKind = PhantomKind.SOLID
    nodule_diameter_px: float = 10.0
    box_size: int = 64
    n_slices: int = 1
    background_mean: float = 200.0
    background_sigma: float = 30.0
    halo_mean: float = 450.0
    wall_mean: float = 700.0
    solid_mean: float = 800.0
    vessel_mean: float = 700.0
    spacing_mm: float = 0.7
    # In-plane minor/major axis ratio; drawn from [0.9, 1] when None
    aspect: Optional[float] = None
    # Largest random offset of the nodule centre from the box centre
    jitter: float = 3.0
    # Slice-axis semi-axis in slices; defaults to n_slices / 2
    z_semi_axis: Optional[float] = None
    # Relative radius of the solid centre of mixed ground-glass lesions
    core_ratio: float = 0.55
    # Gap between the nodule centre and a through-plane vessel seen as a disc
    # on every slice; no such vessel when None
    crossing_vessel_gap_px: Optional[float] = None
    crossing_vessel_diameter_px: float = 11.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PhantomKind(self.kind))
        if not self.solid_mean > self.halo_mean > self.background_mean:
            raise ValueError("Intensities must satisfy solid > halo > background.")
        gap = min(self.halo_mean - self.background_mean, self.solid_mean - self.halo_mean)
        if self.background_sigma < 0 or self.background_sigma > 0.25 * gap:
            raise ValueError(f"background_sigma must lie in [0, {0.25 * gap:g}].")
        if not 0 < self.nodule_diameter_px < self.box_size:
            raise ValueError("Nodule diameter must be positive and smaller than the box.")
        if self.n_slices < 1:
            raise ValueError("n_slices must be >= 1.")
        if self.spacing_mm <= 0:
            raise ValueError("spacing_mm must be positive.")
        if self.aspect is not None and not 0 < self.aspect <= 1:
            raise ValueError("aspect must lie in (0, 1].")
        if not 0 < self.core_ratio < 1:
            raise ValueError("core_ratio must lie in (0, 1).")
        if self.crossing_vessel_gap_px is not None and self.crossing_vessel_gap_px <= 0:
            raise ValueError("crossing_vessel_gap_px must be positive.")
        if self.crossing_vessel_diameter_px <= 0:
            raise ValueError("crossing_vessel_diameter_px must be positive.")

    @property
    def diameter_mm(self) -> float:
        return self.nodule_diameter_px * self.spacing_mm

    @property
    def center_index(self) -> int:
        return self.n_slices // 2


@dataclass
class Phantom:
    """Rendered slices with their exact masks."""

    spec: PhantomSpec
    images: List[GrayImage]
    ground_truth: List[BinaryMask]
    wall: List[BinaryMask]
    halo: List[BinaryMask]
    roi_box: BBox
    roi_source: RoiSource = RoiSource.PREDEFINED
    vessels: List[BinaryMask] = field(default_factory=list)

    @property
    def stack(self) -> SliceStack:
        return SliceStack(list(self.images), [self.roi_box] * len(self.images), self.spec.center_index)


def _wall_edge_x(box_size: int) -> Tuple[float, float, float]:
    """Centre and radius of the lung disk whose outside is the wall."""
    radius = 4.0 * box_size
    edge = round(0.15 * box_size)
    return edge + radius, box_size / 2.0, radius


def _draw_vessels(rng: np.random.Generator, spec: PhantomSpec, cx: float, cy: float, a: float) -> BinaryMask:
    size = spec.box_size
    out = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, 3))):
        phi = rng.uniform(0, 2 * np.pi)
        bend = a + rng.uniform(6, 10)
        turn = phi + rng.uniform(-0.4, 0.4)
        bx, by = cx + bend * np.cos(phi), cy + bend * np.sin(phi)
        ex, ey = bx + 2 * size * np.cos(turn), by + 2 * size * np.sin(turn)
        width = int(rng.integers(1, 3))
        for (x0, y0, x1, y1) in ((cx, cy, bx, by), (bx, by, ex, ey)):
            rr, cc = draw_line(int(round(y0)), int(round(x0)), int(round(y1)), int(round(x1)))
            for offset in range(width):
                keep = (rr >= 0) & (rr < size) & (cc + offset >= 0) & (cc + offset < size)
                out[rr[keep], cc[keep] + offset] = True
    return out


def _crossing_vessel(
    rng: np.random.Generator, spec: PhantomSpec, xs: np.ndarray, ys: np.ndarray, cx: float, cy: float
) -> BinaryMask:
    """Disc left, right, above or below the nodule, `crossing_vessel_gap_px` from its centre."""
    radius = spec.crossing_vessel_diameter_px / 2.0
    offset = spec.crossing_vessel_gap_px + radius
    dx, dy = [(offset, 0.0), (-offset, 0.0), (0.0, offset), (0.0, -offset)][int(rng.integers(0, 4))]
    return np.hypot(xs - (cx + dx), ys - (cy + dy)) <= radius


def generate(spec: PhantomSpec) -> Phantom:
    """
    Renders a phantom; identical specs give identical pixels.

    The nodule is an ellipsoid cut into `n_slices` cross-sections. Ground
    truth is the analytic inclusion test at pixel centres and includes the
    halo of ground-glass kinds.
    """
    rng = np.random.default_rng(spec.seed)
    size = spec.box_size
    a = spec.nodule_diameter_px / 2.0
    aspect = spec.aspect if spec.aspect is not None else rng.uniform(0.9, 1.0)
    b = a * aspect
    angle = rng.uniform(0, np.pi)
    c = spec.z_semi_axis if spec.z_semi_axis is not None else spec.n_slices / 2.0

    ys, xs = np.mgrid[0:size, 0:size].astype(float)

    wall = np.zeros((size, size), dtype=bool)
    if spec.kind is PhantomKind.JUXTAPLEURAL:
        lx, ly, radius = _wall_edge_x(size)
        wall = np.hypot(xs - lx, ys - ly) > radius
        angle = 0.0
        cy = size / 2.0 + rng.uniform(-spec.jitter, spec.jitter)
        edge = lx - math.sqrt(radius**2 - (cy - ly) ** 2)
        # Overlap the wall by one pixel so the nodule sits on it
        cx = edge + a - 1.0
    else:
        limit = max(0.0, min(spec.jitter, size / 2.0 - a - 2))
        cx = size / 2.0 + rng.uniform(-limit, limit)
        cy = size / 2.0 + rng.uniform(-limit, limit)

    dx, dy = xs - cx, ys - cy
    u = dx * np.cos(angle) + dy * np.sin(angle)
    v = -dx * np.sin(angle) + dy * np.cos(angle)
    rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)

    vessels = np.zeros((size, size), dtype=bool)
    if spec.kind is PhantomKind.VESSEL_ATTACHED:
        vessels = _draw_vessels(rng, spec, cx, cy, a)
    if spec.crossing_vessel_gap_px is not None:
        vessels |= _crossing_vessel(rng, spec, xs, ys, cx, cy)

    images, truth, walls, halos, vessel_masks = [], [], [], [], []
    for k in range(spec.n_slices):
        z = k - spec.center_index
        scale = math.sqrt(max(0.0, 1 - (z / c) ** 2))
        if scale > 0:
            r = rho / scale
            nodule = (r <= 1) & ~wall
        else:
            r = np.full_like(rho, np.inf)
            nodule = np.zeros((size, size), dtype=bool)

        intensity = np.full((size, size), spec.background_mean)
        intensity[wall] = spec.wall_mean
        intensity[vessels & ~wall] = spec.vessel_mean

        halo = np.zeros((size, size), dtype=bool)
        if spec.kind is PhantomKind.MGGN:
            core = nodule & (r <= spec.core_ratio)
            halo = nodule & ~core
            intensity[halo] = spec.halo_mean
            intensity[core] = spec.solid_mean
        elif spec.kind is PhantomKind.PGGN:
            halo = nodule.copy()
            intensity[nodule] = spec.halo_mean
        else:
            intensity[nodule] = spec.solid_mean

        noisy = intensity + rng.normal(0.0, spec.background_sigma, size=(size, size))
        pixels = np.clip(np.rint(noisy), 0, 65535).astype(np.uint16)

        images.append(GrayImage(pixels, (spec.spacing_mm, spec.spacing_mm)))
        truth.append(nodule)
        walls.append(wall.copy())
        halos.append(halo)
        vessel_masks.append(vessels & ~nodule & ~wall)

    return Phantom(
        spec=spec,
        images=images,
        ground_truth=truth,
        wall=walls,
        halo=halos,
        roi_box=BBox(0, 0, size, size),
        vessels=vessel_masks,
    )


def detected_roi(phantom: Phantom, rng: np.random.Generator, margin: int = 3) -> BBox:
    """Random box holding every ground-truth pixel plus `margin`, like a detector output."""
    size = phantom.spec.box_size
    union = np.logical_or.reduce(phantom.ground_truth)
    tight = BBox.tight(union) or BBox(size // 2, size // 2, size // 2 + 1, size // 2 + 1)
    inner = tight.dilate(margin, (size, size))
    x0 = int(rng.integers(0, inner.x0 + 1))
    y0 = int(rng.integers(0, inner.y0 + 1))
    x1 = int(rng.integers(inner.x1, size + 1))
    y1 = int(rng.integers(inner.y1, size + 1))
    return BBox(x0, y0, x1, y1)


def write_case(phantom: Phantom, root: Union[str, Path], case_id: str) -> dict:
    """Writes one case directory under `root` and returns its manifest entry."""
    root = Path(root)
    case_dir = root / case_id
    case_dir.mkdir(parents=True, exist_ok=True)

    slices = []
    for i, (img, gt) in enumerate(zip(phantom.images, phantom.ground_truth)):
        save_gray_image(img, case_dir / f"slice_{i:03d}.pgm")
        save_mask(gt, case_dir / f"gt_{i:03d}.pgm")
        slices.append(
            {
                "image_path": f"{case_id}/slice_{i:03d}.pgm",
                "roi_box": phantom.roi_box.to_list(),
                "gt_mask_path": f"{case_id}/gt_{i:03d}.pgm",
            }
        )

    spacing = phantom.spec.spacing_mm
    return {
        "case_id": case_id,
        "nodule_type": phantom.spec.kind.nodule_type.value,
        "diameter_mm": round(phantom.spec.diameter_mm, 4),
        "slices": slices,
        "center_index": phantom.spec.center_index,
        "roi_source": phantom.roi_source.value,
        "spacing_mm": [spacing, spacing],
        "phantom_kind": phantom.spec.kind.value,
    }


SUITE_KINDS = list(PhantomKind)


def suite_spec(seed: int, index: int, box_size: int = 64, n_slices: int = 3, spacing_mm: float = 0.7) -> PhantomSpec:
    """
    Spec of case `index` in a suite; kinds cycle fastest, then diameter strata.
    """
    case_seed = int(np.random.SeedSequence([seed, index]).generate_state(1)[0])
    rng = np.random.default_rng(case_seed)
    kind = SUITE_KINDS[index % len(SUITE_KINDS)]
    low, high = SUITE_DIAMETERS_MM[(index // len(SUITE_KINDS)) % len(SUITE_DIAMETERS_MM)]
    diameter_px = rng.uniform(low, high) / spacing_mm
    diameter_px = min(diameter_px, 0.65 * box_size)
    return PhantomSpec(
        seed=case_seed,
        kind=kind,
        nodule_diameter_px=round(float(diameter_px), 3),
        box_size=box_size,
        n_slices=n_slices,
        spacing_mm=spacing_mm,
    )


def generate_suite(
    seed: int,
    n: int,
    out_dir: Union[str, Path],
    box_size: int = 64,
    n_slices: int = 3,
    roi_mode: str = "predefined",
    spacing_mm: float = 0.7,
) -> Path:
    """
    Writes `n` phantom cases and their manifest.

    Args:
        seed: Suite seed; each case derives its own seed from (seed, index).
        n: Number of cases (>= 1).
        out_dir: Target directory, created if missing.
        box_size: ROI crop size in pixels.
        n_slices: Slices per case.
        roi_mode: "predefined" (full crop) or "detected" (jittered box around the nodule).
        spacing_mm: Pixel size used for the millimetre diameter labels.

    Returns:
        Path of the written manifest.json.
    """
    if n < 1:
        raise ValueError("A suite needs at least one case.")
    source = RoiSource(roi_mode)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for index in range(n):
        spec = suite_spec(seed, index, box_size, n_slices, spacing_mm)
        phantom = generate(spec)
        if source is RoiSource.DETECTED:
            phantom.roi_box = detected_roi(phantom, np.random.default_rng([spec.seed, 1]))
            phantom.roi_source = source
        entries.append(write_case(phantom, out_dir, f"case_{index:03d}"))

    manifest_path = out_dir / "manifest.json"
    write_json(entries, manifest_path)
    logger.info("Wrote %d phantom cases to %s", n, out_dir)
    return manifest_path
