"""
Utilities for reading ROI crops, masks and case manifests from disk.
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from ..exceptions import DecodeError, ManifestError
from ..models import (
    BBox,
    BinaryMask,
    CaseManifest,
    CaseRecord,
    GrayImage,
    NoduleType,
    RoiSource,
    SliceEntry,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_WHITESPACE = b" \t\r\n\v\f"


class PgmHeader:
    """Parsed P5 header: raster size, maxval and where the payload starts."""

    def __init__(self, width: int, height: int, maxval: int, offset: int):
        self.width = width
        self.height = height
        self.maxval = maxval
        self.offset = offset

    @property
    def bytes_per_sample(self) -> int:
        return 1 if self.maxval < 256 else 2

    @property
    def payload_size(self) -> int:
        return self.width * self.height * self.bytes_per_sample


def parse_pgm_header(data: bytes) -> PgmHeader:
    """
    Parses the header of a binary PGM.

    Raises:
        DecodeError: on a wrong magic, a malformed token or an out-of-range field.
    """
    if data[:2] != b"P5":
        raise DecodeError(f"unsupported magic {data[:2]!r}", 0)

    pos = 2
    tokens = []
    while len(tokens) < 3:
        # 1. Skip whitespace and comments
        while pos < len(data) and (data[pos] in _WHITESPACE or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= len(data):
            raise DecodeError("truncated header", pos)

        # 2. Read one decimal token
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise DecodeError(f"malformed header token {token!r}", start)
        tokens.append((int(token), start))

    (width, w_off), (height, h_off), (maxval, m_off) = tokens
    if width <= 0:
        raise DecodeError("width must be positive", w_off)
    if height <= 0:
        raise DecodeError("height must be positive", h_off)
    if maxval <= 0 or maxval > 65535:
        raise DecodeError(f"maxval {maxval} outside [1, 65535]", m_off)

    # Exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise DecodeError("missing whitespace after maxval", pos)
    return PgmHeader(width, height, maxval, pos + 1)


def decode_pgm(data: bytes) -> np.ndarray:
    """Decodes a P5 byte string into a (height, width) uint16 array."""
    header = parse_pgm_header(data)
    end = header.offset + header.payload_size
    if len(data) < end:
        raise DecodeError(
            f"truncated payload: expected {header.payload_size} bytes, "
            f"got {len(data) - header.offset}",
            len(data),
        )
    dtype = np.uint8 if header.bytes_per_sample == 1 else np.dtype(">u2")
    raster = np.frombuffer(data, dtype=dtype, count=header.width * header.height, offset=header.offset)
    return raster.reshape(header.height, header.width).astype(np.uint16)


def _read_bytes(path: PathLike) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise IOError(f"Failed to read file {path}: {e}") from e


def read_pgm_header(path: PathLike, chunk_size: int = 512) -> PgmHeader:
    """
    Reads only as much of `path` as the header needs.

    The file is read in chunks until the header parses or the file ends, so
    long comments are fine.
    """
    head = b""
    try:
        with open(path, "rb") as f:
            while True:
                chunk = f.read(chunk_size)
                head += chunk
                try:
                    return parse_pgm_header(head)
                except DecodeError as e:
                    # Errors before the end of the bytes read so far are final
                    if not chunk or e.offset < len(head):
                        raise
    except OSError as e:
        raise IOError(f"Failed to read file {path}: {e}") from e


def load_gray_image(path: PathLike, spacing_mm: Optional[Tuple[float, float]] = None) -> GrayImage:
    """
    Loads a binary PGM as a GrayImage.

    Args:
        path: Path to the P5 file (8-bit or 16-bit big-endian).
        spacing_mm: Optional (dx, dy) pixel size, usually taken from the manifest.
    """
    return GrayImage(decode_pgm(_read_bytes(path)), spacing_mm)


def load_mask(path: PathLike) -> BinaryMask:
    """Loads a mask PGM; samples >= 128 are foreground."""
    return decode_pgm(_read_bytes(path)) >= 128


# --- Manifests ---

_REQUIRED = ("case_id", "nodule_type", "diameter_mm", "slices")


def _parse_box(value: Any, case_id: str, field: str) -> BBox:
    if not isinstance(value, list) or len(value) != 4 or not all(isinstance(v, int) for v in value):
        raise ManifestError("expected [x0, y0, x1, y1] integers", case_id, field)
    x0, y0, x1, y1 = value
    if x1 <= x0 or y1 <= y0:
        raise ManifestError(f"empty or inverted box {value}", case_id, field)
    return BBox(x0, y0, x1, y1)


def _parse_slice(entry: Any, index: int, case_id: str, base_dir: Path) -> Tuple[SliceEntry, Tuple[int, int]]:
    prefix = f"slices[{index}]"
    if not isinstance(entry, dict):
        raise ManifestError("expected an object", case_id, prefix)
    for key in ("image_path", "roi_box"):
        if key not in entry:
            raise ManifestError("missing field", case_id, f"{prefix}.{key}")

    image_path = base_dir / entry["image_path"]
    roi_box = _parse_box(entry["roi_box"], case_id, f"{prefix}.roi_box")

    try:
        header = read_pgm_header(image_path)
    except (IOError, DecodeError) as e:
        raise ManifestError(str(e), case_id, f"{prefix}.image_path") from e
    shape = (header.height, header.width)
    if not roi_box.fits(shape):
        raise ManifestError(
            f"box {roi_box.to_list()} exceeds image of {header.width}x{header.height}",
            case_id,
            f"{prefix}.roi_box",
        )

    gt_path = None
    if entry.get("gt_mask_path") is not None:
        gt_path = base_dir / entry["gt_mask_path"]
        try:
            gt_header = read_pgm_header(gt_path)
        except (IOError, DecodeError) as e:
            raise ManifestError(str(e), case_id, f"{prefix}.gt_mask_path") from e
        if (gt_header.height, gt_header.width) != shape:
            raise ManifestError("mask size differs from its image", case_id, f"{prefix}.gt_mask_path")

    return SliceEntry(image_path, roi_box, gt_path), shape


def _parse_case(raw: Any, position: int, base_dir: Path) -> CaseManifest:
    if not isinstance(raw, dict):
        raise ManifestError(f"entry {position} is not an object")
    case_id = raw.get("case_id")
    if not isinstance(case_id, str) or not case_id:
        raise ManifestError(f"entry {position} needs a non-empty string", None, "case_id")
    for key in _REQUIRED:
        if key not in raw:
            raise ManifestError("missing field", case_id, key)

    try:
        nodule_type = NoduleType(raw["nodule_type"])
    except ValueError as e:
        raise ManifestError(f"unknown nodule_type '{raw['nodule_type']}'", case_id, "nodule_type") from e

    diameter = raw["diameter_mm"]
    valid = isinstance(diameter, (int, float)) and not isinstance(diameter, bool)
    if not valid or not math.isfinite(diameter) or diameter <= 0:
        raise ManifestError("must be a positive finite number", case_id, "diameter_mm")

    raw_slices = raw["slices"]
    if not isinstance(raw_slices, list) or not raw_slices:
        raise ManifestError("must be a non-empty list", case_id, "slices")
    parsed = [_parse_slice(s, i, case_id, base_dir) for i, s in enumerate(raw_slices)]
    shapes = {shape for _, shape in parsed}
    if len(shapes) > 1:
        raise ManifestError(f"slices differ in size: {sorted(shapes)}", case_id, "slices")

    center = raw.get("center_index")
    if center is not None and (not isinstance(center, int) or not 0 <= center < len(parsed)):
        raise ManifestError(f"must index into {len(parsed)} slices", case_id, "center_index")

    try:
        roi_source = RoiSource(raw.get("roi_source", RoiSource.PREDEFINED.value))
    except ValueError as e:
        raise ManifestError(f"unknown roi_source '{raw.get('roi_source')}'", case_id, "roi_source") from e

    spacing = raw.get("spacing_mm")
    if spacing is not None:
        if not isinstance(spacing, list) or len(spacing) != 2 or not all(
            isinstance(v, (int, float)) and math.isfinite(v) and v > 0 for v in spacing
        ):
            raise ManifestError("expected two positive numbers", case_id, "spacing_mm")
        spacing = (float(spacing[0]), float(spacing[1]))

    return CaseManifest(
        case_id=case_id,
        nodule_type=nodule_type,
        diameter_mm=float(diameter),
        slices=tuple(entry for entry, _ in parsed),
        center_index=center,
        roi_source=roi_source,
        spacing_mm=spacing,
    )


def load_manifest(path: PathLike) -> List[CaseManifest]:
    """
    Loads and validates a JSON case manifest.

    Paths inside the manifest are relative to its directory. The whole file
    is rejected on the first violation.

    Raises:
        IOError: if the file cannot be read.
        ManifestError: naming the offending case and field.
    """
    path = Path(path)
    try:
        raw: Any = json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ManifestError(f"{path} is not valid UTF-8 JSON: {e}") from e
    if not isinstance(raw, list):
        raise ManifestError(f"{path} must hold a JSON array of cases")

    cases: List[CaseManifest] = []
    seen: Dict[str, int] = {}
    for position, entry in enumerate(raw):
        case = _parse_case(entry, position, path.parent)
        if case.case_id in seen:
            raise ManifestError("duplicate case_id", case.case_id, "case_id")
        seen[case.case_id] = position
        cases.append(case)

    logger.debug("Loaded %d cases from %s", len(cases), path)
    return cases


def load_case(manifest: CaseManifest) -> CaseRecord:
    """Loads every slice image and ground-truth mask named by `manifest`."""
    images = [load_gray_image(s.image_path, manifest.spacing_mm) for s in manifest.slices]
    ground_truth = [
        load_mask(s.gt_mask_path) if s.gt_mask_path is not None else None for s in manifest.slices
    ]
    return CaseRecord(manifest, images, ground_truth)
