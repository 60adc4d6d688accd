"""
Utilities for writing masks, images and JSON artifacts.
"""
import json
from pathlib import Path
from typing import Any, Union

import numpy as np

from ..models import BinaryMask, GrayImage

PathLike = Union[str, Path]


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Encodes a (height, width) array as P5; 16-bit when any sample exceeds 255."""
    pixels = np.asarray(pixels)
    height, width = pixels.shape
    if pixels.size and int(pixels.max()) > 255:
        maxval, payload = 65535, pixels.astype(">u2").tobytes()
    else:
        maxval, payload = 255, pixels.astype(np.uint8).tobytes()
    return f"P5\n{width} {height}\n{maxval}\n".encode("ascii") + payload


def _write_bytes(data: bytes, path: PathLike) -> None:
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as e:
        raise IOError(f"Failed to write file {path}: {e}") from e


def save_mask(mask: BinaryMask, path: PathLike) -> None:
    """Writes an 8-bit PGM with foreground 255 and background 0."""
    mask = np.asarray(mask, dtype=bool)
    _write_bytes(encode_pgm(np.where(mask, 255, 0).astype(np.uint8)), path)


def save_gray_image(img: GrayImage, path: PathLike) -> None:
    _write_bytes(encode_pgm(img.pixels), path)


def write_json(obj: Any, path: PathLike) -> None:
    """Deterministic, indented JSON dump."""
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    _write_bytes(text.encode("utf-8"), path)
