"""
Exception hierarchy for nodulemorph.

Every error also derives from the built-in type callers would expect
(ValueError for bad input, RuntimeError for pipeline failures).
"""
from typing import Optional


class NodulemorphError(Exception):
    """Base class for all library errors."""


class DecodeError(NodulemorphError, ValueError):
    """A raster file could not be decoded."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ManifestError(NodulemorphError, ValueError):
    """A case manifest violates its schema or one of its invariants."""

    def __init__(self, message: str, case_id: Optional[str] = None, field: Optional[str] = None):
        where = []
        if case_id is not None:
            where.append(f"case '{case_id}'")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.case_id = case_id
        self.field = field


class ConfigError(NodulemorphError, ValueError):
    """A pipeline configuration value is out of range."""


class DegenerateInputError(NodulemorphError, ValueError):
    """Input carries too little information for the requested operation (e.g. a flat ROI)."""


class SegmentationFailure(NodulemorphError, RuntimeError):
    """No candidate nodule survived on a slice or stack."""
