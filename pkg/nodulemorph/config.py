"""
Configuration of the segmentation pipeline and its named presets.
"""
import json
from dataclasses import dataclass, asdict, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Union

from .exceptions import ConfigError


class CoarseMethod(str, Enum):
    """How candidate pixels are selected during coarse segmentation."""

    PLAIN_THRESHOLD = "plain_threshold"
    DEFORMABLE = "deformable"


class PleuralRule(str, Enum):
    """Which foreground pixels survive lung-wall removal."""

    # Every pixel of an all-foreground chord between cutting-line pixels
    CHORD = "chord"
    # Chords running mostly off the cutting line, completed to their convex hull
    HULL = "hull"


@dataclass(frozen=True)
class PipelineConfig:
    """
    Hyper-parameters shared by every stage of the pipeline.

    Lengths and areas are in pixels of the ROI crop.
    """

    # Maximum dividing-line length for surrounding noise reduction
    alpha: float = 8.0
    # Smallest nodule area; candidate regions must be strictly larger
    s_m: int = 14
    # Shrink factor: the correction loop runs while next_box < cur_box / epsilon
    epsilon: float = 1.2
    # Nodule-pixel proportion at which a box counts as close enough
    rho: float = 0.5
    # Coefficient-of-variation ceiling for the ground-glass evenness check
    tau: float = 0.5
    # Padding of boxes inherited from the neighbouring slice
    margin: int = 2
    # Disk radius used by closing/opening in the deformable method
    se_radius: int = 2
    coarse_method: CoarseMethod = CoarseMethod.DEFORMABLE
    pleural_rule: PleuralRule = PleuralRule.HULL
    # Gaussian pre-filter applied to the crop before thresholding (0 disables it)
    smoothing_sigma: float = 1.0
    ggo_stop: bool = True
    max_iter: int = 32
    max_line_points: int = 1024
    n_sectors: int = 8

    def __post_init__(self):
        if not isinstance(self.coarse_method, CoarseMethod):
            try:
                object.__setattr__(self, "coarse_method", CoarseMethod(self.coarse_method))
            except ValueError as e:
                raise ConfigError(f"Unknown coarse_method '{self.coarse_method}'.") from e
        if not isinstance(self.pleural_rule, PleuralRule):
            try:
                object.__setattr__(self, "pleural_rule", PleuralRule(self.pleural_rule))
            except ValueError as e:
                raise ConfigError(f"Unknown pleural_rule '{self.pleural_rule}'.") from e

        checks = [
            (self.alpha >= 2, "alpha must be >= 2"),
            (self.s_m >= 1, "s_m must be >= 1"),
            (self.epsilon > 1, "epsilon must be > 1"),
            (0 < self.rho < 1, "rho must lie in (0, 1)"),
            (self.tau >= 0, "tau must be >= 0"),
            (self.margin >= 0, "margin must be >= 0"),
            (self.se_radius >= 1, "se_radius must be >= 1"),
            (self.smoothing_sigma >= 0, "smoothing_sigma must be >= 0"),
            (self.max_iter >= 1, "max_iter must be >= 1"),
            (self.max_line_points >= 2, "max_line_points must be >= 2"),
            (self.n_sectors >= 2, "n_sectors must be >= 2"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def with_overrides(self, **overrides: Any) -> "PipelineConfig":
        """
        Returns a copy with the given fields replaced.

        None values are ignored so unset CLI flags fall through to the current value.
        """
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        """Plain-JSON view of the configuration."""
        data = asdict(self)
        data["coarse_method"] = self.coarse_method.value
        data["pleural_rule"] = self.pleural_rule.value
        return data


def load_config(path: Union[str, Path], base: "PipelineConfig" = None) -> PipelineConfig:
    """
    Reads a JSON object mirroring PipelineConfig and applies it on top of `base`.

    Args:
        path: Path to the JSON config file.
        base: Configuration providing values for keys absent from the file.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Failed to read config file {path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a JSON object.")

    return (base or DEFAULT).with_overrides(**data)


# --- Presets ---

DEFAULT = PipelineConfig()

PLAIN = PipelineConfig(coarse_method=CoarseMethod.PLAIN_THRESHOLD)
