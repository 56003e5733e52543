"""Pipeline configuration: one struct holding every tunable, JSON-loadable.

CLI flags override file values; nothing is silently defaulted at run time
because the effective configuration is dumped in full into each run manifest.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class PipelineConfig:
    family: str = "log"
    scales: tuple[float, ...] = (2.0, 4.0, 8.0)
    window_radius: float = 32.0
    boundary: str = "mask"
    include_adequacy: bool = False
    adequacy_threshold: float = 0.3
    value_range: tuple[float, float] = (0.0, 3.0)
    epochs: int = 60
    learning_rate: float = 0.5
    batch_size: int = 512
    nn_threshold: float = 0.5
    combiner: str = "AND"
    target_far: float = 0.05
    min_region_area: int = 32
    seed: int = 0
    log_transform: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "value_range",
                           tuple(float(v) for v in self.value_range))

    def validate(self) -> "PipelineConfig":
        if len(self.scales) < 3:
            raise ConfigError(f"need at least 3 scales, got {self.scales}")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ConfigError(f"scales must be strictly increasing, got {self.scales}")
        if any(not s > 0 for s in self.scales):
            raise ConfigError(f"scales must be positive, got {self.scales}")
        for name in ("window_radius", "nn_threshold", "target_far",
                     "learning_rate", "adequacy_threshold"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.window_radius < 2.0 * max(self.scales):
            raise ConfigError(f"window_radius {self.window_radius} too small for "
                              f"max scale {max(self.scales)}")
        if not 0.0 < self.target_far < 1.0:
            raise ConfigError(f"target_far must be in (0, 1), got {self.target_far}")
        if len(self.value_range) != 2 or not self.value_range[0] < self.value_range[1]:
            raise ConfigError(f"value_range must be (lo, hi), got {self.value_range}")
        if self.combiner not in ("AND", "OR", "NN_ONLY", "LRT_ONLY"):
            raise ConfigError(f"unknown combiner {self.combiner!r}")
        if self.min_region_area < 0:
            raise ConfigError("min_region_area must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ConfigError("invalid training hyperparameters")
        return self

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["scales"] = list(self.scales)
        doc["value_range"] = list(self.value_range)
        return doc

    def with_overrides(self, **overrides) -> "PipelineConfig":
        """Replace the given fields; None values mean `keep current`."""
        known = {f.name for f in fields(self)}
        updates = {}
        for key, value in overrides.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            if value is not None:
                updates[key] = value
        return replace(self, **updates)


def load_config(path: str | None) -> PipelineConfig:
    """Config from a JSON file (unknown keys rejected); defaults when path is None."""
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a JSON object in {path}")
    base = PipelineConfig()
    try:
        return base.with_overrides(**{k: _coerce(k, v) for k, v in doc.items()})
    except TypeError as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc


def _coerce(key: str, value):
    if key in ("scales", "value_range") and isinstance(value, list):
        return tuple(value)
    return value
