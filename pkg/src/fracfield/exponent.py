"""Spectral-exponent estimation from dyadic filtered-pair variances.

For a power-law field, dilating the analysis kernel by two multiplies the
filtered variance by 2^(a+2) (a factor 2^a from the spectral slope and 2^2
from the two-dimensional dilation normalization), so
``a = log2(v2/v1) - 2`` inverts the relation.  The same ratio computed from
Gaussian-windowed local moments gives a per-pixel exponent map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DegenerateFieldError, UndefinedExponentError
from .filters import FilterBank, FilteredPair, filter_pair
from .grid import FieldGrid, GridSpec

#: estimates outside this range are clamped and flagged low-confidence
REPORT_RANGE = (-1.0, 7.0)
#: relative floor under which a local moment counts as degenerate
VARIANCE_FLOOR = 1e-12

_BOUNDARY_MODES = ("mask", "periodic")


@dataclass
class VariancePair:
    """Sample second moments of a filtered pair."""

    v1: float
    v2: float
    sample_count: int


@dataclass
class ExponentMap:
    """Per-pixel, per-scale exponent estimates with a shared validity mask.

    Invalid pixels (margin or degenerate moments) carry NaN in every plane
    and are excluded from all downstream statistics.  ``low_confidence``
    marks pixels whose raw estimate fell outside the report range and was
    clamped; those stay valid.
    """

    spec: GridSpec
    scales: tuple[float, ...]
    planes: np.ndarray
    valid: np.ndarray
    window_radius: float
    low_confidence: np.ndarray


@dataclass
class AdequacyMap:
    """Cross-scale dispersion of the local estimates; low values support
    a single-exponent model at that pixel."""

    spec: GridSpec
    dispersion: np.ndarray
    valid: np.ndarray


class HurstValue(NamedTuple):
    value: float
    in_range: bool


def global_variance_pair(pair: FilteredPair) -> VariancePair:
    """Whole-grid second moments of the two filtered outputs.

    Filtered outputs are zero-mean by admissibility; the mean is still
    subtracted defensively before squaring.
    """
    v = []
    for y in (pair.y1, pair.y2):
        centered = y.values - y.values.mean()
        v.append(float(np.mean(centered * centered)))
    if v[0] == 0.0 and v[1] == 0.0:
        raise DegenerateFieldError("filtered field is identically zero")
    return VariancePair(v[0], v[1], pair.y1.spec.pixel_count)


def exponent_from_variances(vp: VariancePair, floor_ratio: float = VARIANCE_FLOOR) -> float:
    """Invert the dyadic variance ratio; no clamping at this layer."""
    if vp.v2 <= 0.0 or vp.v1 <= floor_ratio * vp.v2:
        raise UndefinedExponentError(
            f"variance pair ({vp.v1}, {vp.v2}) too degenerate for a log ratio")
    return float(np.log2(vp.v2 / vp.v1) - 2.0)


def local_exponent_map(field: FieldGrid, bank: FilterBank, window_radius: float,
                       boundary: str = "mask",
                       floor_ratio: float = VARIANCE_FLOOR) -> ExponentMap:
    """Per-pixel exponent estimates from Gaussian-windowed local moments.

    Local second moments use a Gaussian window of standard deviation
    ``window_radius / 2`` (truncated at three standard deviations) applied to
    the squared filtered outputs.  With ``boundary="mask"`` a margin of
    ``window_radius + 4 * (2 * s_max)`` pixels is marked invalid, since
    periodic filtering contaminates edges of non-periodic imagery; use
    ``boundary="periodic"`` for fields that are genuinely periodic (anything
    synthesized here), where no margin is necessary.
    """
    if boundary not in _BOUNDARY_MODES:
        raise ConfigError(f"boundary must be one of {_BOUNDARY_MODES}, got {boundary!r}")
    if field.spec != bank.spec:
        raise ConfigError("field and bank grids do not match")
    max_scale_px = max(bank.scales) / field.spec.spacing
    if window_radius < 2.0 * max_scale_px:
        raise ConfigError(
            f"window_radius {window_radius} too small for max scale "
            f"{max_scale_px} px; needs >= {2.0 * max_scale_px}")

    h, w = field.spec.shape
    sigma = window_radius / 2.0
    mode = "wrap" if boundary == "periodic" else "nearest"
    lo, hi = REPORT_RANGE
    planes = np.empty((len(bank.scales), h, w))
    degenerate = np.zeros((h, w), dtype=bool)
    for i in range(len(bank.scales)):
        pair = filter_pair(field, bank, i)
        m1 = ndimage.gaussian_filter(pair.y1.values ** 2, sigma, truncate=3.0, mode=mode)
        m2 = ndimage.gaussian_filter(pair.y2.values ** 2, sigma, truncate=3.0, mode=mode)
        bad = (m1 <= floor_ratio * m2) | (m2 <= floor_ratio * m1)  # catches all-zero too
        degenerate |= bad
        with np.errstate(divide="ignore", invalid="ignore"):
            planes[i] = np.log2(m2 / m1) - 2.0
        planes[i][bad] = np.nan

    valid = ~degenerate
    if boundary == "mask":
        margin = int(np.ceil(window_radius + 4.0 * (2.0 * max_scale_px)))
        edge = np.zeros((h, w), dtype=bool)
        if 2 * margin < h and 2 * margin < w:
            edge[margin:h - margin, margin:w - margin] = True
        valid &= edge

    raw = planes[:, valid]
    low_confidence = np.zeros((h, w), dtype=bool)
    low_confidence[valid] = ((raw < lo) | (raw > hi)).any(axis=0)
    planes[:, valid] = np.clip(raw, lo, hi)
    planes[:, ~valid] = np.nan
    return ExponentMap(field.spec, bank.scales, planes, valid,
                       float(window_radius), low_confidence)


def adequacy_statistic(emap: ExponentMap) -> AdequacyMap:
    """Per-pixel standard deviation of the estimates across scales."""
    if emap.planes.shape[0] < 2:
        raise ConfigError("adequacy needs at least two scale planes")
    dispersion = np.full(emap.spec.shape, np.nan)
    dispersion[emap.valid] = emap.planes[:, emap.valid].std(axis=0, ddof=0)
    return AdequacyMap(emap.spec, dispersion, emap.valid.copy())


def exponent_to_hurst(a: float) -> HurstValue:
    """Convert a spectral exponent to a Hurst index via H = (a - 2) / 2.

    This is the standard two-dimensional self-similarity convention (spectral
    slope = 2H + dimension); the flag is False when H falls outside the open
    interval (0, 1), including both boundary values.
    """
    h = (a - 2.0) / 2.0
    return HurstValue(h, bool(0.0 < h < 1.0))
