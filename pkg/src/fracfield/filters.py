"""Isotropic analysis wavelets in the frequency domain and their dyadic pairs.

The base family is the Laplacian-of-Gaussian response
``(s*|omega|)^2 * exp(-(s*|omega|)^2 / 2)``, which is admissible (zero at DC,
exactly) and decays fast enough that dilation never wraps meaningfully.  A
dilated partner at twice the scale is defined through the spatial rescaling
h2(p) = h1(p/2), which in two dimensions reads H2(omega) = 4 * H1(2*omega);
evaluating the closed form at the doubled frequencies makes that identity hold
bitwise on alias-free bins.  Filtering is circular convolution realized as a
pointwise product in frequency.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .grid import FieldGrid, GridSpec, radial_frequency_grid

LOG_FAMILY = "log"


def _log_response(scale: float, radial: np.ndarray) -> np.ndarray:
    x2 = (scale * radial) ** 2
    return x2 * np.exp(-0.5 * x2)

_FAMILIES = {LOG_FAMILY: _log_response}


@dataclass
class WaveletKernel:
    """Sampled frequency response of one admissible isotropic kernel."""

    spec: GridSpec
    scale: float
    response: np.ndarray
    family: str = LOG_FAMILY

    def __post_init__(self):
        if self.response.shape != self.spec.shape:
            raise ConfigError("kernel response shape does not match grid")
        if self.response[0, 0] != 0.0:
            raise ConfigError("kernel must have exactly zero DC response")
        if not np.all(np.isfinite(self.response)) or np.any(self.response < 0):
            raise ConfigError("kernel response must be finite and nonnegative")


@dataclass
class FilterBank:
    """Per-scale (kernel, dilated kernel) pairs over strictly increasing scales."""

    spec: GridSpec
    scales: tuple[float, ...]
    kernels: tuple[tuple[WaveletKernel, WaveletKernel], ...]
    family: str = LOG_FAMILY


@dataclass
class FilteredPair:
    """One field filtered with a kernel and with its dilated partner."""

    scale: float
    y1: FieldGrid
    y2: FieldGrid


def build_log_kernel(spec: GridSpec, scale: float) -> WaveletKernel:
    """Laplacian-of-Gaussian kernel at ``scale`` (physical units) on the grid."""
    if not (scale > 0 and np.isfinite(scale)):
        raise ConfigError(f"scale must be positive, got {scale}")
    if scale > min(spec.width, spec.height) * spec.spacing / 8.0:
        raise ConfigError(
            f"scale {scale} too large for {spec.width}x{spec.height} grid")
    response = _log_response(scale, radial_frequency_grid(spec))
    return WaveletKernel(spec, float(scale), response, LOG_FAMILY)


def dilate_kernel(kernel: WaveletKernel) -> WaveletKernel:
    """Kernel at twice the scale: response2(omega) = 4 * response1(2*omega).

    The base response is re-evaluated from its closed form at the doubled
    frequencies, so bins whose doubled frequency exceeds Nyquist take the
    (vanishingly small) analytic tail value instead of wrapping.
    """
    base = _FAMILIES[kernel.family]
    response = 4.0 * base(kernel.scale, 2.0 * radial_frequency_grid(kernel.spec))
    return WaveletKernel(kernel.spec, 2.0 * kernel.scale, response, kernel.family)


def build_filter_bank(spec: GridSpec, scales, family: str = LOG_FAMILY) -> FilterBank:
    """Bank of dyadic kernel pairs; needs at least three scales."""
    if family not in _FAMILIES:
        raise ConfigError(f"unknown filter family {family!r}")
    scales = tuple(float(s) for s in scales)
    if len(scales) < 3:
        raise ConfigError(f"filter bank needs at least 3 scales, got {len(scales)}")
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ConfigError(f"scales must be strictly increasing, got {scales}")
    pairs = []
    for s in scales:
        k1 = build_log_kernel(spec, s)
        pairs.append((k1, dilate_kernel(k1)))
    return FilterBank(spec, scales, tuple(pairs), family)


def apply_filter(field: FieldGrid, kernel: WaveletKernel) -> FieldGrid:
    """Circular convolution via pointwise product in the frequency domain."""
    if field.spec != kernel.spec:
        raise ConfigError("field and kernel grids do not match")
    out = np.fft.ifft2(np.fft.fft2(field.values) * kernel.response)
    peak = np.max(np.abs(out.real))
    if np.max(np.abs(out.imag)) >= 1e-9 * max(peak, 1e-300) + 1e-300:
        raise NumericError("filtering produced non-negligible imaginary residue")
    return FieldGrid(field.spec, np.ascontiguousarray(out.real))


def filter_pair(field: FieldGrid, bank: FilterBank, scale_index: int) -> FilteredPair:
    """Apply the kernel pair at ``bank.scales[scale_index]`` to the field."""
    if not 0 <= scale_index < len(bank.scales):
        raise ConfigError(
            f"scale_index {scale_index} out of range for {len(bank.scales)} scales")
    k1, k2 = bank.kernels[scale_index]
    return FilteredPair(bank.scales[scale_index],
                        apply_filter(field, k1), apply_filter(field, k2))
