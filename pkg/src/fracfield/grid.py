"""Grid geometry, field container, and the spectral power-law model.

Frequency convention, used everywhere in the package: omega is angular
frequency in radians per physical unit, omega = 2*pi*k/(N*spacing) along each
axis, and radial frequency is the Euclidean norm of the two axis frequencies.
The DC bin sits at index (0, 0) in unshifted FFT layout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class GridSpec:
    """Rectangular raster geometry: size in pixels plus physical pixel spacing."""

    width: int
    height: int
    spacing: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.width, (int, np.integer)) and isinstance(self.height, (int, np.integer))):
            raise ConfigError("grid dimensions must be integers")
        if self.width < 8 or self.height < 8:
            raise ConfigError(f"grid must be at least 8x8, got {self.width}x{self.height}")
        if not (self.spacing > 0 and np.isfinite(self.spacing)):
            raise ConfigError(f"spacing must be positive and finite, got {self.spacing}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def pixel_count(self) -> int:
        return self.height * self.width


@dataclass
class FieldGrid:
    """A real-valued raster tied to its grid geometry."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.spec.shape:
            raise ConfigError(
                f"value shape {self.values.shape} does not match grid {self.spec.shape}")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("field contains non-finite values")


@dataclass(frozen=True)
class SpectralPowerLaw:
    """Isotropic power-law spectral model: density = amplitude * |omega|^-exponent."""

    amplitude: float = 1.0
    exponent: float = 1.5

    def __post_init__(self):
        if not (self.amplitude > 0 and np.isfinite(self.amplitude)):
            raise ConfigError(f"amplitude must be positive, got {self.amplitude}")
        # upper bound keeps the order-2 analysis filters' output variance finite
        if not (0.0 <= self.exponent < 6.0):
            raise ConfigError(f"exponent must lie in [0, 6), got {self.exponent}")


def axis_frequencies(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Angular frequencies along (row, column) axes in FFT bin order."""
    wy = 2.0 * np.pi * np.fft.fftfreq(spec.height, d=spec.spacing)
    wx = 2.0 * np.pi * np.fft.fftfreq(spec.width, d=spec.spacing)
    return wy, wx


def radial_frequency_grid(spec: GridSpec) -> np.ndarray:
    """Radial angular frequency |omega| per FFT bin, shape (height, width)."""
    wy, wx = axis_frequencies(spec)
    # sqrt(y*y + x*x) rather than hypot: keeps |omega| at bin 2k bitwise equal
    # to 2*|omega| at bin k, which the dilation exactness contract relies on
    return np.sqrt(wy[:, None] * wy[:, None] + wx[None, :] * wx[None, :])
