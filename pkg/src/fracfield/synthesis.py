"""Synthetic random-field generation and correlation diagnostics.

Fields are generated by frequency-domain shaping: draw a white field, take its
FFT, impose the target spectral amplitude per bin, and invert.  Two amplitude
conventions are supported:

``fixed``
    The white spectrum is normalized to unit modulus per bin before shaping,
    so every realization has exactly the target periodogram and only random
    phases.  Variance ratios between filtered versions are then deterministic
    up to discretization, which is what the estimation tolerances assume.
``gaussian``
    The white spectrum is kept as-is (i.i.d. Gaussian bins), giving chi-square
    periodogram scatter per bin.

All operations are pure functions of (spec, model, seed) and bit-reproducible.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DegenerateFieldError
from .grid import FieldGrid, GridSpec, SpectralPowerLaw, radial_frequency_grid

_AMPLITUDE_MODES = ("fixed", "gaussian")


@dataclass
class CorrelationProfile:
    """Radially binned empirical autocovariance R(r), lag bin width one pixel."""

    lags: np.ndarray
    values: np.ndarray
    count_per_lag: np.ndarray


def _shaped_field(spec: GridSpec, amplitude_grid: np.ndarray, seed: int,
                  amplitudes: str) -> FieldGrid:
    """Invert a shaped spectrum with random phases drawn from a white field."""
    if amplitudes not in _AMPLITUDE_MODES:
        raise ConfigError(f"unknown amplitude mode {amplitudes!r}")
    rng = np.random.default_rng(seed)
    white = np.fft.fft2(rng.standard_normal(spec.shape))
    if amplitudes == "fixed":
        mod = np.abs(white)
        mod[mod == 0.0] = 1.0
        white = white / mod * np.sqrt(spec.pixel_count)
    z = np.fft.ifft2(white * amplitude_grid)
    # the shaped spectrum is Hermitian because the white spectrum is, so the
    # imaginary residue is pure rounding noise; anything larger is a bug
    if np.max(np.abs(z.imag)) >= 1e-9 * max(np.max(np.abs(z.real)), 1e-300):
        raise DegenerateFieldError("imaginary residue exceeds tolerance in synthesis")
    return FieldGrid(spec, np.ascontiguousarray(z.real))


def synthesize_power_law_field(spec: GridSpec, model: SpectralPowerLaw, seed: int,
                               amplitudes: str = "fixed") -> FieldGrid:
    """Zero-mean field whose spectral density is amplitude * |omega|^-exponent.

    The DC bin is zeroed (the model is singular there and the analysis filters
    cannot see DC anyway), so the output mean is exactly zero.
    """
    om = radial_frequency_grid(spec)
    amp = np.zeros(spec.shape)
    nz = om > 0.0
    amp[nz] = np.sqrt(model.amplitude * om[nz] ** (-model.exponent))
    return _shaped_field(spec, amp, seed, amplitudes)


def synthesize_short_range_field(spec: GridSpec, corr_length: float, seed: int,
                                 amplitudes: str = "fixed") -> FieldGrid:
    """Zero-mean field with summable, rapidly decaying correlation.

    Spectral density pi*L^2 * (L*omega)^2 * exp(-(L*omega)^2 / 2) with
    L = corr_length.  This integrates to unit variance on the continuum and
    has autocorrelation R(r)/R(0) = (1 - (r/L)^2/2) * exp(-(r/L)^2/2), which
    decays like a Gaussian; the vanishing spectral density at DC makes the
    correlation integrate to exactly zero, so partial absolute-correlation
    sums saturate instead of diverging.
    """
    if not (corr_length > 0 and np.isfinite(corr_length)):
        raise ConfigError(f"corr_length must be positive, got {corr_length}")
    om = radial_frequency_grid(spec)
    x2 = (corr_length * om) ** 2
    density = np.pi * corr_length ** 2 * x2 * np.exp(-0.5 * x2)
    return _shaped_field(spec, np.sqrt(density), seed, amplitudes)


def _normalized(values: np.ndarray) -> np.ndarray:
    centered = values - values.mean()
    sd = centered.std()
    if sd == 0.0:
        raise DegenerateFieldError("cannot variance-normalize a constant field")
    return centered / sd


def embed_anomaly(base: FieldGrid, region: np.ndarray, anomaly: SpectralPowerLaw,
                  blend_width: float, seed: int = 0,
                  brightness: float = 0.0) -> tuple[FieldGrid, np.ndarray]:
    """Composite an anomaly field into ``base`` over ``region``.

    Both components are variance-normalized before compositing so the texture
    (spectral exponent) is the only systematic cue; ``brightness`` optionally
    adds a mean offset inside the region.  The two fields are cross-faded
    linearly over ``blend_width`` pixels at the region boundary.  Returns the
    composite and the untouched truth mask.
    """
    region = np.asarray(region, dtype=bool)
    if region.shape != base.spec.shape:
        raise ConfigError(f"region shape {region.shape} does not match grid")
    if not anomaly.exponent > 0:
        raise ConfigError("anomaly exponent must be positive")
    if not region.any():
        warnings.warn("empty anomaly region, returning base unchanged")
        return FieldGrid(base.spec, base.values.copy()), region
    anom = synthesize_power_law_field(base.spec, anomaly, seed)
    b = _normalized(base.values)
    a = _normalized(anom.values)
    if region.all():
        weight = np.ones(base.spec.shape)
    elif blend_width <= 0:
        weight = region.astype(float)
    else:
        signed = (ndimage.distance_transform_edt(region)
                  - ndimage.distance_transform_edt(~region))
        weight = np.clip(0.5 + signed / blend_width, 0.0, 1.0)
    composite = weight * a + (1.0 - weight) * b + brightness * weight
    return FieldGrid(base.spec, composite), region


def apply_speckle(field: FieldGrid, looks: int, seed: int) -> FieldGrid:
    """Multiplicative multi-look intensity noise on the exponentiated field.

    Output is exp(field) times gamma(looks, 1/looks) noise (unit mean, variance
    1/looks), the standard multi-look intensity model.  The matching
    preprocessing on the analysis side is a log transform.
    """
    if not (isinstance(looks, (int, np.integer)) and looks >= 1):
        raise ConfigError(f"looks must be a positive integer, got {looks}")
    rng = np.random.default_rng(seed)
    noise = rng.gamma(float(looks), 1.0 / float(looks), size=field.spec.shape)
    return FieldGrid(field.spec, np.exp(field.values) * noise)


def radial_correlation(field: FieldGrid, max_lag: int) -> CorrelationProfile:
    """Empirical radial autocovariance out to ``max_lag`` pixels.

    The field is treated as periodic (matching how fields here are synthesized
    and filtered), so every circular offset contributes exactly one product per
    pixel; offsets are binned by their wrapped Euclidean distance rounded to
    the nearest integer lag.  values[0] is the sample variance.
    """
    h, w = field.spec.shape
    if not (isinstance(max_lag, (int, np.integer)) and 0 < max_lag < min(h, w) / 2):
        raise ConfigError(f"max_lag must be in (0, {min(h, w) / 2}), got {max_lag}")
    x = field.values - field.values.mean()
    scale = np.max(np.abs(field.values))
    variance = np.mean(x * x)
    if variance <= (1e-13 * (1.0 + scale)) ** 2:
        raise DegenerateFieldError("constant field has no correlation profile")
    spectrum = np.abs(np.fft.fft2(x)) ** 2
    acov = np.fft.ifft2(spectrum).real / x.size  # mean product per circular offset

    dy = np.minimum(np.arange(h), h - np.arange(h))
    dx = np.minimum(np.arange(w), w - np.arange(w))
    dist = np.sqrt(dy[:, None] ** 2 + dx[None, :] ** 2)
    lag_bin = np.rint(dist).astype(int)
    sel = lag_bin <= max_lag
    bins = lag_bin[sel]
    sums = np.bincount(bins, weights=acov[sel], minlength=max_lag + 1)
    offsets = np.bincount(bins, minlength=max_lag + 1)
    values = sums / offsets
    counts = offsets.astype(np.int64) * x.size  # ordered pixel pairs per bin
    return CorrelationProfile(np.arange(max_lag + 1, dtype=float), values, counts)


def lrd_divergence_statistic(profile: CorrelationProfile, radii) -> list[float]:
    """Partial sums S(rho) = sum_{1 <= r <= rho} |R(r)| * 2*pi*r.

    S grows without bound for long-range dependent fields and saturates for
    summable correlations, so ratios of S at nested radii separate the two
    regimes.
    """
    radii = list(radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ConfigError("radii must be strictly increasing")
    max_lag = profile.lags[-1]
    if radii and (radii[0] < 0 or radii[-1] > max_lag):
        raise ConfigError(f"radii must lie within [0, {max_lag}]")
    lags = profile.lags
    ring_mass = np.abs(profile.values) * 2.0 * np.pi * lags  # lag 0 carries none
    return [float(ring_mass[(lags >= 1) & (lags <= rho)].sum()) for rho in radii]


def elliptical_region(spec: GridSpec, center: tuple[float, float],
                      semi_axes: tuple[float, float], angle: float = 0.0) -> np.ndarray:
    """Boolean mask of a rotated ellipse, axes in pixels."""
    yy, xx = np.indices(spec.shape)
    c, s = np.cos(angle), np.sin(angle)
    yr = (yy - center[0]) * c - (xx - center[1]) * s
    xr = (yy - center[0]) * s + (xx - center[1]) * c
    return (yr / semi_axes[0]) ** 2 + (xr / semi_axes[1]) ** 2 <= 1.0


def make_scene(spec: GridSpec, seed: int, base_exponent: float = 0.8,
               anomaly_exponent: float = 1.8, blend_width: float = 4.0,
               speckle_looks: int = 0, contrast: float = 1.5,
               ) -> tuple[FieldGrid, np.ndarray]:
    """Labeled synthetic scene: base texture with one elliptical anomaly.

    The ellipse center and orientation are drawn from the seed; its semi-axes
    scale with the grid.  With ``speckle_looks`` >= 1 the returned raster is
    positive intensity, exp(contrast * composite) times speckle noise, and a
    log transform on load recovers an additively noisy scaled composite.
    Returns (observed field, truth mask).
    """
    children = np.random.SeedSequence(seed).spawn(4)
    geom = np.random.default_rng(children[0])
    base_seed, anom_seed, speckle_seed = (int(c.generate_state(1)[0]) for c in children[1:])

    h, w = spec.shape
    center = (int(geom.integers(round(0.39 * h), round(0.61 * h))),
              int(geom.integers(round(0.39 * w), round(0.61 * w))))
    semi_axes = (0.127 * h, 0.195 * w)
    region = elliptical_region(spec, center, semi_axes, angle=geom.uniform(0.0, np.pi))

    base = synthesize_power_law_field(spec, SpectralPowerLaw(1.0, base_exponent), base_seed)
    composite, truth = embed_anomaly(
        base, region, SpectralPowerLaw(1.0, anomaly_exponent), blend_width, seed=anom_seed)
    if speckle_looks >= 1:
        scaled = FieldGrid(spec, contrast * composite.values)
        return apply_speckle(scaled, speckle_looks, speckle_seed), truth
    return composite, truth
