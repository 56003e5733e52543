"""Self-similar random-field synthesis, exponent mapping, and detection.

The package models textured imagery as 2-D power-law (1/f-type) random
fields.  A dyadic pair of band-pass kernels turns the local spectral
exponent into a simple variance ratio, giving dense per-pixel exponent
maps; a two-stage classifier (Gaussian likelihood-ratio gate plus a small
neural network) flags anomalously smooth regions against that background.
"""
from .config import PipelineConfig, load_config
from .detection import (COMBINERS, DetectionMask, GaussianLrtModel, MaskMetrics,
                        MlpHyper, MlpModel, RgbMap, classify, evaluate_mask,
                        extract_features, fit_lrt, load_detection_model,
                        lrt_score, mlp_score, rgb_from_exponents,
                        save_detection_model, train_mlp)
from .errors import (ConfigError, DataError, DegenerateFieldError,
                     FracfieldError, NumericError, TrainingError,
                     UndefinedExponentError)
from .estimators import ExponentMapper, TwoStageDetector
from .exponent import (AdequacyMap, ExponentMap, HurstValue, VariancePair,
                       adequacy_statistic, exponent_from_variances,
                       exponent_to_hurst, global_variance_pair,
                       local_exponent_map)
from .filters import (FilterBank, FilteredPair, WaveletKernel, apply_filter,
                      build_filter_bank, build_log_kernel, dilate_kernel,
                      filter_pair)
from .grid import (FieldGrid, GridSpec, SpectralPowerLaw, axis_frequencies,
                   radial_frequency_grid)
from .raster import (load_exponent_map, load_field, load_raster,
                     save_exponent_map, save_field, save_raster, save_rgb)
from .synthesis import (CorrelationProfile, apply_speckle, elliptical_region,
                        embed_anomaly, lrd_divergence_statistic, make_scene,
                        radial_correlation, synthesize_power_law_field,
                        synthesize_short_range_field)

__version__ = "0.1.0"

__all__ = [
    "AdequacyMap", "COMBINERS", "ConfigError", "CorrelationProfile",
    "DataError", "DegenerateFieldError", "DetectionMask", "ExponentMap",
    "ExponentMapper", "FieldGrid", "FilterBank", "FilteredPair",
    "FracfieldError", "GaussianLrtModel", "GridSpec", "HurstValue",
    "MaskMetrics", "MlpHyper", "MlpModel", "NumericError", "PipelineConfig",
    "RgbMap", "SpectralPowerLaw", "TrainingError", "TwoStageDetector",
    "UndefinedExponentError", "VariancePair", "WaveletKernel",
    "adequacy_statistic", "apply_filter", "apply_speckle", "axis_frequencies",
    "build_filter_bank", "build_log_kernel", "classify", "dilate_kernel",
    "elliptical_region", "embed_anomaly", "evaluate_mask",
    "exponent_from_variances", "exponent_to_hurst", "extract_features",
    "filter_pair", "fit_lrt", "global_variance_pair", "lrd_divergence_statistic",
    "load_config", "load_detection_model", "load_exponent_map", "load_field",
    "load_raster", "local_exponent_map", "lrt_score", "make_scene", "mlp_score",
    "radial_correlation", "radial_frequency_grid", "rgb_from_exponents",
    "save_detection_model", "save_exponent_map", "save_field", "save_raster",
    "save_rgb", "synthesize_power_law_field", "synthesize_short_range_field",
    "train_mlp",
]
