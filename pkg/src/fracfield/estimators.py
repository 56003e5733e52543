"""Estimator-style wrappers over the functional core.

``ExponentMapper`` turns an image into per-pixel multi-scale exponent
features; ``TwoStageDetector`` fits and applies the two-stage classifier.
Both follow the fit/transform/predict conventions (constructor arguments are
stored verbatim, ``get_params``/``set_params``/``clone`` work as usual).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .detection import (DetectionMask, MlpHyper, classify, extract_features,
                        fit_lrt, lrt_score, mlp_score, train_mlp)
from .errors import ConfigError
from .exponent import AdequacyMap, ExponentMap, adequacy_statistic, local_exponent_map
from .filters import build_filter_bank
from .grid import FieldGrid, GridSpec

#: fill values for score grids at pixels without features
NN_SCORE_FILL = 0.0
LRT_SCORE_FILL = -1e30


class ExponentMapper(BaseEstimator, TransformerMixin):
    """Transform a 2-D image into per-pixel exponent features.

    ``transform`` returns an (height, width, k) array with NaN at invalid
    pixels, where k is the number of scales plus one when
    ``include_adequacy`` is set.
    """

    def __init__(self, scales=(2.0, 4.0, 8.0), window_radius=32.0, family="log",
                 boundary="mask", include_adequacy=False, spacing=1.0):
        self.scales = scales
        self.window_radius = window_radius
        self.family = family
        self.boundary = boundary
        self.include_adequacy = include_adequacy
        self.spacing = spacing

    def fit(self, X=None, y=None):
        if len(tuple(self.scales)) < 3:
            raise ConfigError("need at least 3 scales")
        return self

    def map_field(self, field: FieldGrid) -> tuple[ExponentMap, AdequacyMap | None]:
        """Full map objects for a field already carrying grid geometry."""
        bank = build_filter_bank(field.spec, self.scales, self.family)
        emap = local_exponent_map(field, bank, self.window_radius, self.boundary)
        adequacy = adequacy_statistic(emap) if self.include_adequacy else None
        return emap, adequacy

    def transform(self, X) -> np.ndarray:
        image = np.asarray(X, dtype=np.float64)
        if image.ndim != 2:
            raise ConfigError(f"expected a 2-D image, got shape {image.shape}")
        spec = GridSpec(image.shape[1], image.shape[0], self.spacing)
        emap, adequacy = self.map_field(FieldGrid(spec, image))
        planes = [emap.planes[i] for i in range(emap.planes.shape[0])]
        if adequacy is not None:
            planes.append(adequacy.dispersion)
        return np.stack(planes, axis=-1)


class TwoStageDetector(BaseEstimator):
    """Likelihood-ratio test plus small network, fused by a combiner.

    ``fit`` takes per-pixel feature rows and 0/1 labels; ``predict`` applies
    both stages and the combiner per row (no area cleanup, which needs image
    geometry; use ``detect`` for that).
    """

    def __init__(self, target_far=0.05, nn_threshold=0.5, combiner="AND",
                 min_region_area=32, epochs=60, learning_rate=0.5,
                 batch_size=512, seed=7, holdout_fraction=0.2):
        self.target_far = target_far
        self.nn_threshold = nn_threshold
        self.combiner = combiner
        self.min_region_area = min_region_area
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed
        self.holdout_fraction = holdout_fraction

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y).ravel()
        self.lrt_ = fit_lrt(X[y == 0], X[y == 1], self.target_far,
                            seed=self.seed, holdout_fraction=self.holdout_fraction)
        self.mlp_ = train_mlp(X, y, MlpHyper(self.epochs, self.learning_rate,
                                             self.batch_size, self.seed))
        return self

    def decision_function(self, X) -> np.ndarray:
        return lrt_score(X, self.lrt_)

    def score_nn(self, X) -> np.ndarray:
        return mlp_score(X, self.mlp_)

    def predict(self, X) -> np.ndarray:
        nn_pos = self.score_nn(X) > self.nn_threshold
        lrt_pos = self.decision_function(X) > self.lrt_.threshold
        if self.combiner == "AND":
            return (nn_pos & lrt_pos).astype(int)
        if self.combiner == "OR":
            return (nn_pos | lrt_pos).astype(int)
        if self.combiner == "NN_ONLY":
            return nn_pos.astype(int)
        if self.combiner == "LRT_ONLY":
            return lrt_pos.astype(int)
        raise ConfigError(f"unknown combiner {self.combiner!r}")

    def detect(self, emap: ExponentMap, adequacy: AdequacyMap | None = None,
               include_adequacy: bool = False) -> DetectionMask:
        """Score every valid pixel of an exponent map and build the cleaned mask."""
        features = extract_features(emap, adequacy, include_adequacy)
        nn_grid = np.full(emap.spec.shape, NN_SCORE_FILL)
        lrt_grid = np.full(emap.spec.shape, LRT_SCORE_FILL)
        if len(features):
            nn_grid[emap.valid] = self.score_nn(features)
            lrt_grid[emap.valid] = self.decision_function(features)
        return classify(FieldGrid(emap.spec, nn_grid), FieldGrid(emap.spec, lrt_grid),
                        self.nn_threshold, self.lrt_, self.combiner,
                        self.min_region_area, valid=emap.valid)
