"""Two-stage smooth-region detection on exponent maps.

Stage one is a two-class Gaussian log-likelihood-ratio test with its decision
threshold calibrated to a target false-alarm rate on held-out background
samples.  Stage two is a small feed-forward network ([k, 8, 1], logistic
activations throughout) trained by seeded mini-batch gradient descent on
cross-entropy.  A combiner (AND by default) merges the two per-pixel
decisions, and connected components below a minimum area are dropped.

Also provides the RGB rendering of multi-scale exponent maps: each channel is
one scale plane mapped linearly to bytes, so regions where all scales agree
render grey.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field as dataclass_field
from typing import NamedTuple

import numpy as np
from scipy import linalg, ndimage

from .errors import ConfigError, DataError, NumericError, TrainingError
from .exponent import AdequacyMap, ExponentMap
from .grid import FieldGrid, GridSpec

COMBINERS = ("AND", "OR", "NN_ONLY", "LRT_ONLY")
HIDDEN_UNITS = 8


@dataclass
class RgbMap:
    """Byte-valued RGB rendering of three exponent planes."""

    spec: GridSpec
    channels: np.ndarray
    scale_triple: tuple[int, int, int]
    value_range: tuple[float, float]


@dataclass
class GaussianLrtModel:
    """Class-conditional Gaussian models plus the calibrated log-LR threshold."""

    mean_sea: np.ndarray
    cov_sea: np.ndarray
    mean_oil: np.ndarray
    cov_oil: np.ndarray
    threshold: float
    target_far: float
    regularization: tuple[float, float] = (0.0, 0.0)
    separable: bool = True


@dataclass
class MlpHyper:
    epochs: int = 60
    learning_rate: float = 0.5
    batch_size: int = 512
    seed: int = 7


@dataclass
class MlpModel:
    """Fully-connected [k, 8, 1] network with logistic activations.

    Inputs are standardized with the stored per-feature mean and scale before
    the first layer, so the trained function has no hidden absolute scale.
    """

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_mean: np.ndarray
    input_scale: np.ndarray
    activation: str = "sigmoid"
    training_meta: dict = dataclass_field(default_factory=dict)


@dataclass
class DetectionMask:
    """Binary detection output with the per-stage score maps that produced it."""

    spec: GridSpec
    mask: np.ndarray
    scores_nn: np.ndarray
    scores_lrt: np.ndarray
    combiner: str
    min_region_area: int


class MaskMetrics(NamedTuple):
    iou: float
    precision: float
    recall: float


def rgb_from_exponents(emap: ExponentMap, scale_triple: tuple[int, int, int] = (0, 1, 2),
                       value_range: tuple[float, float] = (0.0, 3.0)) -> RgbMap:
    """Map three scale planes linearly to RGB bytes; invalid pixels go black."""
    triple = tuple(int(i) for i in scale_triple)
    if len(set(triple)) != 3 or any(not 0 <= i < len(emap.scales) for i in triple):
        raise ConfigError(f"scale_triple must be 3 distinct plane indices, got {triple}")
    a_min, a_max = float(value_range[0]), float(value_range[1])
    if not a_min < a_max:
        raise ConfigError(f"value_range must be increasing, got {value_range}")
    channels = np.zeros((3,) + emap.spec.shape, dtype=np.uint8)
    for c, i in enumerate(triple):
        norm = np.clip((emap.planes[i] - a_min) / (a_max - a_min), 0.0, 1.0)
        # round half away from zero so byte values are platform independent
        byte = np.floor(255.0 * norm + 0.5)
        channels[c][emap.valid] = byte[emap.valid].astype(np.uint8)
    return RgbMap(emap.spec, channels, triple, (a_min, a_max))


def extract_features(emap: ExponentMap, adequacy: AdequacyMap | None = None,
                     include_adequacy: bool = False) -> np.ndarray:
    """Per-valid-pixel feature rows in row-major pixel order.

    Features are the per-scale exponent estimates, optionally with the
    cross-scale dispersion appended.  An all-invalid map yields an empty
    (0, k) array rather than an error.
    """
    if include_adequacy:
        if adequacy is None:
            raise ConfigError("include_adequacy requires an adequacy map")
        if adequacy.spec != emap.spec or not np.array_equal(adequacy.valid, emap.valid):
            raise ConfigError("adequacy map does not share the exponent map's validity")
    rows = [emap.planes[i][emap.valid] for i in range(emap.planes.shape[0])]
    if include_adequacy:
        rows.append(adequacy.dispersion[emap.valid])
    return np.stack(rows, axis=-1) if rows else np.empty((0, 0))


def _safe_cholesky(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Cholesky factor, regularizing by lambda*I only if the plain factorization fails."""
    try:
        return np.linalg.cholesky(cov), cov, 0.0
    except np.linalg.LinAlgError:
        lam = 1e-6 * np.trace(cov) / cov.shape[0]
        reg = cov + lam * np.eye(cov.shape[0])
        try:
            return np.linalg.cholesky(reg), reg, float(lam)
        except np.linalg.LinAlgError as exc:
            raise NumericError("covariance not positive-definite even after "
                               f"regularization (lambda={lam})") from exc


def _gauss_loglik(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    chol = np.linalg.cholesky(cov)
    sol = linalg.solve_triangular(chol, (x - mean).T, lower=True)
    maha = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    k = x.shape[1]
    return -0.5 * (maha + logdet + k * np.log(2.0 * np.pi))


def _class_features(features, name: str) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise DataError(f"{name} features must be a nonempty (samples, dims) array")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} features contain non-finite values")
    return arr


def fit_lrt(features_sea, features_oil, target_far: float, seed: int = 0,
            holdout_fraction: float = 0.2) -> GaussianLrtModel:
    """Fit class Gaussians and calibrate the log-LR threshold.

    The sea set is split (seeded) and the threshold is set at the empirical
    (1 - target_far) quantile of held-out sea scores, so the held-out
    false-alarm rate matches target_far up to quantile granularity.
    """
    sea = _class_features(features_sea, "sea")
    oil = _class_features(features_oil, "oil")
    if sea.shape[1] != oil.shape[1]:
        raise ConfigError("class feature dimensions differ")
    k = sea.shape[1]
    if len(sea) < 10 * k or len(oil) < 10 * k:
        raise DataError(f"need at least {10 * k} samples per class, "
                        f"got sea={len(sea)}, oil={len(oil)}")
    if not 0.0 < target_far < 1.0:
        raise ConfigError(f"target_far must be in (0, 1), got {target_far}")
    if not 0.0 < holdout_fraction < 1.0:
        raise ConfigError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(sea))
    n_hold = max(1, int(round(holdout_fraction * len(sea))))
    held_out, train_sea = sea[perm[:n_hold]], sea[perm[n_hold:]]

    def stats(arr):
        mean = arr.mean(axis=0)
        cov = np.atleast_2d(np.cov(arr.T))
        _, cov_pd, lam = _safe_cholesky(cov)
        return mean, cov_pd, lam

    mean_sea, cov_sea, lam_sea = stats(train_sea)
    mean_oil, cov_oil, lam_oil = stats(oil)
    model = GaussianLrtModel(mean_sea, cov_sea, mean_oil, cov_oil, 0.0,
                             float(target_far), (lam_sea, lam_oil))
    scores = lrt_score(held_out, model)
    model.threshold = float(np.quantile(scores, 1.0 - target_far))
    model.separable = bool(scores.max() - scores.min() > 1e-9)
    return model


def lrt_score(features, model: GaussianLrtModel) -> np.ndarray:
    """Per-sample log-likelihood ratio, anomaly class over background class."""
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != len(model.mean_sea):
        raise ConfigError(f"feature dimension {arr.shape} does not match model "
                          f"dimension {len(model.mean_sea)}")
    return (_gauss_loglik(arr, model.mean_oil, model.cov_oil)
            - _gauss_loglik(arr, model.mean_sea, model.cov_sea))


def _affine(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    # fixed-order accumulation: each output row is computed identically whether
    # the row is scored alone or inside a batch
    out = np.tile(bias, (x.shape[0], 1))
    for j in range(weights.shape[0]):
        out += x[:, j, None] * weights[j]
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _forward(weights, biases, x):
    hidden = _sigmoid(_affine(x, weights[0], biases[0]))
    output = _sigmoid(_affine(hidden, weights[1], biases[1]))[:, 0]
    return hidden, output


def _loss_and_grads(weights, biases, x, y):
    """Mean cross-entropy over the batch and its analytic gradients."""
    hidden, out = _forward(weights, biases, x)
    clipped = np.clip(out, 1e-12, 1.0 - 1e-12)
    loss = float(-np.mean(y * np.log(clipped) + (1.0 - y) * np.log(1.0 - clipped)))
    delta_out = (out - y)[:, None] / len(y)
    grad_w2 = hidden.T @ delta_out
    grad_b2 = delta_out.sum(axis=0)
    delta_hidden = (delta_out @ weights[1].T) * hidden * (1.0 - hidden)
    grad_w1 = x.T @ delta_hidden
    grad_b1 = delta_hidden.sum(axis=0)
    return loss, [grad_w1, grad_w2], [grad_b1, grad_b2]


def train_mlp(features, labels, hyper: MlpHyper = MlpHyper()) -> MlpModel:
    """Train the [k, 8, 1] network; deterministic for a fixed hyper.seed."""
    x = _class_features(features, "training")
    y = np.asarray(labels, dtype=np.float64).ravel()
    if len(y) != len(x) or not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("labels must be one 0/1 value per feature row")
    frac = y.mean()
    if not 0.05 <= frac <= 0.95:
        raise DataError(f"classes too imbalanced for training (positive rate {frac:.3f})")
    if hyper.epochs < 1 or hyper.batch_size < 1 or not hyper.learning_rate > 0:
        raise ConfigError(f"invalid training hyperparameters {hyper}")

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    xn = (x - mean) / scale

    k = x.shape[1]
    rng = np.random.default_rng(hyper.seed)
    weights = [rng.normal(0.0, 1.0 / np.sqrt(k), (k, HIDDEN_UNITS)),
               rng.normal(0.0, 1.0 / np.sqrt(HIDDEN_UNITS), (HIDDEN_UNITS, 1))]
    biases = [np.zeros(HIDDEN_UNITS), np.zeros(1)]

    epoch_losses = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(xn))
        batch_losses = []
        for start in range(0, len(order), hyper.batch_size):
            rows = order[start:start + hyper.batch_size]
            loss, grad_w, grad_b = _loss_and_grads(weights, biases, xn[rows], y[rows])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            for i in range(2):
                weights[i] -= hyper.learning_rate * grad_w[i]
                biases[i] -= hyper.learning_rate * grad_b[i]
            batch_losses.append(loss * len(rows))
        epoch_losses.append(sum(batch_losses) / len(xn))

    meta = {"epochs": hyper.epochs, "learning_rate": hyper.learning_rate,
            "batch_size": hyper.batch_size, "seed": hyper.seed,
            "final_loss": epoch_losses[-1], "epoch_losses": epoch_losses}
    return MlpModel((k, HIDDEN_UNITS, 1), weights, biases, mean, scale,
                    training_meta=meta)


def mlp_score(features, model: MlpModel) -> np.ndarray:
    """Forward pass; per-sample scores in [0, 1]."""
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != model.layer_dims[0]:
        raise ConfigError(f"feature dimension {arr.shape} does not match model "
                          f"input dimension {model.layer_dims[0]}")
    xn = (arr - model.input_mean) / model.input_scale
    _, out = _forward(model.weights, model.biases, xn)
    return out


def _drop_small_components(mask: np.ndarray, min_region_area: int) -> np.ndarray:
    if min_region_area <= 1 or not mask.any():
        return mask
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return mask
    areas = np.bincount(labels.ravel())
    keep = areas >= min_region_area
    keep[0] = False
    return keep[labels]


def classify(scores_nn: FieldGrid, scores_lrt: FieldGrid, nn_threshold: float,
             lrt_model: GaussianLrtModel, combiner: str = "AND",
             min_region_area: int = 32,
             valid: np.ndarray | None = None) -> DetectionMask:
    """Threshold and combine the two score maps into a cleaned binary mask.

    Connected components (8-connectivity) smaller than ``min_region_area``
    are removed.  Pixels outside ``valid`` (when given) are never positive.
    """
    if scores_nn.spec != scores_lrt.spec:
        raise ConfigError("score maps do not share a grid")
    if combiner not in COMBINERS:
        raise ConfigError(f"combiner must be one of {COMBINERS}, got {combiner!r}")
    nn_pos = scores_nn.values > nn_threshold
    lrt_pos = scores_lrt.values > lrt_model.threshold
    if combiner == "AND":
        positive = nn_pos & lrt_pos
    elif combiner == "OR":
        positive = nn_pos | lrt_pos
    elif combiner == "NN_ONLY":
        positive = nn_pos
    else:
        positive = lrt_pos
    if valid is not None:
        positive &= np.asarray(valid, dtype=bool)
    cleaned = _drop_small_components(positive, int(min_region_area))
    return DetectionMask(scores_nn.spec, cleaned, scores_nn.values,
                         scores_lrt.values, combiner, int(min_region_area))


def evaluate_mask(pred, truth) -> MaskMetrics:
    """Intersection-over-union, precision, and recall of a binary mask.

    The empty-versus-empty case is defined as perfect agreement (1, 1, 1).
    """
    pred_mask = pred.mask if isinstance(pred, DetectionMask) else np.asarray(pred, bool)
    truth = np.asarray(truth, dtype=bool)
    if pred_mask.shape != truth.shape:
        raise ConfigError(f"mask shapes differ: {pred_mask.shape} vs {truth.shape}")
    tp = int(np.sum(pred_mask & truth))
    fp = int(np.sum(pred_mask & ~truth))
    fn = int(np.sum(~pred_mask & truth))
    union = tp + fp + fn
    iou = 1.0 if union == 0 else tp / union
    precision = 1.0 if (tp + fp == 0 and fn == 0) else (tp / (tp + fp) if tp + fp else 0.0)
    recall = 1.0 if (tp + fn == 0 and fp == 0) else (tp / (tp + fn) if tp + fn else 0.0)
    return MaskMetrics(iou, precision, recall)


# --- model persistence -------------------------------------------------------

def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_detection_model(path: str, lrt: GaussianLrtModel, mlp: MlpModel,
                         params: dict | None = None) -> None:
    """Serialize both classifier stages and their hyperparameters as one JSON file."""
    doc = {
        "format": "fracfield-detection-model",
        "version": 1,
        "lrt": {
            "mean_sea": lrt.mean_sea.tolist(), "cov_sea": lrt.cov_sea.tolist(),
            "mean_oil": lrt.mean_oil.tolist(), "cov_oil": lrt.cov_oil.tolist(),
            "threshold": lrt.threshold, "target_far": lrt.target_far,
            "regularization": list(lrt.regularization), "separable": lrt.separable,
        },
        "mlp": {
            "layer_dims": list(mlp.layer_dims),
            "weights": [w.tolist() for w in mlp.weights],
            "biases": [b.tolist() for b in mlp.biases],
            "input_mean": mlp.input_mean.tolist(),
            "input_scale": mlp.input_scale.tolist(),
            "activation": mlp.activation,
            "training_meta": mlp.training_meta,
        },
        "params": params or {},
    }
    _atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True))


def load_detection_model(path: str) -> tuple[GaussianLrtModel, MlpModel, dict]:
    """Inverse of save_detection_model; floats round-trip exactly."""
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read detection model {path}: {exc}") from exc
    if doc.get("format") != "fracfield-detection-model":
        raise DataError(f"{path} is not a detection model file")
    try:
        l, m = doc["lrt"], doc["mlp"]
        lrt = GaussianLrtModel(
            np.array(l["mean_sea"]), np.array(l["cov_sea"]),
            np.array(l["mean_oil"]), np.array(l["cov_oil"]),
            float(l["threshold"]), float(l["target_far"]),
            tuple(l["regularization"]), bool(l["separable"]))
        mlp = MlpModel(tuple(m["layer_dims"]),
                       [np.array(w) for w in m["weights"]],
                       [np.array(b) for b in m["biases"]],
                       np.array(m["input_mean"]), np.array(m["input_scale"]),
                       m["activation"], m["training_meta"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed detection model {path}: {exc}") from exc
    return lrt, mlp, doc.get("params", {})
