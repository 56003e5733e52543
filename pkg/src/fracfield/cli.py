"""Command-line pipeline.

Subcommands: ``synth`` (field/scene generation), ``filter`` (apply one kernel
pair), ``estimate`` (exponent and adequacy maps plus global estimates),
``rgbmap``, ``train`` (both classifier stages from image+mask pairs),
``detect`` (end-to-end mask), ``eval`` (mask metrics), ``lrd-check``
(correlation profile and divergence statistic).

Every run takes an optional JSON config file; explicit flags win over the
file.  A JSON manifest with the full effective configuration and input/output
hashes is written next to each command's primary output; path strings and
timestamps live only under the manifest's ``volatile`` key, so reruns with
identical parameters produce byte-identical rasters and stable manifests.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys

import numpy as np
from scipy import ndimage

from .config import PipelineConfig, load_config
from .detection import (MlpHyper, evaluate_mask, extract_features, fit_lrt,
                        load_detection_model, lrt_score, mlp_score,
                        rgb_from_exponents, save_detection_model, train_mlp)
from .errors import ConfigError, DataError, FracfieldError, NumericError
from .estimators import TwoStageDetector
from .exponent import (adequacy_statistic, exponent_from_variances,
                       global_variance_pair, local_exponent_map)
from .filters import build_filter_bank, filter_pair
from .grid import FieldGrid, GridSpec, SpectralPowerLaw
from .raster import (load_field, load_raster, save_exponent_map, save_field,
                     save_raster, save_rgb)
from .synthesis import (lrd_divergence_statistic, make_scene, radial_correlation,
                        synthesize_power_law_field, synthesize_short_range_field)
from . import raster as _raster


def _err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(primary_out: str, command: str, config: PipelineConfig,
                    args_doc: dict, inputs: list[str], outputs: list[str]) -> str:
    params = {}
    for key, value in args_doc.items():
        if isinstance(value, str) and (os.sep in value or os.path.exists(value)):
            value = os.path.basename(value)
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            value = [os.path.basename(v) for v in value]
        params[key] = value
    manifest = {
        "command": command,
        "parameters": {"config": config.to_dict(), "args": params},
        "inputs": {os.path.basename(p): _sha256(p) for p in inputs},
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
        "volatile": {
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "working_dir": os.getcwd(),
            "paths": {"inputs": [os.path.abspath(p) for p in inputs],
                      "outputs": [os.path.abspath(p) for p in outputs]},
        },
    }
    path = primary_out + ".manifest.json"
    _raster._atomic_write_bytes(path, json.dumps(manifest, indent=1, sort_keys=True).encode())
    return path


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    overrides = {}
    for name in ("seed", "window_radius", "boundary", "include_adequacy",
                 "log_transform", "target_far", "nn_threshold", "combiner",
                 "min_region_area", "epochs", "learning_rate", "batch_size",
                 "family"):
        if getattr(args, name, None) is not None:
            overrides[name] = getattr(args, name)
    if getattr(args, "scales", None) is not None:
        overrides["scales"] = _parse_floats(args.scales)
    if getattr(args, "value_range", None) is not None:
        overrides["value_range"] = tuple(args.value_range)
    return cfg.with_overrides(**overrides).validate()


def _grid_from_args(args) -> GridSpec:
    width = args.width if args.width is not None else args.size
    height = args.height if args.height is not None else args.size
    return GridSpec(int(width), int(height), float(args.spacing))


# --- subcommand handlers -----------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    spec = _grid_from_args(args)
    outputs = [args.out]
    if args.kind == "power-law":
        model = SpectralPowerLaw(args.amplitude, args.exponent)
        field = synthesize_power_law_field(spec, model, cfg.seed, args.spectrum)
        meta = {"kind": args.kind, "exponent": args.exponent,
                "amplitude": args.amplitude, "seed": cfg.seed, "spectrum": args.spectrum}
        save_field(field, args.out, metadata=meta)
    elif args.kind == "short-range":
        field = synthesize_short_range_field(spec, args.corr_length, cfg.seed, args.spectrum)
        meta = {"kind": args.kind, "corr_length": args.corr_length,
                "seed": cfg.seed, "spectrum": args.spectrum}
        save_field(field, args.out, metadata=meta)
    else:
        observed, truth = make_scene(
            spec, cfg.seed, base_exponent=args.base_exponent,
            anomaly_exponent=args.anomaly_exponent, blend_width=args.blend_width,
            speckle_looks=args.looks, contrast=args.contrast)
        meta = {"kind": args.kind, "base_exponent": args.base_exponent,
                "anomaly_exponent": args.anomaly_exponent, "looks": args.looks,
                "contrast": args.contrast, "blend_width": args.blend_width,
                "seed": cfg.seed}
        save_field(observed, args.out, metadata=meta)
        truth_path = os.path.splitext(args.out)[0] + ".truth.png"
        save_raster(truth.astype(float), truth_path, "png8")
        outputs.append(truth_path)
    args_doc = {k: getattr(args, k) for k in
                ("kind", "size", "width", "height", "spacing", "exponent",
                 "amplitude", "corr_length", "base_exponent", "anomaly_exponent",
                 "looks", "contrast", "blend_width", "spectrum", "out")}
    _write_manifest(args.out, "synth", cfg, args_doc, [], outputs)
    print(args.out)
    return 0


def cmd_filter(args) -> int:
    cfg = _config_from_args(args)
    field = load_field(args.input, log_transform=cfg.log_transform)
    bank = build_filter_bank(field.spec, cfg.scales, cfg.family)
    pair = filter_pair(field, bank, args.scale_index)
    meta = {"scale": pair.scale, "planes": ["y1", "y2"], "source": os.path.basename(args.input)}
    save_raster(np.stack([pair.y1.values, pair.y2.values]), args.out,
                spacing=field.spec.spacing, metadata=meta)
    _write_manifest(args.out, "filter", cfg,
                    {"input": args.input, "scale_index": args.scale_index, "out": args.out},
                    [args.input], [args.out])
    print(args.out)
    return 0


def cmd_estimate(args) -> int:
    cfg = _config_from_args(args)
    field = load_field(args.input, log_transform=cfg.log_transform)
    bank = build_filter_bank(field.spec, cfg.scales, cfg.family)
    global_estimates = {}
    for i, scale in enumerate(bank.scales):
        vp = global_variance_pair(filter_pair(field, bank, i))
        global_estimates[f"{scale:g}"] = exponent_from_variances(vp)
    emap = local_exponent_map(field, bank, cfg.window_radius, cfg.boundary)
    adequacy = adequacy_statistic(emap) if cfg.include_adequacy else None
    save_exponent_map(emap, args.out, adequacy,
                      metadata={"source": os.path.basename(args.input)})

    summary = {"global_exponents": global_estimates,
               "valid_fraction": float(emap.valid.mean()),
               "low_confidence_fraction": float(emap.low_confidence.mean())}
    if adequacy is not None:
        disp = adequacy.dispersion[adequacy.valid]
        summary["adequacy_mean"] = float(disp.mean()) if disp.size else None
        summary["adequacy_exceeding_threshold"] = (
            float((disp > cfg.adequacy_threshold).mean()) if disp.size else None)
    summary_path = args.out + ".summary.json"
    _raster._atomic_write_bytes(summary_path,
                                json.dumps(summary, indent=1, sort_keys=True).encode())
    for scale, value in global_estimates.items():
        print(f"scale {scale} global_exponent {value:.4f}")
    _write_manifest(args.out, "estimate", cfg,
                    {"input": args.input, "out": args.out},
                    [args.input], [args.out, summary_path])
    return 0


def cmd_rgbmap(args) -> int:
    cfg = _config_from_args(args)
    emap, _ = _raster.load_exponent_map(args.input)
    triple = tuple(int(i) for i in _parse_floats(args.triple))
    rgb = rgb_from_exponents(emap, triple, cfg.value_range)
    save_rgb(rgb.channels, args.out)
    _write_manifest(args.out, "rgbmap", cfg,
                    {"input": args.input, "triple": args.triple, "out": args.out},
                    [args.input], [args.out])
    print(args.out)
    return 0


def _scene_features(image_path: str, mask_path: str, cfg: PipelineConfig):
    """Features plus per-pixel labels for one labeled training scene."""
    field = load_field(image_path, log_transform=cfg.log_transform)
    truth_values, _ = load_raster(mask_path)
    if truth_values.ndim != 2 or truth_values.shape != field.spec.shape:
        raise DataError(f"mask {mask_path} does not match image {image_path}")
    truth = truth_values > 0.5
    bank = build_filter_bank(field.spec, cfg.scales, cfg.family)
    emap = local_exponent_map(field, bank, cfg.window_radius, cfg.boundary)
    adequacy = adequacy_statistic(emap) if cfg.include_adequacy else None
    features = extract_features(emap, adequacy, cfg.include_adequacy)
    # keep only pixels far from the anomaly boundary: windowed estimates mix
    # classes there and would poison both training sets
    band = ndimage.gaussian_filter(truth.astype(float), cfg.window_radius / 2.0,
                                   truncate=3.0, mode="nearest")
    core_oil = (band > 0.95)[emap.valid]
    core_sea = (band < 0.05)[emap.valid]
    return features[core_sea], features[core_oil]


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    scene_pairs = []
    for item in args.scene:
        parts = item.split(":")
        if len(parts) != 2:
            raise ConfigError(f"--scene expects IMAGE:MASK, got {item!r}")
        scene_pairs.append(tuple(parts))
    sea_parts, oil_parts = [], []
    for image_path, mask_path in scene_pairs:
        sea, oil = _scene_features(image_path, mask_path, cfg)
        sea_parts.append(sea)
        oil_parts.append(oil)
    sea = np.concatenate(sea_parts)
    oil = np.concatenate(oil_parts)
    rng = np.random.default_rng(cfg.seed)
    if len(sea) > args.max_samples:
        sea = sea[rng.choice(len(sea), args.max_samples, replace=False)]
    if len(oil) > args.max_samples:
        oil = oil[rng.choice(len(oil), args.max_samples, replace=False)]

    lrt = fit_lrt(sea, oil, cfg.target_far, seed=cfg.seed)
    features = np.concatenate([sea, oil])
    labels = np.concatenate([np.zeros(len(sea)), np.ones(len(oil))])
    mlp = train_mlp(features, labels,
                    MlpHyper(cfg.epochs, cfg.learning_rate, cfg.batch_size, cfg.seed))
    save_detection_model(args.out, lrt, mlp, params=cfg.to_dict())
    inputs = [p for pair in scene_pairs for p in pair]
    _write_manifest(args.out, "train", cfg,
                    {"scene": args.scene, "max_samples": args.max_samples,
                     "out": args.out},
                    inputs, [args.out])
    print(args.out)
    return 0


def cmd_detect(args) -> int:
    lrt, mlp, params = load_detection_model(args.model)
    try:
        cfg = PipelineConfig(**params).validate()
    except TypeError as exc:
        raise DataError(f"model {args.model} carries unusable parameters: {exc}") from exc
    # decision knobs may be overridden at detection time; the feature recipe
    # (scales, window, preprocessing) must stay as trained
    for name in ("nn_threshold", "combiner", "min_region_area", "log_transform"):
        if getattr(args, name, None) is not None:
            cfg = cfg.with_overrides(**{name: getattr(args, name)})
    cfg.validate()

    field = load_field(args.input, log_transform=cfg.log_transform)
    bank = build_filter_bank(field.spec, cfg.scales, cfg.family)
    emap = local_exponent_map(field, bank, cfg.window_radius, cfg.boundary)
    adequacy = adequacy_statistic(emap) if cfg.include_adequacy else None

    detector = TwoStageDetector(
        target_far=cfg.target_far, nn_threshold=cfg.nn_threshold,
        combiner=cfg.combiner, min_region_area=cfg.min_region_area)
    detector.lrt_, detector.mlp_ = lrt, mlp
    result = detector.detect(emap, adequacy, cfg.include_adequacy)

    save_raster(result.mask.astype(float), args.out, "png8", valid=emap.valid)
    outputs = [args.out, os.path.splitext(args.out)[0] + ".valid.png"]
    if args.scores is not None:
        save_raster(np.stack([result.scores_nn, result.scores_lrt]), args.scores,
                    spacing=field.spec.spacing,
                    metadata={"planes": ["nn_score", "lrt_score"]})
        outputs.append(args.scores)
    _write_manifest(args.out, "detect", cfg,
                    {"input": args.input, "model": args.model, "out": args.out,
                     "scores": args.scores},
                    [args.input, args.model], outputs)
    print(args.out)
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(getattr(args, "config", None))
    pred_values, _ = load_raster(args.pred)
    truth_values, _ = load_raster(args.truth)
    pred = pred_values > 0.5
    truth = truth_values > 0.5
    if pred.shape != truth.shape:
        raise DataError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    if args.valid is not None:
        valid_values, _ = load_raster(args.valid)
        valid = valid_values > 0.5
        pred, truth = pred & valid, truth & valid
    metrics = evaluate_mask(pred, truth)
    doc = {"iou": metrics.iou, "precision": metrics.precision, "recall": metrics.recall}
    print(json.dumps(doc, sort_keys=True))
    if args.out is not None:
        _raster._atomic_write_bytes(args.out, json.dumps(doc, indent=1, sort_keys=True).encode())
        inputs = [args.pred, args.truth] + ([args.valid] if args.valid else [])
        _write_manifest(args.out, "eval", cfg,
                        {"pred": args.pred, "truth": args.truth, "valid": args.valid,
                         "out": args.out}, inputs, [args.out])
    return 0


def cmd_lrd_check(args) -> int:
    cfg = _config_from_args(args)
    field = load_field(args.input, log_transform=cfg.log_transform)
    profile = radial_correlation(field, args.max_lag)
    radii = [int(r) for r in _parse_floats(args.radii)]
    stats = lrd_divergence_statistic(profile, radii)
    doc = {"max_lag": args.max_lag,
           "lags": profile.lags.tolist(),
           "correlation": profile.values.tolist(),
           "count_per_lag": profile.count_per_lag.tolist(),
           "statistic": {str(r): s for r, s in zip(radii, stats)},
           "ratios": {f"{b}/{a}": (stats[i + 1] / stats[i] if stats[i] else None)
                      for i, (a, b) in enumerate(zip(radii, radii[1:]))}}
    _raster._atomic_write_bytes(args.out, json.dumps(doc, indent=1, sort_keys=True).encode())
    for key, value in doc["ratios"].items():
        print(f"divergence_ratio {key} {value if value is None else round(value, 4)}")
    _write_manifest(args.out, "lrd-check", cfg,
                    {"input": args.input, "max_lag": args.max_lag,
                     "radii": args.radii, "out": args.out},
                    [args.input], [args.out])
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracfield",
        description="Power-law field synthesis, exponent mapping, and detection")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--seed", type=int, help="random seed")

    estimation = argparse.ArgumentParser(add_help=False)
    estimation.add_argument("--scales", help="comma-separated kernel scales")
    estimation.add_argument("--family", help="kernel family")
    estimation.add_argument("--window-radius", dest="window_radius", type=float)
    estimation.add_argument("--boundary", choices=("mask", "periodic"))
    estimation.add_argument("--include-adequacy", dest="include_adequacy",
                            action="store_const", const=True)
    estimation.add_argument("--log-transform", dest="log_transform",
                            action="store_const", const=True,
                            help="take log of input values on load")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic raster")
    p.add_argument("--kind", choices=("power-law", "short-range", "scene"),
                   default="power-law")
    p.add_argument("--size", type=int, default=256, help="square grid side")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--exponent", type=float, default=1.5)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--corr-length", dest="corr_length", type=float, default=4.0)
    p.add_argument("--base-exponent", dest="base_exponent", type=float, default=0.8)
    p.add_argument("--anomaly-exponent", dest="anomaly_exponent", type=float, default=1.8)
    p.add_argument("--looks", type=int, default=0, help="scene speckle looks, 0 = none")
    p.add_argument("--contrast", type=float, default=1.5)
    p.add_argument("--blend-width", dest="blend_width", type=float, default=4.0)
    p.add_argument("--spectrum", choices=("fixed", "gaussian"), default="fixed")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("filter", parents=[common, estimation],
                       help="apply one dyadic kernel pair")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--scale-index", dest="scale_index", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_filter)

    p = sub.add_parser("estimate", parents=[common, estimation],
                       help="exponent map plus global estimates")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("rgbmap", parents=[common], help="render three planes to RGB")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--triple", default="0,1,2", help="plane indices for R,G,B")
    p.add_argument("--range", dest="value_range", type=float, nargs=2,
                   metavar=("LO", "HI"))
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_rgbmap)

    p = sub.add_parser("train", parents=[common, estimation],
                       help="fit both classifier stages from labeled scenes")
    p.add_argument("--scene", action="append", required=True, metavar="IMAGE:MASK")
    p.add_argument("--target-far", dest="target_far", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-samples", dest="max_samples", type=int, default=30000,
                   help="per-class training sample cap")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("detect", parents=[common], help="end-to-end detection mask")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--nn-threshold", dest="nn_threshold", type=float)
    p.add_argument("--combiner", choices=("AND", "OR", "NN_ONLY", "LRT_ONLY"))
    p.add_argument("--min-region-area", dest="min_region_area", type=int)
    p.add_argument("--log-transform", dest="log_transform",
                   action="store_const", const=True)
    p.add_argument("--no-log-transform", dest="log_transform",
                   action="store_const", const=False)
    p.add_argument("--scores", help="also write nn/lrt score planes here")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("eval", parents=[common], help="mask agreement metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--valid", help="optional validity mask restricting the comparison")
    p.add_argument("-o", "--out")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("lrd-check", parents=[common],
                       help="correlation profile and divergence statistic")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--max-lag", dest="max_lag", type=int, default=128)
    p.add_argument("--radii", default="64,128")
    p.add_argument("--log-transform", dest="log_transform",
                   action="store_const", const=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_lrd_check)

    return parser


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if not hasattr(args, "handler"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.handler(args)
    except ConfigError as exc:
        _err(f"configuration: {exc}")
        return 2
    except (DataError, FileNotFoundError) as exc:
        _err(f"data: {exc}")
        return 3
    except NumericError as exc:
        _err(f"numeric: {exc}")
        return 4
    except FracfieldError as exc:
        _err(str(exc))
        return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
