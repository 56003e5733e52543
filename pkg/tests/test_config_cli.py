"""Configuration loading and command-line interface behavior.

Everything runs in process through run_command so exit codes, manifests, and
file outputs are checked without spawning subprocesses.
"""
import hashlib
import json
import os

import numpy as np
import pytest
from PIL import Image

import fracfield as ff
from fracfield.cli import run_command
from fracfield.config import PipelineConfig, load_config
from fracfield.errors import ConfigError, DataError


# --- configuration struct ----------------------------------------------------

def test_defaults_validate():
    cfg = PipelineConfig().validate()
    assert cfg.scales == (2.0, 4.0, 8.0)
    assert cfg.combiner == "AND"
    assert cfg.window_radius >= 2.0 * max(cfg.scales)


def test_load_config_none_gives_defaults():
    assert load_config(None) == PipelineConfig()


def test_load_config_file_coerces_lists(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scales": [2, 4, 8, 16], "window_radius": 40.0,
                                "seed": 3, "value_range": [0.5, 2.5]}))
    cfg = load_config(str(path))
    assert cfg.scales == (2.0, 4.0, 8.0, 16.0)
    assert isinstance(cfg.scales, tuple)
    assert cfg.value_range == (0.5, 2.5)
    assert cfg.seed == 3
    assert cfg.combiner == "AND"  # untouched keys keep defaults


def test_load_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scale": 2.0}))
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(DataError):
        load_config(str(path))
    path.write_text(json.dumps([1, 2, 3]))
    with pytest.raises(ConfigError):
        load_config(str(path))
    with pytest.raises(DataError):
        load_config(str(tmp_path / "absent.json"))


def test_with_overrides_none_means_keep():
    cfg = PipelineConfig(seed=11)
    out = cfg.with_overrides(seed=None, window_radius=48.0)
    assert out.seed == 11
    assert out.window_radius == 48.0
    with pytest.raises(ConfigError):
        cfg.with_overrides(widow_radius=48.0)


@pytest.mark.parametrize("overrides", [
    {"scales": (2.0, 4.0)},
    {"scales": (2.0, 8.0, 4.0)},
    {"scales": (-2.0, 4.0, 8.0)},
    {"window_radius": 10.0},
    {"target_far": 0.0},
    {"target_far": 1.0},
    {"combiner": "XOR"},
    {"value_range": (3.0, 0.0)},
    {"epochs": 0},
    {"batch_size": 0},
    {"learning_rate": 0.0},
    {"min_region_area": -1},
    {"window_radius": float("nan")},
])
def test_validate_rejects_bad_values(overrides):
    with pytest.raises(ConfigError):
        PipelineConfig(**overrides).validate()


def test_to_dict_round_trips():
    cfg = PipelineConfig(seed=5, scales=(2.0, 4.0, 8.0, 16.0), window_radius=40.0)
    doc = cfg.to_dict()
    assert isinstance(doc["scales"], list)
    assert PipelineConfig(**doc) == cfg


# --- CLI plumbing ------------------------------------------------------------

def _sha256(path):
    with open(path, "rb") as handle:
        return hashlib.sha256(handle.read()).hexdigest()


def _synth(tmp_path, name="field.f32", size=128, exponent=1.5, seed=1, extra=()):
    out = str(tmp_path / name)
    code = run_command(["synth", "--kind", "power-law", "--size", str(size),
                        "--exponent", str(exponent), "--seed", str(seed),
                        "-o", out, *extra])
    assert code == 0
    return out


def test_no_subcommand_exits_2(capsys):
    assert run_command([]) == 2
    capsys.readouterr()


def test_unknown_flag_exits_2_without_output(tmp_path, capsys):
    out = str(tmp_path / "field.f32")
    code = run_command(["synth", "--kind", "power-law", "--bogus", "1", "-o", out])
    assert code == 2
    assert not os.path.exists(out)
    capsys.readouterr()


def test_synth_writes_field_and_manifest(tmp_path):
    out = _synth(tmp_path, size=64)
    assert os.path.exists(out)
    assert os.path.exists(out + ".json")  # raster sidecar
    manifest = json.loads(open(out + ".manifest.json").read())
    assert manifest["command"] == "synth"
    assert manifest["inputs"] == {}
    assert manifest["outputs"]["field.f32"] == _sha256(out)
    # the effective configuration is dumped in full
    assert set(manifest["parameters"]["config"]) == set(PipelineConfig().to_dict())
    # paths and timestamps are quarantined under "volatile"
    assert "timestamp" in manifest["volatile"]
    assert all(os.path.isabs(p) for p in manifest["volatile"]["paths"]["outputs"])
    assert manifest["parameters"]["args"]["out"] == "field.f32"
    field = ff.load_field(out)
    assert field.spec.shape == (64, 64)


def test_synth_scene_writes_truth_mask(tmp_path):
    out = str(tmp_path / "scene.f32")
    code = run_command(["synth", "--kind", "scene", "--size", "64",
                        "--seed", "2", "-o", out])
    assert code == 0
    truth_path = str(tmp_path / "scene.truth.png")
    assert os.path.exists(truth_path)
    manifest = json.loads(open(out + ".manifest.json").read())
    assert set(manifest["outputs"]) == {"scene.f32", "scene.truth.png"}
    truth, _ = ff.load_raster(truth_path)
    assert set(np.unique(truth)) <= {0.0, 1.0}
    assert 0.0 < truth.mean() < 0.5


def test_synth_short_range_kind(tmp_path):
    out = str(tmp_path / "srf.f32")
    code = run_command(["synth", "--kind", "short-range", "--size", "64",
                        "--corr-length", "3.0", "--seed", "4", "-o", out])
    assert code == 0
    field = ff.load_field(out)
    assert abs(field.values.mean()) < 1e-8


def test_flag_overrides_config_file(tmp_path):
    field = _synth(tmp_path, size=64)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"window_radius": 40.0, "seed": 9,
                                    "boundary": "periodic"}))
    out = str(tmp_path / "emap.f32")
    code = run_command(["estimate", "--in", field, "--config", str(cfg_path),
                        "--window-radius", "24", "-o", out])
    assert code == 0
    manifest = json.loads(open(out + ".manifest.json").read())
    cfg = manifest["parameters"]["config"]
    assert cfg["window_radius"] == 24.0  # flag beats file
    assert cfg["seed"] == 9              # file beats default
    assert cfg["boundary"] == "periodic"


def test_estimate_outputs_and_summary(tmp_path, capsys):
    field = _synth(tmp_path, size=128, exponent=1.5, seed=7)
    out = str(tmp_path / "emap.f32")
    code = run_command(["estimate", "--in", field, "--boundary", "periodic",
                        "--window-radius", "16", "-o", out])
    assert code == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if "global_exponent" in l]
    assert len(lines) == 3
    summary = json.loads(open(out + ".summary.json").read())
    assert set(summary["global_exponents"]) == {"2", "4", "8"}
    for value in summary["global_exponents"].values():
        assert abs(value - 1.5) < 0.2
    assert summary["valid_fraction"] == 1.0
    assert summary["low_confidence_fraction"] < 0.2
    emap, adequacy = ff.load_exponent_map(out)
    assert emap.planes.shape == (3, 128, 128)
    assert adequacy is None


def test_estimate_adequacy_flag(tmp_path):
    field = _synth(tmp_path, size=64)
    out = str(tmp_path / "emap.f32")
    code = run_command(["estimate", "--in", field, "--boundary", "periodic",
                        "--window-radius", "16", "--include-adequacy", "-o", out])
    assert code == 0
    summary = json.loads(open(out + ".summary.json").read())
    assert "adequacy_mean" in summary
    assert "adequacy_exceeding_threshold" in summary
    _, adequacy = ff.load_exponent_map(out)
    assert adequacy is not None


def test_estimate_missing_input_exits_3(tmp_path, capsys):
    out = str(tmp_path / "emap.f32")
    code = run_command(["estimate", "--in", str(tmp_path / "absent.f32"), "-o", out])
    assert code == 3
    assert not os.path.exists(out)
    assert "data:" in capsys.readouterr().err


def test_estimate_constant_field_exits_4(tmp_path, capsys):
    path = str(tmp_path / "flat.f32")
    ff.save_raster(np.zeros((64, 64)), path, spacing=1.0)
    code = run_command(["estimate", "--in", path, "--boundary", "periodic",
                        "--window-radius", "16", "-o", str(tmp_path / "emap.f32")])
    assert code == 4
    assert "numeric:" in capsys.readouterr().err


def test_bad_scales_flag_exits_2(tmp_path, capsys):
    field = _synth(tmp_path, size=64)
    out = str(tmp_path / "emap.f32")
    assert run_command(["estimate", "--in", field, "--scales", "2,4",
                        "-o", out]) == 2
    assert run_command(["estimate", "--in", field, "--scales", "a,b",
                        "-o", out]) == 2
    err = capsys.readouterr().err
    assert "configuration:" in err


def test_filter_writes_response_pair(tmp_path):
    field = _synth(tmp_path, size=64)
    out = str(tmp_path / "pair.f32")
    code = run_command(["filter", "--in", field, "--scale-index", "1", "-o", out])
    assert code == 0
    values, meta = ff.load_raster(out)
    assert values.shape == (2, 64, 64)
    assert meta["metadata"]["scale"] == 4.0
    manifest = json.loads(open(out + ".manifest.json").read())
    assert manifest["parameters"]["args"]["scale_index"] == 1
    assert manifest["inputs"]["field.f32"] == _sha256(field)


def test_rgbmap_from_exponent_map(tmp_path):
    field = _synth(tmp_path, size=64)
    emap_path = str(tmp_path / "emap.f32")
    assert run_command(["estimate", "--in", field, "--boundary", "periodic",
                        "--window-radius", "16", "-o", emap_path]) == 0
    out = str(tmp_path / "map.png")
    code = run_command(["rgbmap", "--in", emap_path, "--range", "0", "3",
                        "-o", out])
    assert code == 0
    with Image.open(out) as img:
        assert img.mode == "RGB"
        assert img.size == (64, 64)


def test_eval_prints_metrics_json(tmp_path, capsys):
    pred = np.zeros((16, 16)); pred[2:8, 2:8] = 1.0
    truth = np.zeros((16, 16)); truth[4:10, 2:8] = 1.0
    pred_path = str(tmp_path / "pred.png")
    truth_path = str(tmp_path / "truth.png")
    ff.save_raster(pred, pred_path, "png8")
    ff.save_raster(truth, truth_path, "png8")
    report_path = str(tmp_path / "report.json")
    code = run_command(["eval", "--pred", pred_path, "--truth", truth_path,
                        "-o", report_path])
    assert code == 0
    doc = json.loads(capsys.readouterr().out.strip())
    expected = ff.evaluate_mask(pred > 0.5, truth > 0.5)
    assert doc["iou"] == pytest.approx(expected.iou)
    assert doc["precision"] == pytest.approx(expected.precision)
    assert doc["recall"] == pytest.approx(expected.recall)
    assert json.loads(open(report_path).read()) == pytest.approx(doc)


def test_eval_shape_mismatch_exits_3(tmp_path, capsys):
    a = str(tmp_path / "a.png"); b = str(tmp_path / "b.png")
    ff.save_raster(np.zeros((8, 8)), a, "png8")
    ff.save_raster(np.zeros((8, 16)), b, "png8")
    assert run_command(["eval", "--pred", a, "--truth", b]) == 3
    capsys.readouterr()


def test_lrd_check_report(tmp_path, capsys):
    field = _synth(tmp_path, size=256, exponent=1.5, seed=0)
    out = str(tmp_path / "lrd.json")
    code = run_command(["lrd-check", "--in", field, "--max-lag", "96",
                        "--radii", "48,96", "-o", out])
    assert code == 0
    assert "divergence_ratio 96/48" in capsys.readouterr().out
    doc = json.loads(open(out).read())
    assert doc["lags"][0] == 0
    assert len(doc["lags"]) == len(doc["correlation"]) == len(doc["count_per_lag"])
    assert set(doc["statistic"]) == {"48", "96"}
    ratio = doc["ratios"]["96/48"]
    assert np.isfinite(ratio) and ratio > 1.0


def test_train_detect_eval_chain(tmp_path, capsys):
    scene = str(tmp_path / "scene.f32")
    assert run_command(["synth", "--kind", "scene", "--size", "256",
                        "--seed", "3", "-o", scene]) == 0
    truth = str(tmp_path / "scene.truth.png")

    model = str(tmp_path / "model.json")
    code = run_command(["train", "--scene", f"{scene}:{truth}",
                        "--window-radius", "24", "--boundary", "periodic",
                        "--epochs", "20", "--batch-size", "256",
                        "--max-samples", "8000", "--seed", "0", "-o", model])
    assert code == 0
    lrt, mlp, params = ff.load_detection_model(model)
    assert params["window_radius"] == 24.0
    assert lrt.threshold is not None

    pred = str(tmp_path / "pred.png")
    code = run_command(["detect", "--in", scene, "--model", model,
                        "--min-region-area", "16", "-o", pred])
    assert code == 0
    valid_path = str(tmp_path / "pred.valid.png")
    assert os.path.exists(valid_path)
    manifest = json.loads(open(pred + ".manifest.json").read())
    assert manifest["parameters"]["config"]["min_region_area"] == 16

    report = str(tmp_path / "report.json")
    code = run_command(["eval", "--pred", pred, "--truth", truth,
                        "--valid", valid_path, "-o", report])
    assert code == 0
    doc = json.loads(open(report).read())
    assert doc["iou"] > 0.4
    assert doc["recall"] > 0.4
    capsys.readouterr()

    # decision knobs can be overridden at detect time without retraining
    pred2 = str(tmp_path / "pred2.png")
    code = run_command(["detect", "--in", scene, "--model", model,
                        "--combiner", "LRT_ONLY", "-o", pred2])
    assert code == 0
    manifest2 = json.loads(open(pred2 + ".manifest.json").read())
    assert manifest2["parameters"]["config"]["combiner"] == "LRT_ONLY"
    capsys.readouterr()


def test_detect_rejects_wrong_model_file(tmp_path, capsys):
    field = _synth(tmp_path, size=64)
    bogus = str(tmp_path / "model.json")
    with open(bogus, "w") as handle:
        json.dump({"format": "something-else"}, handle)
    code = run_command(["detect", "--in", field, "--model", bogus,
                        "-o", str(tmp_path / "pred.png")])
    assert code == 3
    capsys.readouterr()
