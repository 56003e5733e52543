"""Raster serialization: float payloads, PNG quantization, round trips."""
import json
import os

import numpy as np
import pytest

import fracfield as ff
from fracfield.errors import ConfigError, DataError


def test_f32_round_trip_is_lossless_at_float32(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.normal(0, 5, (3, 20, 24)).astype(np.float32).astype(np.float64)
    path = str(tmp_path / "planes.f32")
    ff.save_raster(data, path, spacing=2.0, metadata={"note": "abc"})
    back, sidecar = ff.load_raster(path)
    assert np.array_equal(back, data)
    assert sidecar["spacing"] == 2.0
    assert sidecar["plane_count"] == 3
    assert sidecar["width"] == 24 and sidecar["height"] == 20
    assert sidecar["metadata"] == {"note": "abc"}
    assert sidecar["endianness"] == "little"


def test_f32_single_plane_squeezes(tmp_path):
    data = np.arange(12.0).reshape(3, 4)
    path = str(tmp_path / "one.f32")
    ff.save_raster(data, path)
    back, _ = ff.load_raster(path)
    assert back.shape == (3, 4)
    assert np.array_equal(back, data)


def test_f32_payload_is_little_endian_row_major(tmp_path):
    data = np.array([[1.0, 2.0], [3.0, 4.0]])
    path = str(tmp_path / "tiny.f32")
    ff.save_raster(data, path)
    raw = np.frombuffer(open(path, "rb").read(), dtype="<f4")
    assert np.array_equal(raw, [1.0, 2.0, 3.0, 4.0])


def test_f32_requires_sidecar_and_matching_payload(tmp_path):
    data = np.zeros((4, 4))
    path = str(tmp_path / "x.f32")
    ff.save_raster(data, path)
    os.unlink(path + ".json")
    with pytest.raises(DataError):
        ff.load_raster(path)
    ff.save_raster(data, path)
    with open(path, "ab") as handle:
        handle.write(b"\x00\x00\x00\x00")
    with pytest.raises(DataError):
        ff.load_raster(path)


def test_png8_quantization_round_trip(tmp_path):
    ramp = np.linspace(0.0, 1.0, 256)[None, :].repeat(8, axis=0)
    path = str(tmp_path / "ramp.png")
    ff.save_raster(ramp, path, "png8")
    back, _ = ff.load_raster(path)
    # every byte value appears and the round trip is the quantized ramp
    expected = np.floor(np.clip(ramp, 0, 1) * 255 + 0.5) / 255.0
    assert np.max(np.abs(back - expected)) < 1e-12
    assert back.min() == 0.0 and back.max() == 1.0


def test_png16_resolves_finer_than_png8(tmp_path):
    plane = np.full((8, 8), 0.5001)
    p8 = str(tmp_path / "a.png")
    p16 = str(tmp_path / "b.png")
    ff.save_raster(plane, p8, "png8")
    ff.save_raster(plane, p16, "png16")
    back8, _ = ff.load_raster(p8)
    back16, _ = ff.load_raster(p16)
    assert abs(back16[0, 0] - 0.5001) < abs(back8[0, 0] - 0.5001)
    assert abs(back16[0, 0] - 0.5001) < 1e-4


def test_png_clips_out_of_range(tmp_path):
    plane = np.array([[-0.5, 0.0], [1.0, 2.0]])
    path = str(tmp_path / "clip.png")
    ff.save_raster(plane, path, "png8")
    back, _ = ff.load_raster(path)
    assert np.array_equal(back, [[0.0, 0.0], [1.0, 1.0]])


def test_png_non_finite_needs_valid_mask(tmp_path):
    plane = np.array([[np.nan, 0.5], [0.25, 1.0]])
    path = str(tmp_path / "masked.png")
    with pytest.raises(DataError):
        ff.save_raster(plane, path, "png8")
    assert not os.path.exists(path)
    valid = np.isfinite(plane)
    ff.save_raster(plane, path, "png8", valid=valid)
    back, _ = ff.load_raster(path)
    assert back[0, 0] == 0.0
    mask_back, _ = ff.load_raster(str(tmp_path / "masked.valid.png"))
    assert np.array_equal(mask_back > 0.5, valid)


def test_png_rejects_multi_plane(tmp_path):
    with pytest.raises(ConfigError):
        ff.save_raster(np.zeros((2, 4, 4)), str(tmp_path / "x.png"), "png8")
    with pytest.raises(ConfigError):
        ff.save_raster(np.zeros((4, 4)), str(tmp_path / "x.bin"), "webp")


def test_rgb_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    channels = rng.integers(0, 256, (3, 10, 12)).astype(np.uint8)
    path = str(tmp_path / "rgb.png")
    ff.save_rgb(channels, path)
    back, info = ff.load_raster(path)
    assert back.shape == (3, 10, 12)
    assert np.array_equal(np.floor(back * 255 + 0.5).astype(np.uint8), channels)
    with pytest.raises(ConfigError):
        ff.save_rgb(channels.astype(np.float64), path)


def test_field_round_trip_and_log_transform(tmp_path):
    spec = ff.GridSpec(32, 24, 1.5)
    field = ff.synthesize_power_law_field(spec, ff.SpectralPowerLaw(1.0, 1.0), seed=0)
    path = str(tmp_path / "field.f32")
    ff.save_field(field, path)
    back = ff.load_field(path)
    assert back.spec == spec  # spacing survives via the sidecar
    assert np.array_equal(back.values, field.values.astype(np.float32))

    positive = ff.FieldGrid(spec, np.exp(field.values))
    ff.save_field(positive, path)
    logged = ff.load_field(path, log_transform=True)
    assert np.allclose(logged.values, field.values, atol=1e-4)


def test_load_field_rejects_stacks(tmp_path):
    path = str(tmp_path / "stack.f32")
    ff.save_raster(np.zeros((2, 8, 8)), path)
    with pytest.raises(DataError):
        ff.load_field(path)


def test_exponent_map_round_trip(tmp_path):
    spec = ff.GridSpec(128, 128)
    bank = ff.build_filter_bank(spec, (2.0, 4.0, 8.0))
    field = ff.synthesize_power_law_field(spec, ff.SpectralPowerLaw(1.0, 1.5), seed=3)
    emap = ff.local_exponent_map(field, bank, 16.0)
    adequacy = ff.adequacy_statistic(emap)
    path = str(tmp_path / "emap.f32")
    ff.save_exponent_map(emap, path, adequacy)
    emap2, adequacy2 = ff.load_exponent_map(path)
    assert emap2.scales == emap.scales
    assert emap2.window_radius == emap.window_radius
    assert np.array_equal(emap2.valid, emap.valid)
    assert np.array_equal(emap2.low_confidence, emap.low_confidence)
    assert np.allclose(emap2.planes[:, emap.valid],
                       emap.planes[:, emap.valid].astype(np.float32))
    assert np.all(np.isnan(emap2.planes[:, ~emap.valid]))
    assert np.allclose(adequacy2.dispersion[adequacy.valid],
                       adequacy.dispersion[adequacy.valid].astype(np.float32))

    ff.save_exponent_map(emap, path)
    _, no_adequacy = ff.load_exponent_map(path)
    assert no_adequacy is None


def test_atomic_writes_leave_no_temp_files(tmp_path):
    path = str(tmp_path / "field.f32")
    ff.save_raster(np.zeros((16, 16)), path)
    ff.save_raster(np.full((16, 16), 0.5), str(tmp_path / "p.png"), "png8")
    leftovers = [name for name in os.listdir(tmp_path) if name.startswith(".tmp")]
    assert leftovers == []


def test_save_raster_refuses_unwritable_directory(tmp_path):
    with pytest.raises(DataError):
        ff.save_raster(np.zeros((8, 8)), str(tmp_path / "no" / "such" / "dir.f32"))


def test_sidecar_is_valid_sorted_json(tmp_path):
    path = str(tmp_path / "field.f32")
    ff.save_raster(np.zeros((8, 8)), path, metadata={"b": 1, "a": 2})
    doc = json.loads(open(path + ".json").read())
    assert doc["format"] == "f32raw"
    assert doc["metadata"] == {"a": 2, "b": 1}
