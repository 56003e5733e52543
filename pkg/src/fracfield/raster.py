"""Raster file I/O: lossless float stacks plus 8/16-bit PNG views.

``f32raw`` is the interchange format: little-endian float32 planes, row-major
within a plane and plane-major in the file, described by a JSON sidecar at
``<path>.json``.  PNG is for human-viewable artifacts; 8- and 16-bit
grayscale map [0, 1] to the full integer range, and RGB maps save as standard
3-channel 8-bit PNG.  All writes are atomic (write to a temporary file in the
same directory, then rename).
"""
from __future__ import annotations

import io
import json
import os
import tempfile

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError
from .exponent import AdequacyMap, ExponentMap
from .grid import FieldGrid, GridSpec

FORMATS = ("f32raw", "png8", "png16")


def _atomic_write_bytes(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _png_bytes(image: Image.Image) -> bytes:
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def _quantize(plane: np.ndarray, levels: int) -> np.ndarray:
    scaled = np.floor(np.clip(plane, 0.0, 1.0) * levels + 0.5)
    return scaled.astype(np.uint8 if levels == 255 else np.uint16)


def save_raster(data: np.ndarray, path: str, fmt: str = "f32raw",
                spacing: float = 1.0, metadata: dict | None = None,
                valid: np.ndarray | None = None) -> str:
    """Write an (H, W) or (planes, H, W) array; returns the path written.

    PNG formats take a single plane of values in [0, 1]; non-finite pixels
    are only allowed when a ``valid`` mask is supplied, in which case they are
    written as 0 and the mask is saved alongside as ``<path stem>.valid.png``.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        stack = arr[None, :, :]
    elif arr.ndim == 3:
        stack = arr
    else:
        raise ConfigError(f"raster data must be 2-D or 3-D, got shape {arr.shape}")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {fmt!r}")

    if fmt == "f32raw":
        payload = stack.astype("<f4").tobytes(order="C")
        finite = stack[np.isfinite(stack)]
        sidecar = {
            "format": "f32raw",
            "width": int(stack.shape[2]),
            "height": int(stack.shape[1]),
            "plane_count": int(stack.shape[0]),
            "spacing": float(spacing),
            "dtype": "float32",
            "endianness": "little",
            "value_range": [float(finite.min()), float(finite.max())] if finite.size else None,
            "metadata": metadata or {},
        }
        _atomic_write_bytes(path, payload)
        _atomic_write_bytes(path + ".json",
                            json.dumps(sidecar, indent=1, sort_keys=True).encode())
        return path

    if stack.shape[0] != 1:
        raise ConfigError(f"{fmt} holds a single plane, got {stack.shape[0]}")
    plane = stack[0]
    bad = ~np.isfinite(plane)
    if bad.any():
        if valid is None:
            raise DataError("non-finite pixels need a validity mask for PNG output")
        plane = np.where(bad, 0.0, plane)
    if valid is not None:
        stem = os.path.splitext(path)[0]
        mask_img = Image.fromarray(np.where(np.asarray(valid, bool), 255, 0).astype(np.uint8))
        _atomic_write_bytes(stem + ".valid.png", _png_bytes(mask_img))
    levels = 255 if fmt == "png8" else 65535
    _atomic_write_bytes(path, _png_bytes(Image.fromarray(_quantize(plane, levels))))
    return path


def save_rgb(channels: np.ndarray, path: str) -> str:
    """Write a (3, H, W) uint8 stack as a standard RGB PNG."""
    arr = np.asarray(channels)
    if arr.ndim != 3 or arr.shape[0] != 3 or arr.dtype != np.uint8:
        raise ConfigError(f"expected (3, H, W) uint8 channels, got {arr.shape} {arr.dtype}")
    _atomic_write_bytes(path, _png_bytes(Image.fromarray(np.moveaxis(arr, 0, -1), "RGB")))
    return path


def load_raster(path: str, fmt: str | None = None,
                log_transform: bool = False) -> tuple[np.ndarray, dict]:
    """Read a raster; returns (values, info).

    PNG bytes map to [0, 1] (dividing by 255 or 65535); f32raw values load
    verbatim from the sidecar-described payload.  ``log_transform`` clamps to
    >= 1e-6 and takes the natural log, the preprocessing matching
    multiplicative intensity noise.  Multi-plane stacks come back as
    (planes, H, W); single planes as (H, W).
    """
    if fmt is None:
        fmt = "png" if path.lower().endswith(".png") else "f32raw"
    if fmt == "f32raw":
        values, info = _load_f32raw(path)
    elif fmt in ("png", "png8", "png16"):
        values, info = _load_png(path)
    else:
        raise ConfigError(f"unknown raster format {fmt!r}")
    if log_transform:
        values = np.log(np.clip(values, 1e-6, None))
        info["log_transform"] = True
    return values, info


def _load_f32raw(path: str) -> tuple[np.ndarray, dict]:
    sidecar_path = path + ".json"
    try:
        with open(sidecar_path) as handle:
            sidecar = json.load(handle)
        with open(path, "rb") as handle:
            payload = handle.read()
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read raster {path}: {exc}") from exc
    try:
        shape = (int(sidecar["plane_count"]), int(sidecar["height"]), int(sidecar["width"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed sidecar {sidecar_path}: {exc}") from exc
    expected = 4 * shape[0] * shape[1] * shape[2]
    if len(payload) != expected:
        raise DataError(f"{path}: payload is {len(payload)} bytes, "
                        f"sidecar implies {expected}")
    values = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)
    if shape[0] == 1:
        values = values[0]
    return values, dict(sidecar)


def _load_png(path: str) -> tuple[np.ndarray, dict]:
    try:
        with Image.open(path) as image:
            image.load()
            mode = image.mode
            arr = np.asarray(image)
    except (OSError, SyntaxError) as exc:
        raise DataError(f"cannot read PNG {path}: {exc}") from exc
    if mode == "L":
        values, depth = arr / 255.0, 8
    elif mode in ("I;16", "I"):
        values, depth = arr / 65535.0, 16
    elif mode == "RGB":
        values, depth = np.moveaxis(arr, -1, 0) / 255.0, 8
    else:
        raise DataError(f"unsupported PNG mode {mode!r} in {path}")
    return values.astype(np.float64), {"format": f"png{depth}", "mode": mode,
                                       "width": arr.shape[-1] if mode == "RGB" else arr.shape[1],
                                       "height": arr.shape[1] if mode == "RGB" else arr.shape[0]}


# --- typed convenience layers ------------------------------------------------

def save_field(field: FieldGrid, path: str, fmt: str = "f32raw",
               metadata: dict | None = None) -> str:
    return save_raster(field.values, path, fmt, spacing=field.spec.spacing,
                       metadata=metadata)


def load_field(path: str, log_transform: bool = False) -> FieldGrid:
    values, info = load_raster(path, log_transform=log_transform)
    if values.ndim != 2:
        raise DataError(f"{path} holds {values.shape[0]} planes, expected one field")
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path} contains non-finite samples")
    spec = GridSpec(values.shape[1], values.shape[0], float(info.get("spacing", 1.0)))
    return FieldGrid(spec, values)


def save_exponent_map(emap: ExponentMap, path: str,
                      adequacy: AdequacyMap | None = None,
                      metadata: dict | None = None) -> str:
    """Exponent planes then validity, low-confidence, and optional adequacy planes."""
    layout = [f"exponent:{s:g}" for s in emap.scales] + ["valid", "low_confidence"]
    planes = [emap.planes[i] for i in range(emap.planes.shape[0])]
    planes += [emap.valid.astype(np.float64), emap.low_confidence.astype(np.float64)]
    if adequacy is not None:
        layout.append("adequacy")
        planes.append(adequacy.dispersion)
    meta = dict(metadata or {})
    meta.update({"plane_layout": layout, "scales": list(emap.scales),
                 "window_radius": emap.window_radius})
    return save_raster(np.stack(planes), path, "f32raw",
                       spacing=emap.spec.spacing, metadata=meta)


def load_exponent_map(path: str) -> tuple[ExponentMap, AdequacyMap | None]:
    values, info = load_raster(path)
    meta = info.get("metadata", {})
    layout = meta.get("plane_layout")
    scales = meta.get("scales")
    if values.ndim != 3 or not layout or not scales or len(layout) != values.shape[0]:
        raise DataError(f"{path} is not a saved exponent map")
    index = {name: i for i, name in enumerate(layout)}
    planes = values[:len(scales)].copy()
    valid = values[index["valid"]] > 0.5
    low_conf = values[index["low_confidence"]] > 0.5
    spec = GridSpec(values.shape[2], values.shape[1], float(info.get("spacing", 1.0)))
    emap = ExponentMap(spec, tuple(float(s) for s in scales), planes, valid,
                       float(meta.get("window_radius", 0.0)), low_conf)
    adequacy = None
    if "adequacy" in index:
        adequacy = AdequacyMap(spec, values[index["adequacy"]].copy(), valid.copy())
    return emap, adequacy
