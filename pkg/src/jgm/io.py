"""PNG images, raw joint tensors and run manifests."""

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .tensors import N_JOINT, ShapeError

TENSOR_MAGIC = b"JGMTEN1"
_TENSOR_HEADER = struct.Struct("<7sI3I")  # magic, reserved, H, W, C


class FormatError(ValueError):
    pass


def read_png(path):
    """Read an 8-bit gray or RGB PNG into ``[0, 1]`` floats.

    Returns ``(H, W)`` for grayscale files and ``(H, W, 3)`` for RGB.
    """
    try:
        with Image.open(path) as im:
            im.load()
            fmt, mode = im.format, im.mode
            data = np.asarray(im)
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    if fmt != "PNG":
        raise FormatError(f"{path}: expected a PNG file, got {fmt}")
    if mode not in ("L", "RGB"):
        raise FormatError(f"{path}: unsupported PNG mode {mode!r} (need 8-bit L or RGB)")
    return data.astype(np.float64) / 255.0


def quantize(x):
    """Clamp to ``[0, 1]`` and round half up onto ``0..255``."""
    x = np.asarray(x, dtype=np.float64)
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_png(path, image):
    image = np.asarray(image)
    if not (image.ndim == 2 or (image.ndim == 3 and image.shape[-1] == 3)):
        raise ShapeError(f"cannot write an image of shape {image.shape}")
    # uint8 (H, W) maps to mode L and (H, W, 3) to RGB
    Image.fromarray(quantize(image)).save(path, format="PNG")


def read_png_dir(directory):
    """All ``*.png`` files of a directory in sorted order as ``(name, array)``."""
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise FormatError(f"{directory}: no PNG files")
    return [(p.stem, read_png(p)) for p in paths]


def write_tensor(path, X):
    """Raw little-endian float64 dump of an ``(H, W, C)`` array.

    Layout: 7-byte magic, u32 reserved (0), u32 H, W, C, then the values
    in C order.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ShapeError(f"tensor must be (H, W, C), got {X.shape}")
    with open(path, "wb") as fh:
        fh.write(_TENSOR_HEADER.pack(TENSOR_MAGIC, 0, *X.shape))
        fh.write(X.astype("<f8").tobytes())


def read_tensor(path, channels=N_JOINT):
    """Read a tensor written by :func:`write_tensor`.

    ``channels`` is the required channel count (``None`` accepts any).
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _TENSOR_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, _, H, W, C = _TENSOR_HEADER.unpack_from(raw)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if channels is not None and C != channels:
        raise ShapeError(f"{path}: channel count {C}, expected {channels}")
    expected = _TENSOR_HEADER.size + 8 * H * W * C
    if len(raw) != expected:
        raise FormatError(f"{path}: size {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f8", offset=_TENSOR_HEADER.size)
    return data.astype(np.float64).reshape(H, W, C)


def write_manifest(path, manifest):
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
