"""Grayscale image interchange.

Two formats are supported natively:

* binary portable graymap (``P5``), 8- or 16-bit (16-bit samples big-endian,
  as the Netpbm format prescribes);
* a lossless raw container: little-endian ``u32`` height, ``u32`` width, then
  ``height * width`` little-endian float64 values in row-major order.

Other raster formats (PNG, JPEG, ...) are read through Pillow and converted to
luminance with ITU-R BT.601 weights.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DimensionError

__all__ = [
    "read_pgm",
    "write_pgm",
    "read_raw",
    "write_raw",
    "read_grayscale",
    "rgb_to_luminance",
]

LUMA_601 = (0.299, 0.587, 0.114)
_RAW_HEADER = struct.Struct("<II")


def _pnm_tokens(data: bytes, count: int):
    """Parse ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the first raster byte.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PNM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def _decode_pnm(data: bytes):
    tokens, offset = _pnm_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM type {magic!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval < 65536:
        raise ValueError(f"invalid maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height * channels
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    raster = raster.reshape(height, width, channels) if channels == 3 else raster.reshape(height, width)
    return raster.astype(np.float64), maxval


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (or PPM, converted to luminance) into [0, 1]."""
    raster, maxval = _decode_pnm(Path(path).read_bytes())
    if raster.ndim == 3:
        raster = rgb_to_luminance(raster)
    return raster / maxval


def write_pgm(path, image, bits: int = 16) -> None:
    """Write ``image`` as binary PGM after clamping to [0, 1] and quantizing."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {img.shape}")
    maxval = 255 if bits == 8 else 65535
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    raster = q.astype(">u2" if bits == 16 else "u1").tobytes()
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + raster)


def write_raw(path, image) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {img.shape}")
    h, w = img.shape
    Path(path).write_bytes(_RAW_HEADER.pack(h, w) + img.astype("<f8").tobytes())


def read_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _RAW_HEADER.size:
        raise ValueError(f"{path}: truncated raw header")
    h, w = _RAW_HEADER.unpack_from(data)
    expected = _RAW_HEADER.size + 8 * h * w
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {h}x{w}, found {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=_RAW_HEADER.size).reshape(h, w).astype(np.float64)


def rgb_to_luminance(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * LUMA_601[0] + rgb[..., 1] * LUMA_601[1] + rgb[..., 2] * LUMA_601[2]


def read_grayscale(path) -> np.ndarray:
    """Load any supported image file as a 2-D luminance array in [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".ppm", ".pnm"):
        return read_pgm(path)
    if suffix == ".raw":
        return read_raw(path)

    from PIL import Image

    with Image.open(path) as im:
        mode = im.mode
        if mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64)
            return arr / (65535.0 if arr.max() > 255 else 255.0)
        if mode == "L":
            return np.asarray(im, dtype=np.float64) / 255.0
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return rgb_to_luminance(arr)
