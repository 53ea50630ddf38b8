"""PNG and raw-grid readers/writers for textures, masks and depth maps."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

RAW_DEPTH_MAGIC = b"RDF1"


def read_rgb(path) -> np.ndarray:
    """8-bit RGB (alpha dropped) as float64 in [0, 1], shape (h, w, 3)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_rgb(path, rgb) -> None:
    arr = np.asarray(rgb, dtype=np.float64)
    u8 = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    """Gray PNG; any nonzero pixel is foreground."""
    with Image.open(path) as im:
        if im.mode not in ("L", "1", "I;16", "I"):
            im = im.convert("L")
        arr = np.asarray(im)
    return arr != 0


def write_mask(path, mask) -> None:
    Image.fromarray(np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def read_depth(path) -> np.ndarray:
    """Depth grid from a 16-bit linear gray PNG or a raw little-endian f32 file.

    The raw layout is a 12-byte header (4-byte magic, u32 width, u32 height)
    followed by ``h*w`` row-major float32 values.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == RAW_DEPTH_MAGIC:
        buf = path.read_bytes()
        if len(buf) < 12:
            raise ValueError(f"{path}: truncated raw depth header")
        w, h = struct.unpack_from("<II", buf, 4)
        if len(buf) != 12 + 4 * w * h:
            raise ValueError(f"{path}: expected {12 + 4 * w * h} bytes for {w}x{h} depth, found {len(buf)}")
        return np.frombuffer(buf, dtype="<f4", offset=12).astype(np.float64).reshape(h, w)
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I;16B", "I;16L", "I", "L"):
            raise ValueError(f"{path}: depth PNG must be 16-bit gray, got mode {im.mode}")
        return np.asarray(im).astype(np.float64)


def write_depth_png(path, depth) -> None:
    arr = np.asarray(depth)
    if arr.min() < 0 or arr.max() > 65535:
        raise ValueError("16-bit depth values must lie in [0, 65535]")
    Image.fromarray(np.round(arr).astype(np.uint16)).save(path, format="PNG")


def write_depth_raw(path, depth) -> None:
    arr = np.asarray(depth, dtype="<f4")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(RAW_DEPTH_MAGIC + struct.pack("<II", w, h))
        fh.write(arr.tobytes(order="C"))


def read_gray(path) -> np.ndarray:
    """Any PNG as BT.709 luma in [0, 1] (see :func:`roves.metrics.to_gray`)."""
    from .metrics import to_gray

    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            return np.asarray(im).astype(np.float64) / 65535.0
        if im.mode == "L":
            return np.asarray(im).astype(np.float64) / 255.0
    return to_gray(read_rgb(path))
