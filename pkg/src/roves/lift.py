"""Masked relative depth -> metric local point cloud, and rigid placement in the world.

Pixel ``(row, col)`` with depth ``d`` maps to::

    x = (row / (h - 1) - 0.5) * L_x
    y = (col / (w - 1) - 0.5) * L_y
    z = (d - d_min) / (d_max - d_min) * L_z

so rows span the element's length, columns its width and normalised depth
its height. ``d_min``/``d_max`` are taken over the foreground only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TargetDims:
    L_x: float
    L_y: float
    L_z: float

    def __post_init__(self):
        for name in ("L_x", "L_y", "L_z"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"target dimension {name} must be > 0, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.L_x, self.L_y, self.L_z])


@dataclass(frozen=True)
class MaskedDepth:
    depth: np.ndarray  # (h, w) relative depth
    mask: np.ndarray  # (h, w) bool

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=float)
        m = np.asarray(self.mask, dtype=bool)
        if d.ndim != 2 or d.shape != m.shape:
            raise ValueError(f"depth {d.shape} and mask {m.shape} must be equal 2-D grids")
        if not m.any():
            raise ValueError("foreground mask is empty")
        if not np.all(np.isfinite(d[m])):
            raise ValueError("depth is not finite on every foreground pixel")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "mask", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3), m
    colors: np.ndarray  # (N, 3), RGB in [0, 1]

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        c = np.asarray(self.colors, dtype=float).reshape(-1, 3)
        if p.shape[0] != c.shape[0]:
            raise ValueError(f"{p.shape[0]} points but {c.shape[0]} colors")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "colors", c)

    def __len__(self):
        return self.points.shape[0]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)


@dataclass(frozen=True)
class LocalPointCloud(PointCloud):
    dims: TargetDims | None = None


def lift_depth(
    depth: MaskedDepth,
    dims: TargetDims,
    texture,
    *,
    stride: int = 1,
    invert: bool = False,
    clip_percentiles: tuple[float, float] | None = None,
) -> LocalPointCloud:
    """Lift every foreground pixel to a local metric point with its texture colour.

    ``invert`` flips the depth convention for models where larger values mean
    nearer. ``clip_percentiles`` (e.g. ``(1, 99)``) clamps foreground depth to
    those percentiles before normalisation. ``stride`` keeps every
    ``stride``-th row and column; normalisation still uses the full mask.
    """
    h, w = depth.shape
    if h < 2 or w < 2:
        raise ValueError(f"depth map must be at least 2x2, got {h}x{w}")
    tex = np.asarray(texture)
    if tex.shape[:2] != (h, w):
        raise ValueError(f"texture {tex.shape[:2]} does not match depth {(h, w)}")
    if tex.dtype == np.uint8:
        tex = tex.astype(float) / 255.0
    tex = np.asarray(tex, dtype=float)[..., :3]
    if stride < 1:
        raise ValueError("stride must be >= 1")

    d = -depth.depth if invert else depth.depth
    fg = d[depth.mask]
    if clip_percentiles is not None:
        lo, hi = np.percentile(fg, clip_percentiles)
        d = np.clip(d, lo, hi)
        fg = d[depth.mask]
    d_min, d_max = float(fg.min()), float(fg.max())
    if not d_max > d_min:
        raise ValueError("foreground depth is constant; cannot normalise height")

    sel = depth.mask.copy()
    if stride > 1:
        keep = np.zeros_like(sel)
        keep[::stride, ::stride] = True
        sel &= keep
    rows, cols = np.nonzero(sel)
    x = (rows / (h - 1) - 0.5) * dims.L_x
    y = (cols / (w - 1) - 0.5) * dims.L_y
    z = (d[rows, cols] - d_min) / (d_max - d_min) * dims.L_z
    return LocalPointCloud(np.stack([x, y, z], axis=1), tex[rows, cols], dims)


def check_rigid(rotation, tol: float = 1e-9) -> np.ndarray:
    R = np.asarray(rotation, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation is not orthonormal with determinant +1")
    return R


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def to_world(cloud: PointCloud, rotation, translation) -> PointCloud:
    """``p_world = R p_local + t`` for every point; colours carried over."""
    R = check_rigid(rotation)
    t = np.asarray(translation, dtype=float).reshape(3)
    return PointCloud(cloud.points @ R.T + t, cloud.colors)


def write_ascii_ply(cloud: PointCloud, path) -> None:
    rgb = np.round(np.clip(cloud.colors, 0.0, 1.0) * 255.0).astype(int)
    with open(path, "w", newline="\n") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write("end_header\n")
        for (x, y, z), (r, g, b) in zip(cloud.points, rgb):
            fh.write(f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}\n")


def read_ascii_ply(path) -> PointCloud:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "ply" or "format ascii 1.0" not in lines[:3]:
        raise ValueError(f"{path}: not an ASCII PLY file")
    n = None
    props: list[str] = []
    end = None
    for i, line in enumerate(lines):
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        elif parts[:1] == ["property"] and n is not None:
            props.append(parts[-1])
        elif line == "end_header":
            end = i
            break
    if n is None or end is None:
        raise ValueError(f"{path}: malformed PLY header")
    data = np.array([[float(v) for v in ln.split()] for ln in lines[end + 1 : end + 1 + n]]).reshape(n, len(props))
    col = {p: k for k, p in enumerate(props)}
    pts = data[:, [col["x"], col["y"], col["z"]]]
    if all(c in col for c in ("red", "green", "blue")):
        rgb = data[:, [col["red"], col["green"], col["blue"]]] / 255.0
    else:
        rgb = np.full_like(pts, 0.5)
    return PointCloud(pts, rgb)
