"""Signed road-height residual grids and wheel-contact excitation sampling.

Points are expressed in plane coordinates: a 2-D position ``(u, v)`` inside
the fitted ground plane plus a signed residual along its upward normal. The
grid stores one residual per cell, keeping the maximum (protrusions such as
speed humps) or the minimum (depressions such as sunken roads) of all points
falling in that cell. Cells that no point reaches hold 0, i.e. the nominal
flat road.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .halfcar import SampledExcitation, VehicleParams, time_grid

Mode = Literal["max", "min"]

DEFAULT_CELL_SIZE = 0.05
FILE_MAGIC = b"ROVESHF\x00"
FILE_VERSION = 1
_MODE_CODES = {"max": 0, "min": 1}


@dataclass(frozen=True)
class GroundPlane:
    """Plane ``normal . p + offset = 0`` with a unit, upward-facing normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-9:
            raise ValueError(f"plane normal must be unit length, got |n|={norm}")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def horizontal(cls, height: float = 0.0) -> "GroundPlane":
        return cls(np.array([0.0, 0.0, 1.0]), -height)

    @property
    def origin(self) -> np.ndarray:
        """Point of the plane closest to the world origin."""
        return -self.offset * self.normal

    @property
    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """In-plane axes ``(u, v)``; ``u`` follows world x where possible, ``u x v = normal``."""
        n = self.normal
        ref = np.array([1.0, 0.0, 0.0])
        if abs(n @ ref) > 0.9:
            ref = np.array([0.0, 1.0, 0.0])
        u = ref - (ref @ n) * n
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        return u, v

    def residual(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normal + self.offset

    def to_plane(self, points) -> np.ndarray:
        """Project world points to 2-D plane coordinates."""
        rel = np.asarray(points, dtype=float) - self.origin
        u, v = self.basis
        return np.stack([rel @ u, rel @ v], axis=-1)

    def to_world(self, uv, height=0.0) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        u, v = self.basis
        h = np.asarray(height, dtype=float)[..., None]
        return self.origin + uv[..., :1] * u + uv[..., 1:2] * v + h * self.normal

    def direction_to_plane(self, vectors) -> np.ndarray:
        """Project world direction vectors into plane coordinates (no offset)."""
        u, v = self.basis
        vec = np.asarray(vectors, dtype=float)
        return np.stack([vec @ u, vec @ v], axis=-1)


def _plane_lstsq(pts: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    centroid = pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    n = vt[-1]
    return n, -float(n @ centroid), sv


def fit_ground_plane(points, trim: tuple[float, float] = (0.02, 0.98)) -> GroundPlane:
    """Orthogonal least-squares plane with one quantile-trimming pass.

    After an initial fit, points whose signed residual lies outside the
    ``trim`` quantiles are dropped and the plane is refitted. The normal is
    oriented toward world +z.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 3 or not np.all(np.isfinite(pts)):
        raise ValueError("plane fit needs at least 3 finite points")
    n, d, sv = _plane_lstsq(pts)
    scale = max(sv[0], 1e-300)
    if sv[1] <= 1e-12 * scale:
        raise ValueError("plane fit is degenerate: points are collinear or coincident")
    if trim is not None:
        r = pts @ n + d
        lo, hi = np.quantile(r, trim)
        keep = (r >= lo) & (r <= hi)
        if keep.sum() >= 3:
            n2, d2, sv2 = _plane_lstsq(pts[keep])
            if sv2[1] > 1e-12 * max(sv2[0], 1e-300):
                n, d = n2, d2
    if n[2] < 0:
        n, d = -n, -d
    return GroundPlane(n / np.linalg.norm(n), d)


@dataclass(frozen=True)
class HeightField:
    origin: np.ndarray  # (u, v) of the grid's lower corner, m
    cell_size: float
    residuals: np.ndarray  # (ny, nx); row index follows v, column index follows u
    occupied: np.ndarray  # (ny, nx) bool
    mode: Mode = "max"
    counts: np.ndarray | None = None  # per-cell contributing point count, when built from points

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError(f"cell size must be > 0, got {self.cell_size}")
        if self.mode not in _MODE_CODES:
            raise ValueError(f"mode must be 'max' or 'min', got {self.mode!r}")
        res = np.asarray(self.residuals, dtype=float)
        occ = np.asarray(self.occupied, dtype=bool)
        if res.ndim != 2 or res.shape != occ.shape:
            raise ValueError("residual and occupancy grids must share a 2-D shape")
        if np.any(res[~occ] != 0.0):
            raise ValueError("unoccupied cells must carry residual 0")
        res.setflags(write=False)
        occ.setflags(write=False)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(2))
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "residuals", res)
        object.__setattr__(self, "occupied", occ)

    @property
    def shape(self) -> tuple[int, int]:
        return self.residuals.shape

    def cell_center(self, row: int, col: int) -> np.ndarray:
        return self.origin + self.cell_size * (np.array([col, row]) + 0.5)

    def cell_index(self, uv) -> tuple[np.ndarray, np.ndarray]:
        """(row, col) of the cells containing ``uv`` (may fall outside the grid)."""
        g = (np.asarray(uv, dtype=float) - self.origin) / self.cell_size
        return np.floor(g[..., 1]).astype(np.int64), np.floor(g[..., 0]).astype(np.int64)

    def save(self, path) -> None:
        ny, nx = self.shape
        with open(path, "wb") as fh:
            fh.write(FILE_MAGIC + struct.pack("<II", FILE_VERSION, _MODE_CODES[self.mode]))
            fh.write(struct.pack("<3d", self.origin[0], self.origin[1], self.cell_size))
            fh.write(struct.pack("<2I", nx, ny))
            fh.write(self.residuals.astype("<f4").tobytes(order="C"))
            fh.write(np.packbits(self.occupied.ravel(), bitorder="little").tobytes())

    @classmethod
    def load(cls, path) -> "HeightField":
        buf = Path(path).read_bytes()
        head = 16 + 24 + 8
        if len(buf) < head or buf[:8] != FILE_MAGIC:
            raise ValueError(f"{path}: not a height-field file")
        version, mode_code = struct.unpack_from("<II", buf, 8)
        if version != FILE_VERSION:
            raise ValueError(f"{path}: unsupported height-field version {version}")
        modes = {v: k for k, v in _MODE_CODES.items()}
        if mode_code not in modes:
            raise ValueError(f"{path}: unknown accumulation mode code {mode_code}")
        ox, oy, cs = struct.unpack_from("<3d", buf, 16)
        nx, ny = struct.unpack_from("<2I", buf, 40)
        n = nx * ny
        nbits = (n + 7) // 8
        if len(buf) != head + 4 * n + nbits:
            raise ValueError(f"{path}: expected {head + 4 * n + nbits} bytes, found {len(buf)}")
        res = np.frombuffer(buf, dtype="<f4", count=n, offset=head).astype(float).reshape(ny, nx)
        occ = np.unpackbits(
            np.frombuffer(buf, dtype=np.uint8, count=nbits, offset=head + 4 * n), count=n, bitorder="little"
        ).astype(bool).reshape(ny, nx)
        return cls(np.array([ox, oy]), cs, res, occ, modes[mode_code])

    def save_pgm(self, path) -> None:
        """16-bit binary PGM; residual range mapped linearly onto 0..65535, first row = lowest v."""
        lo, hi = float(self.residuals.min()), float(self.residuals.max())
        if hi > lo:
            img = np.round((self.residuals - lo) / (hi - lo) * 65535.0)
        else:
            img = np.zeros(self.shape)
        ny, nx = self.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{nx} {ny}\n65535\n".encode("ascii"))
            fh.write(img.astype(">u2").tobytes())


def build_heightfield(
    points,
    plane: GroundPlane,
    cell_size: float = DEFAULT_CELL_SIZE,
    mode: Mode = "max",
) -> HeightField:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("height field needs at least one point")
    if not cell_size > 0:
        raise ValueError(f"cell size must be > 0, got {cell_size}")
    if mode not in _MODE_CODES:
        raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
    uv = plane.to_plane(pts)
    r = plane.residual(pts)
    lo = uv.min(axis=0)
    hi = uv.max(axis=0)
    # one empty cell of margin on every side of the footprint
    origin = lo - cell_size
    ncells = np.floor((hi - origin) / cell_size).astype(np.int64) + 2
    nx, ny = int(ncells[0]), int(ncells[1])
    col = np.clip(np.floor((uv[:, 0] - origin[0]) / cell_size).astype(np.int64), 0, nx - 1)
    row = np.clip(np.floor((uv[:, 1] - origin[1]) / cell_size).astype(np.int64), 0, ny - 1)
    flat = row * nx + col
    counts = np.bincount(flat, minlength=nx * ny).reshape(ny, nx)
    if mode == "max":
        acc = np.full(nx * ny, -np.inf)
        np.maximum.at(acc, flat, r)
    else:
        acc = np.full(nx * ny, np.inf)
        np.minimum.at(acc, flat, r)
    acc = acc.reshape(ny, nx)
    occ = counts > 0
    acc[~occ] = 0.0
    return HeightField(origin, cell_size, acc, occ, mode, counts)


def sample_height(field: HeightField, position) -> np.ndarray | float:
    """Bilinear interpolation between cell centres; cells outside the grid count as 0."""
    uv = np.asarray(position, dtype=float)
    scalar = uv.ndim == 1
    uv = uv.reshape(-1, 2)
    g = (uv - field.origin) / field.cell_size - 0.5
    c0 = np.floor(g[:, 0]).astype(np.int64)
    r0 = np.floor(g[:, 1]).astype(np.int64)
    tx = g[:, 0] - c0
    ty = g[:, 1] - r0
    ny, nx = field.shape
    res = field.residuals

    def at(r, c):
        ok = (r >= 0) & (r < ny) & (c >= 0) & (c < nx)
        out = np.zeros(r.shape)
        out[ok] = res[r[ok], c[ok]]
        return out

    h = ((1 - tx) * (1 - ty) * at(r0, c0) + tx * (1 - ty) * at(r0, c0 + 1)
         + (1 - tx) * ty * at(r0 + 1, c0) + tx * ty * at(r0 + 1, c0 + 1))
    return float(h[0]) if scalar else h


@dataclass(frozen=True)
class Trajectory:
    """Per-frame CoM ground positions and headings in plane coordinates."""

    t: np.ndarray
    position: np.ndarray  # (n, 2)
    heading: np.ndarray  # (n, 2), unit

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        pos = np.asarray(self.position, dtype=float).reshape(-1, 2)
        hd = np.asarray(self.heading, dtype=float).reshape(-1, 2)
        if t.size == 0:
            raise ValueError("trajectory is empty")
        if pos.shape[0] != t.size or hd.shape[0] != t.size:
            raise ValueError("trajectory arrays must have one row per timestamp")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        norms = np.linalg.norm(hd, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("trajectory headings must be unit vectors")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "heading", hd / norms[:, None])

    @classmethod
    def straight(cls, start, heading, speed: float, t) -> "Trajectory":
        t = np.asarray(t, dtype=float)
        h = np.asarray(heading, dtype=float)
        h = h / np.linalg.norm(h)
        pos = np.asarray(start, dtype=float) + speed * (t - t[0])[:, None] * h
        return cls(t, pos, np.tile(h, (t.size, 1)))

    def at(self, times) -> tuple[np.ndarray, np.ndarray]:
        times = np.asarray(times, dtype=float)
        if self.t.size == 1:
            return np.tile(self.position[0], (times.size, 1)), np.tile(self.heading[0], (times.size, 1))
        pos = np.stack([np.interp(times, self.t, self.position[:, k]) for k in range(2)], axis=1)
        hd = np.stack([np.interp(times, self.t, self.heading[:, k]) for k in range(2)], axis=1)
        norms = np.linalg.norm(hd, axis=1, keepdims=True)
        # antiparallel neighbours interpolate through zero; keep the earlier heading there
        bad = norms[:, 0] < 1e-12
        if np.any(bad):
            idx = np.clip(np.searchsorted(self.t, times[bad], side="right") - 1, 0, self.t.size - 1)
            hd[bad] = self.heading[idx]
            norms[bad] = 1.0
        return pos, hd / norms


def contact_points(trajectory: Trajectory, params: VehicleParams, times) -> tuple[np.ndarray, np.ndarray]:
    com, hd = trajectory.at(times)
    return com + params.l_f * hd, com - params.l_r * hd


def excitation_along(
    field: HeightField,
    trajectory: Trajectory,
    params: VehicleParams,
    dt: float,
    t_end: float | None = None,
) -> SampledExcitation:
    """Sample road heights under the front and rear contacts on a ``dt`` grid.

    The grid starts at the first trajectory timestamp and runs to ``t_end``
    (default: the last timestamp), extending one step beyond it when the span
    is not a multiple of ``dt``.
    """
    if trajectory.t.size == 0:
        raise ValueError("trajectory is empty")
    t0 = float(trajectory.t[0])
    t1 = float(trajectory.t[-1]) if t_end is None else float(t_end)
    if t1 <= t0:
        # stationary or single-frame trajectory: one step of constant heights
        t1 = t0 + dt
    ts = time_grid(t0, t1, dt)
    front, rear = contact_points(trajectory, params, ts)
    return SampledExcitation(
        t0=t0, dt=dt, z_rf=sample_height(field, front), z_rr=sample_height(field, rear),
        description="height-field contacts",
    )
