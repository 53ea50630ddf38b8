"""3D Gaussian primitive clouds: initialisation, footprint merge and binary PLY I/O.

Attribute conventions follow the common 3DGS checkpoint layout: colour as
spherical-harmonic coefficients (DC + 45 higher-order values), opacity as a
pre-sigmoid logit, scales as natural logs, rotations as unit quaternions
stored ``(w, x, y, z)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .heightfield import GroundPlane
from .lift import PointCloud

SH_C0 = 0.28209479177387814
N_REST = 45
DEFAULT_SIGMA = 0.01
DEFAULT_EPSILON = 1e-7
DEFAULT_OPACITY = 0.95
DEFAULT_MARGIN = 0.02
BRUTE_FORCE_LIMIT = 4096

PLY_PROPERTIES = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(N_REST)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)


class PlyFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ScaleConfig:
    sigma: float = DEFAULT_SIGMA
    epsilon: float = DEFAULT_EPSILON
    k: int = 1

    def __post_init__(self):
        if not (0.0 < self.sigma <= 1.0):
            raise ValueError(f"sigma must lie in (0, 1], got {self.sigma}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")


@dataclass(frozen=True)
class GaussianCloud:
    xyz: np.ndarray  # (N, 3) float32
    f_dc: np.ndarray  # (N, 3)
    f_rest: np.ndarray  # (N, 45)
    opacity: np.ndarray  # (N,) logit
    scale: np.ndarray  # (N, 3) log-scale
    rot: np.ndarray  # (N, 4) w, x, y, z

    def __post_init__(self):
        shapes = {"xyz": 3, "f_dc": 3, "f_rest": N_REST, "scale": 3, "rot": 4}
        n = np.asarray(self.xyz).reshape(-1, 3).shape[0]
        for name, width in shapes.items():
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float32).reshape(-1, width))
            if arr.shape[0] != n:
                raise ValueError(f"attribute {name} has {arr.shape[0]} rows, expected {n}")
            object.__setattr__(self, name, arr)
        op = np.ascontiguousarray(np.asarray(self.opacity, dtype=np.float32).reshape(-1))
        if op.shape[0] != n:
            raise ValueError(f"attribute opacity has {op.shape[0]} rows, expected {n}")
        object.__setattr__(self, "opacity", op)
        if not np.all(np.isfinite(self.scale)):
            raise ValueError("log-scales must be finite")
        norms = np.linalg.norm(self.rot.astype(np.float64), axis=1)
        if np.any(norms == 0) or not np.all(np.isfinite(norms)):
            raise ValueError("rotation quaternions must be nonzero and finite")
        off = np.abs(norms - 1.0) > 1e-6
        if np.any(off):
            rot = self.rot.copy()
            rot[off] = (self.rot[off].astype(np.float64) / norms[off, None]).astype(np.float32)
            object.__setattr__(self, "rot", rot)

    def __len__(self):
        return self.xyz.shape[0]

    @classmethod
    def empty(cls) -> "GaussianCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, N_REST)), np.zeros(0),
                   np.zeros((0, 3)), np.zeros((0, 4)))

    def subset(self, index) -> "GaussianCloud":
        return GaussianCloud(self.xyz[index], self.f_dc[index], self.f_rest[index],
                             self.opacity[index], self.scale[index], self.rot[index])

    def rgb(self) -> np.ndarray:
        """Base colour decoded from the DC coefficients (unclamped)."""
        return dc_to_rgb(self.f_dc.astype(np.float64))

    def with_rgb(self, rgb) -> "GaussianCloud":
        return GaussianCloud(self.xyz, rgb_to_dc(rgb), self.f_rest, self.opacity, self.scale, self.rot)

    def to_array(self) -> np.ndarray:
        """(N, 62) float32 rows in PLY property order (normals zero)."""
        n = len(self)
        return np.concatenate(
            [self.xyz, np.zeros((n, 3), np.float32), self.f_dc, self.f_rest,
             self.opacity[:, None], self.scale, self.rot], axis=1,
        )


def concat(*clouds: GaussianCloud) -> GaussianCloud:
    return GaussianCloud(*(np.concatenate([getattr(c, f) for c in clouds])
                           for f in ("xyz", "f_dc", "f_rest", "opacity", "scale", "rot")))


def rgb_to_dc(rgb) -> np.ndarray:
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


def dc_to_rgb(dc) -> np.ndarray:
    return np.asarray(dc, dtype=np.float64) * SH_C0 + 0.5


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


# -- scale initialisation ----------------------------------------------------


def _nn_brute(pts: np.ndarray, k: int, chunk: int = 256) -> np.ndarray:
    n = pts.shape[0]
    out = np.empty((n, k))
    for s in range(0, n, chunk):
        block = pts[s : s + chunk]
        d = np.sqrt(((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
        d[np.arange(block.shape[0]), np.arange(s, s + block.shape[0])] = np.inf
        part = np.partition(d, k - 1, axis=1)[:, :k]
        out[s : s + chunk] = np.sort(part, axis=1)
    return out


def _nn_tree(pts: np.ndarray, k: int) -> np.ndarray:
    dist, _ = cKDTree(pts).query(pts, k=k + 1)
    # column 0 is the query point itself (or an exact duplicate: same multiset)
    return np.asarray(dist).reshape(pts.shape[0], k + 1)[:, 1:]


def knn_distances(points, k: int = 1, method: str = "auto") -> np.ndarray:
    """Sorted distances to the ``k`` nearest other points, shape (N, k)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("nearest-neighbour distance needs at least 2 points")
    if not 1 <= k < n:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    if method == "auto":
        method = "brute" if n <= BRUTE_FORCE_LIMIT else "tree"
    if method == "brute":
        return _nn_brute(pts, k)
    if method == "tree":
        return _nn_tree(pts, k)
    raise ValueError(f"unknown method {method!r}")


def nn_distance(points, k: int = 1, method: str = "auto") -> np.ndarray:
    """Per-point neighbour distance.

    For ``k == 1`` the distance to the nearest other point. For larger ``k``
    the root-mean-square of the ``k`` nearest distances, as in the original
    3DGS initialisation.
    """
    d = knn_distances(points, k, method)
    if k == 1:
        return d[:, 0]
    return np.sqrt(np.mean(d**2, axis=1))


def init_scales(d, cfg: ScaleConfig = ScaleConfig()) -> np.ndarray:
    """Isotropic log-scale ``log(sqrt(d^2 + eps)) + log(sigma)`` on all three axes."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    s = np.log(np.sqrt(d * d + cfg.epsilon)) + math.log(cfg.sigma)
    return np.repeat(s[..., None], 3, axis=-1)


def make_primitives(
    cloud: PointCloud,
    cfg: ScaleConfig = ScaleConfig(),
    opacity: float = DEFAULT_OPACITY,
) -> GaussianCloud:
    """New primitives at the cloud's points: DC colour from RGB, zero higher-order SH,
    fixed opacity (stored as a logit), KNN log-scales and identity rotation."""
    n = len(cloud)
    if n == 0:
        raise ValueError("cannot initialise primitives from an empty cloud")
    if not 0.0 < opacity < 1.0:
        raise ValueError(f"opacity must lie in (0, 1), got {opacity}")
    rgb = cloud.colors
    if np.any(rgb < 0.0) or np.any(rgb > 1.0):
        warnings.warn("point colours outside [0, 1] were clamped", stacklevel=2)
        rgb = np.clip(rgb, 0.0, 1.0)
    if n >= 2:
        scales = init_scales(nn_distance(cloud.points, cfg.k if cfg.k < n else n - 1), cfg)
    else:
        scales = init_scales(np.zeros(1), cfg)
    rot = np.zeros((n, 4))
    rot[:, 0] = 1.0
    return GaussianCloud(
        xyz=cloud.points, f_dc=rgb_to_dc(rgb), f_rest=np.zeros((n, N_REST)),
        opacity=np.full(n, logit(opacity)), scale=scales, rot=rot,
    )


# -- merge --------------------------------------------------------------------


def footprint(cloud: GaussianCloud, plane: GroundPlane | None = None, margin: float = 0.0):
    """Axis-aligned 2-D bounds ``(lo, hi)`` of the cloud's ground projection, grown by margin."""
    uv = _ground_uv(cloud.xyz, plane)
    return uv.min(axis=0) - margin, uv.max(axis=0) + margin


def _ground_uv(xyz, plane: GroundPlane | None) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=np.float64)
    if plane is None:
        return xyz[:, :2]
    return plane.to_plane(xyz)


def replaced_mask(
    background: GaussianCloud,
    inserted: GaussianCloud,
    margin: float = DEFAULT_MARGIN,
    plane: GroundPlane | None = None,
    height_band: tuple[float, float] | None = None,
) -> np.ndarray:
    """Background primitives inside the inserted footprint (and optional height band)."""
    if len(inserted) == 0 or len(background) == 0:
        return np.zeros(len(background), dtype=bool)
    lo, hi = footprint(inserted, plane, margin)
    uv = _ground_uv(background.xyz, plane)
    inside = np.all((uv >= lo) & (uv <= hi), axis=1)
    if height_band is not None:
        h = (plane or GroundPlane.horizontal()).residual(background.xyz.astype(np.float64))
        inside &= (h >= height_band[0]) & (h <= height_band[1])
    return inside


def merge(
    background: GaussianCloud,
    inserted: GaussianCloud,
    margin: float = DEFAULT_MARGIN,
    *,
    plane: GroundPlane | None = None,
    height_band: tuple[float, float] | None = None,
) -> GaussianCloud:
    """Drop background primitives under the inserted footprint, then append the insertion.

    The footprint is the inserted cloud's axis-aligned bounding rectangle in
    ground-plane coordinates (world xy when ``plane`` is None) grown by
    ``margin`` metres.
    """
    drop = replaced_mask(background, inserted, margin, plane, height_band)
    return concat(background.subset(~drop), inserted)


# -- binary PLY ----------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def ply_header(n: int) -> bytes:
    lines = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    lines += [f"property float {p}" for p in PLY_PROPERTIES]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def save_ply(cloud: GaussianCloud, path) -> None:
    with open(path, "wb") as fh:
        fh.write(ply_header(len(cloud)))
        fh.write(cloud.to_array().astype("<f4").tobytes(order="C"))


def _parse_header(buf: bytes, path) -> tuple[int, list[tuple[str, str]], int]:
    end_tag = b"end_header\n"
    pos = buf.find(end_tag)
    if not buf.startswith(b"ply\n") or pos < 0:
        raise PlyFormatError(f"{path}: malformed header at byte offset 0 (missing 'ply' magic or 'end_header')")
    offset = 0
    n = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    for raw in buf[:pos].split(b"\n"):
        line_off = offset
        offset += len(raw) + 1
        try:
            parts = raw.decode("ascii").split()
        except UnicodeDecodeError:
            raise PlyFormatError(f"{path}: non-ASCII header line at byte offset {line_off}") from None
        if not parts or parts[0] in ("ply", "comment", "obj_info"):
            continue
        if parts[0] == "format":
            if parts[1:] != ["binary_little_endian", "1.0"]:
                raise PlyFormatError(f"{path}: unsupported format {' '.join(parts[1:])!r} at byte offset {line_off}")
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyFormatError(f"{path}: malformed element line at byte offset {line_off}")
            if parts[1] == "vertex":
                if n is not None:
                    raise PlyFormatError(f"{path}: duplicate vertex element at byte offset {line_off}")
                n = int(parts[2])
                in_vertex = True
            else:
                if int(parts[2]) != 0:
                    raise PlyFormatError(f"{path}: unsupported element {parts[1]!r} at byte offset {line_off}")
                in_vertex = False
        elif parts[0] == "property":
            if len(parts) != 3 or parts[1] not in _PLY_TYPES:
                raise PlyFormatError(f"{path}: unsupported property line {raw!r} at byte offset {line_off}")
            if in_vertex:
                props.append((parts[2], _PLY_TYPES[parts[1]]))
        else:
            raise PlyFormatError(f"{path}: unexpected header keyword {parts[0]!r} at byte offset {line_off}")
    if n is None:
        raise PlyFormatError(f"{path}: no vertex element in header")
    return n, props, pos + len(end_tag)


def load_ply(path) -> GaussianCloud:
    """Read a binary little-endian 3DGS PLY; extra vertex properties are ignored."""
    with open(path, "rb") as fh:
        buf = fh.read()
    n, props, data_off = _parse_header(buf, path)
    names = [p for p, _ in props]
    for required in PLY_PROPERTIES[:3] + PLY_PROPERTIES[6:]:
        if required not in names:
            raise PlyFormatError(f"{path}: vertex element is missing property {required!r}")
    for name, typ in props:
        if name in PLY_PROPERTIES and typ != "f4":
            raise PlyFormatError(f"{path}: property {name!r} must be float, got {typ}")
    if len(set(names)) != len(names):
        raise PlyFormatError(f"{path}: duplicate vertex property names")
    dtype = np.dtype([(p, "<" + t) for p, t in props])
    need = n * dtype.itemsize
    have = len(buf) - data_off
    if have < need:
        raise PlyFormatError(
            f"{path}: payload truncated at byte offset {data_off + have}: "
            f"expected {need} bytes for {n} vertices from offset {data_off}, found {have}"
        )
    if have > need:
        raise PlyFormatError(f"{path}: {have - need} trailing bytes after payload at byte offset {data_off + need}")
    rec = np.frombuffer(buf, dtype=dtype, count=n, offset=data_off)

    def cols(names_):
        return np.stack([rec[c] for c in names_], axis=1) if names_ else np.zeros((n, 0), np.float32)

    return GaussianCloud(
        xyz=cols(["x", "y", "z"]),
        f_dc=cols([f"f_dc_{i}" for i in range(3)]),
        f_rest=cols([f"f_rest_{i}" for i in range(N_REST)]),
        opacity=rec["opacity"].copy(),
        scale=cols([f"scale_{i}" for i in range(3)]),
        rot=cols([f"rot_{i}" for i in range(4)]),
    )
