"""Per-frame vehicle pose sequences: direct edits and dynamics-driven correction.

Quaternions are stored ``(w, x, y, z)`` and map object coordinates to world
coordinates. Vehicle body axes are x forward, y left, z up; the correction
pitches about the body lateral axis so that a positive angle lowers the
front of the vehicle, matching the half-car sign convention.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .halfcar import SimulationResult
from .heightfield import GroundPlane, Trajectory


def _rot(q) -> Rotation:
    return Rotation.from_quat(np.asarray(q, dtype=float), scalar_first=True)


def _quat(r: Rotation) -> np.ndarray:
    q = r.as_quat(scalar_first=True)
    # canonical sign keeps output stable for equal rotations
    return np.where(q[..., :1] < 0, -q, q)


@dataclass(frozen=True)
class PoseSequence:
    vehicle_id: str
    t: np.ndarray  # (n,)
    q: np.ndarray  # (n, 4) w, x, y, z
    p: np.ndarray  # (n, 3)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        q = np.asarray(self.q, dtype=float).reshape(-1, 4)
        p = np.asarray(self.p, dtype=float).reshape(-1, 3)
        if q.shape[0] != t.size or p.shape[0] != t.size:
            raise ValueError(f"{self.vehicle_id}: pose arrays disagree on frame count")
        if np.any(np.diff(t) <= 0):
            raise ValueError(f"{self.vehicle_id}: timestamps must be strictly increasing")
        if t.size and np.any(np.abs(np.linalg.norm(q, axis=1) - 1.0) > 1e-6):
            raise ValueError(f"{self.vehicle_id}: quaternions must be unit length")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    def __len__(self):
        return self.t.size

    def rotations(self) -> Rotation:
        return _rot(self.q)

    def transform_points(self, frame: int, body_points) -> np.ndarray:
        return _rot(self.q[frame]).apply(np.asarray(body_points, dtype=float)) + self.p[frame]

    def to_frames(self) -> list[dict]:
        return [{"t": float(t), "q": [float(v) for v in q], "p": [float(v) for v in p]}
                for t, q, p in zip(self.t, self.q, self.p)]

    @classmethod
    def from_frames(cls, vehicle_id: str, frames: list[dict]) -> "PoseSequence":
        if not frames:
            return cls(vehicle_id, np.zeros(0), np.zeros((0, 4)), np.zeros((0, 3)))
        for i, fr in enumerate(frames):
            missing = {"t", "q", "p"} - set(fr)
            if missing:
                raise ValueError(f"{vehicle_id} frame {i}: missing keys {sorted(missing)}")
        return cls(vehicle_id, [f["t"] for f in frames], [f["q"] for f in frames], [f["p"] for f in frames])

    def trajectory(self, plane: GroundPlane | None = None) -> Trajectory:
        """Ground-plane CoM track and heading (body x projected onto the plane)."""
        plane = plane or GroundPlane.horizontal()
        fwd = self.rotations().apply(np.array([1.0, 0.0, 0.0]))
        fwd = np.atleast_2d(fwd)
        hd = plane.direction_to_plane(fwd)
        norms = np.linalg.norm(hd, axis=1, keepdims=True)
        if np.any(norms < 1e-9):
            raise ValueError(f"{self.vehicle_id}: body x axis is perpendicular to the ground plane")
        return Trajectory(self.t, plane.to_plane(self.p), hd / norms)


# -- direct edits -------------------------------------------------------------


@dataclass(frozen=True)
class Translate:
    delta: tuple[float, float, float]


@dataclass(frozen=True)
class Rotate:
    dq: tuple[float, float, float, float]  # w, x, y, z


@dataclass(frozen=True)
class Delete:
    start: int
    stop: int  # exclusive


def edit_pose(seq: PoseSequence, op) -> PoseSequence:
    """Apply one edit to every frame (translate, rotate) or drop a frame range (delete)."""
    if isinstance(op, Translate):
        return PoseSequence(seq.vehicle_id, seq.t, seq.q, seq.p + np.asarray(op.delta, dtype=float))
    if isinstance(op, Rotate):
        dq = np.asarray(op.dq, dtype=float)
        norm = np.linalg.norm(dq)
        if norm == 0:
            raise ValueError("rotation quaternion is zero")
        if abs(norm - 1.0) > 1e-9:
            warnings.warn(f"rotation quaternion had norm {norm:.6g}; normalised", stacklevel=2)
            dq = dq / norm
        if len(seq) == 0 or np.allclose(dq, [1.0, 0.0, 0.0, 0.0], rtol=0, atol=0):
            return seq
        return PoseSequence(seq.vehicle_id, seq.t, _quat(_rot(dq) * seq.rotations()), seq.p)
    if isinstance(op, Delete):
        if not (0 <= op.start <= op.stop <= len(seq)):
            raise ValueError(f"delete range [{op.start}, {op.stop}) outside 0..{len(seq)}")
        keep = np.ones(len(seq), dtype=bool)
        keep[op.start : op.stop] = False
        return PoseSequence(seq.vehicle_id, seq.t[keep], seq.q[keep], seq.p[keep])
    raise TypeError(f"unsupported pose edit {op!r}")


# -- dynamics correction ----------------------------------------------------------


@dataclass(frozen=True)
class CorrectionSeries:
    t: np.ndarray
    dz: np.ndarray  # body vertical displacement, m
    dtheta: np.ndarray  # pitch, rad (positive lowers the front)

    def __len__(self):
        return self.t.size

    @classmethod
    def zeros(cls, t) -> "CorrectionSeries":
        t = np.asarray(t, dtype=float)
        return cls(t, np.zeros_like(t), np.zeros_like(t))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,z_s,theta\n")
            for row in zip(self.t, self.dz, self.dtheta):
                fh.write("%.9g,%.9g,%.9g\n" % row)


def sample_correction(sim: SimulationResult, timestamps, tol: float = 1e-9) -> CorrectionSeries:
    """Linearly interpolate ``z_s`` and ``theta`` at the given frame times."""
    ts = np.asarray(timestamps, dtype=float).reshape(-1)
    lo, hi = float(sim.t[0]), float(sim.t[-1])
    for i, t in enumerate(ts):
        if t < lo - tol or t > hi + tol:
            raise ValueError(f"frame {i} at t={t:.9g} s lies outside the simulated interval [{lo:.9g}, {hi:.9g}] s")
    return CorrectionSeries(ts, np.interp(ts, sim.t, sim.z_s), np.interp(ts, sim.t, sim.theta))


@dataclass(frozen=True)
class CorrectionFrame:
    """How a pose sequence's body frame relates to the vehicle.

    ``lateral_axis`` is the body-frame axis the pitch rotates about, oriented so
    a positive right-handed rotation lowers the front: ``(0, 1, 0)`` for
    x-forward/y-left vehicle frames, ``(-1, 0, 0)`` for x-right/y-down/z-forward
    camera frames. ``pivot`` is the CoM in body coordinates; for a camera
    rigidly mounted at offset ``m`` from the CoM, ``pivot = -m`` expressed in
    camera axes.
    """

    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    lateral_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    pivot: tuple[float, float, float] = (0.0, 0.0, 0.0)


def apply_correction(seq: PoseSequence, corr: CorrectionSeries,
                     frame: CorrectionFrame = CorrectionFrame()) -> PoseSequence:
    """Superimpose vertical displacement along ``up`` and pitch about the body lateral axis."""
    if len(corr) != len(seq):
        raise ValueError(f"{seq.vehicle_id}: {len(corr)} corrections for {len(seq)} frames")
    up = np.asarray(frame.up, dtype=float)
    if abs(np.linalg.norm(up) - 1.0) > 1e-9:
        raise ValueError("up vector must be unit length")
    if len(seq) == 0:
        return seq
    axis_b = np.asarray(frame.lateral_axis, dtype=float)
    axis_b = axis_b / np.linalg.norm(axis_b)
    pivot_b = np.asarray(frame.pivot, dtype=float)
    base = seq.rotations()
    axis_w = base.apply(axis_b)
    dtheta = np.asarray(corr.dtheta, dtype=float)
    pitch = Rotation.from_rotvec(dtheta[:, None] * np.atleast_2d(axis_w))
    # frames without pitch keep their stored quaternion bit for bit
    moved = dtheta != 0.0
    q_new = seq.q.copy()
    if np.any(moved):
        q_new[moved] = _quat(pitch[moved] * base[moved])
    # rotate about the CoM: keep the pivot fixed, then lift it along up
    pivot_w = np.atleast_2d(base.apply(pivot_b))
    swing = np.zeros_like(pivot_w)
    swing[moved] = pivot_w[moved] - pitch[moved].apply(pivot_w[moved])
    p_new = seq.p + swing + np.asarray(corr.dz, dtype=float)[:, None] * up
    return PoseSequence(seq.vehicle_id, seq.t, q_new, p_new)


# -- files ----------------------------------------------------------------------


def load_poses(path) -> dict[str, PoseSequence]:
    """``{vehicle_id: [{t, q: [w,x,y,z], p: [x,y,z]}, ...], ...}``; a top-level
    ``provenance`` entry is skipped."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected an object mapping vehicle ids to frame lists")
    return {vid: PoseSequence.from_frames(vid, frames) for vid, frames in doc.items() if vid != "provenance"}


def dump_poses(seqs: dict[str, PoseSequence], provenance: dict | None = None) -> str:
    doc: dict = {vid: seq.to_frames() for vid, seq in seqs.items()}
    if provenance is not None:
        doc["provenance"] = provenance
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


def save_poses(path, seqs: dict[str, PoseSequence], provenance: dict | None = None) -> None:
    Path(path).write_text(dump_poses(seqs, provenance))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
