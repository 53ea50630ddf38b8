"""Deterministic synthetic inputs for desk-scale runs of the whole pipeline.

The scene is a straight flat road along world +x with a half-sine speed hump
to be inserted across it, plus two vehicles driving over the hump at
constant speed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gaussians import N_REST, GaussianCloud, logit, rgb_to_dc, save_ply
from .images import write_depth_png, write_mask, write_rgb
from .pose import PoseSequence, save_poses


@dataclass(frozen=True)
class FixtureSpec:
    seed: int = 0
    amplitude: float = 0.07  # hump height, m
    hump_length: float = 0.4  # along travel, m
    hump_width: float = 3.5  # across the road, m
    hump_x: float = 10.0  # hump centre on the road, m
    rows: int = 64
    cols: int = 256
    road_length: float = 30.0
    road_width: float = 8.0
    road_spacing: float = 0.1
    speed: float = 5.0
    frame_rate: float = 10.0
    duration: float = 3.6


def hump_depth(rows: int, cols: int) -> np.ndarray:
    """16-bit relative depth: half-sine across rows, constant along columns."""
    r = np.arange(rows)
    prof = np.sin(np.pi * r / (rows - 1))
    return np.round(np.repeat(prof[:, None], cols, axis=1) * 60000.0) + 1000.0


def hump_mask(rows: int, cols: int, cut: int = 3) -> np.ndarray:
    """Full rectangle with small triangular corner cut-outs; spans every row and column."""
    m = np.ones((rows, cols), dtype=bool)
    r, c = np.mgrid[0:rows, 0:cols]
    for rr, cc in ((r, c), (rows - 1 - r, c), (r, cols - 1 - c), (rows - 1 - r, cols - 1 - c)):
        m &= ~(rr + cc < cut)
    return m


def checker_texture(rows: int, cols: int, rng: np.random.Generator, period: int = 16) -> np.ndarray:
    """Yellow/black warning stripes with mild per-pixel noise."""
    c = np.arange(cols)
    stripe = ((c // period) % 2).astype(bool)
    yellow = np.array([0.92, 0.78, 0.12])
    dark = np.array([0.10, 0.10, 0.09])
    tex = np.where(stripe[None, :, None], yellow, dark) * np.ones((rows, 1, 1))
    tex = tex + rng.normal(0.0, 0.02, tex.shape)
    return np.clip(tex, 0.0, 1.0)


def road_patch(size: int, rng: np.random.Generator) -> np.ndarray:
    base = np.array([0.36, 0.35, 0.33])
    patch = base + rng.normal(0.0, 0.03, (size, size, 1)) + rng.normal(0.0, 0.01, (size, size, 3))
    return np.clip(patch, 0.0, 1.0)


def road_background(spec: FixtureSpec, rng: np.random.Generator) -> GaussianCloud:
    xs = np.arange(-5.0, spec.road_length - 5.0 + 1e-9, spec.road_spacing)
    ys = np.arange(-spec.road_width / 2, spec.road_width / 2 + 1e-9, spec.road_spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    n = gx.size
    xyz = np.stack([gx.ravel(), gy.ravel(), rng.normal(0.0, 0.001, n)], axis=1)
    rgb = np.clip(np.array([0.36, 0.35, 0.33]) + rng.normal(0.0, 0.03, (n, 1)), 0.0, 1.0)
    rot = np.zeros((n, 4))
    rot[:, 0] = 1.0
    return GaussianCloud(
        xyz=xyz, f_dc=rgb_to_dc(rgb), f_rest=np.zeros((n, N_REST)), opacity=np.full(n, logit(0.95)),
        scale=np.full((n, 3), np.log(spec.road_spacing / 2)), rot=rot,
    )


def straight_poses(vehicle_id: str, x0: float, spec: FixtureSpec, height: float = 0.5) -> PoseSequence:
    t = np.arange(int(round(spec.duration * spec.frame_rate)) + 1) / spec.frame_rate
    p = np.stack([x0 + spec.speed * t, np.zeros_like(t), np.full_like(t, height)], axis=1)
    q = np.tile([1.0, 0.0, 0.0, 0.0], (t.size, 1))
    return PoseSequence(vehicle_id, t, q, p)


def write_fixtures(out_dir, spec: FixtureSpec = FixtureSpec()) -> dict[str, Path]:
    """Write texture, mask, depth, reference patch, background PLY, poses and a config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    files = {
        "texture": out / "texture.png",
        "mask": out / "mask.png",
        "depth": out / "depth.png",
        "reference": out / "road.png",
        "background": out / "background.ply",
        "poses": out / "poses.json",
        "config": out / "config.json",
    }
    write_rgb(files["texture"], checker_texture(spec.rows, spec.cols, rng))
    write_mask(files["mask"], hump_mask(spec.rows, spec.cols))
    write_depth_png(files["depth"], hump_depth(spec.rows, spec.cols))
    write_rgb(files["reference"], road_patch(64, rng))
    save_ply(road_background(spec, rng), files["background"])
    save_poses(files["poses"], {
        "ego": straight_poses("ego", 2.0, spec),
        "front": straight_poses("front", 6.0, spec),
    })
    config = {
        "paths": {
            "texture": "texture.png", "mask": "mask.png", "depth": "depth.png",
            "reference": "road.png", "background": "background.ply", "poses": "poses.json",
            "output_dir": "out",
        },
        "dims": {"L_x": spec.hump_length, "L_y": spec.hump_width, "L_z": spec.amplitude},
        "placement": {"translation": [spec.hump_x, 0.0, 0.0], "yaw": 0.0},
        "scale": {"sigma": 0.01, "epsilon": 1e-7, "k": 1},
        "transfer": {"enabled": True, "lambda": 0.2, "beta": 0.75, "source": "img", "space": "lab"},
        "merge": {"margin": 0.02},
        "heightfield": {"cell_size": 0.05, "mode": "max"},
        "vehicle": {"preset": "ego"},
        "vehicles": {"front": {"preset": "front"}},
        "sim": {"dt": 0.001},
        "frame_rate": spec.frame_rate,
    }
    files["config"].write_text(json.dumps(config, indent=2) + "\n")
    return files
