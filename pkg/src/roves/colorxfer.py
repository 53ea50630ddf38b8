"""Statistical colour transfer in CIE Lab (sRGB, D65).

Chroma channels get full mean/variance matching against a reference patch;
lightness only receives a partial mean shift (weight ``lam``) so local
texture contrast survives. The transferred colour is finally blended with
the source in RGB with weight ``beta``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

# linear sRGB -> XYZ (D65)
_M = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_M_INV = np.linalg.inv(_M)
# white point as the image of RGB (1, 1, 1), so white maps to a = b = 0 exactly
_WHITE = _M.sum(axis=1)
_EPS = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0

DEFAULT_CLIP = (0.02, 0.98)


def srgb_to_linear(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((np.maximum(c, 0.04045) + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.maximum(c, 0.0031308) ** (1.0 / 2.4) - 0.055)


def rgb_to_lab(rgb) -> np.ndarray:
    """sRGB in [0, 1] (last axis of size 3) to CIE Lab."""
    xyz = srgb_to_linear(rgb) @ _M.T / _WHITE
    f = np.where(xyz > _EPS, np.cbrt(xyz), (_KAPPA * xyz + 16.0) / 116.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def lab_to_rgb(lab, clamp: bool = True) -> np.ndarray:
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    xyz = np.where(f**3 > _EPS, f**3, (116.0 * f - 16.0) / _KAPPA)
    # L-only branch for Y keeps the inverse exact at the knee
    xyz[..., 1] = np.where(lab[..., 0] > _KAPPA * _EPS, fy**3, lab[..., 0] / _KAPPA)
    rgb = linear_to_srgb((xyz * _WHITE) @ _M_INV.T)
    return np.clip(rgb, 0.0, 1.0) if clamp else rgb


@dataclass(frozen=True)
class LabStats:
    mean: np.ndarray  # (3,)
    std: np.ndarray  # (3,) population standard deviation

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64).reshape(3))
        std = np.asarray(self.std, dtype=np.float64).reshape(3)
        if np.any(std < 0):
            raise ValueError("standard deviations must be >= 0")
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class TransferConfig:
    lam: float = 0.2
    beta: float = 0.75

    def __post_init__(self):
        for name in ("lam", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def clipped_channel(values, clip: tuple[float, float] | None = DEFAULT_CLIP) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if clip is None:
        return v
    lo, hi = np.quantile(v, clip)
    return v[(v >= lo) & (v <= hi)]


def compute_stats(colors, clip: tuple[float, float] | None = DEFAULT_CLIP) -> LabStats:
    """Per-channel mean and population std after trimming each channel to its own quantiles."""
    c = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if c.shape[0] < 2:
        raise ValueError("colour statistics need at least 2 colours")
    mean = np.empty(3)
    std = np.empty(3)
    for k in range(3):
        kept = clipped_channel(c[:, k], clip)
        if kept.size < 2:
            raise ValueError(f"only {kept.size} value(s) left in channel {k} after quantile clipping")
        mean[k] = kept.mean()
        std[k] = kept.std()
    return LabStats(mean, std)


def transfer(src, src_stats: LabStats, ref_stats: LabStats, cfg: TransferConfig = TransferConfig(),
             *, chroma_channels=(1, 2), shift_channels=(0,)) -> np.ndarray:
    """Map colours channel-wise: mean/std matching on ``chroma_channels`` and a
    ``lam``-weighted mean shift on ``shift_channels``.

    A chroma channel whose source std is 0 falls back to a plain mean shift.
    """
    out = np.array(src, dtype=np.float64, copy=True)
    for k in chroma_channels:
        s_src, s_ref = src_stats.std[k], ref_stats.std[k]
        if s_src > 0:
            out[..., k] = (out[..., k] - src_stats.mean[k]) / s_src * s_ref + ref_stats.mean[k]
        else:
            warnings.warn(f"source channel {k} has zero spread; applying mean shift only", stacklevel=2)
            out[..., k] = out[..., k] - src_stats.mean[k] + ref_stats.mean[k]
    for k in shift_channels:
        out[..., k] = out[..., k] + cfg.lam * (ref_stats.mean[k] - src_stats.mean[k])
    return out


def blend(src_rgb, transferred_rgb, beta: float) -> np.ndarray:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return (1.0 - beta) * np.asarray(src_rgb, dtype=np.float64) + beta * np.asarray(transferred_rgb, dtype=np.float64)


def harmonize(
    src_rgb,
    ref_rgb,
    cfg: TransferConfig = TransferConfig(),
    *,
    space: str = "lab",
    clip: tuple[float, float] | None = DEFAULT_CLIP,
    clip_source: bool = False,
) -> np.ndarray:
    """Recolour ``src_rgb`` toward the statistics of ``ref_rgb``; both (..., 3) in [0, 1].

    ``space="rgb"`` applies mean/std matching to all three RGB channels
    instead (ablation variant). The reference is always quantile-clipped;
    the source only when ``clip_source`` is set.
    """
    src_rgb = np.clip(np.asarray(src_rgb, dtype=np.float64), 0.0, 1.0)
    ref = np.clip(np.asarray(ref_rgb, dtype=np.float64), 0.0, 1.0).reshape(-1, 3)
    src_clip = clip if clip_source else None
    if space == "lab":
        src_lab = rgb_to_lab(src_rgb)
        new = transfer(src_lab, compute_stats(src_lab.reshape(-1, 3), src_clip),
                       compute_stats(rgb_to_lab(ref), clip), cfg)
        new_rgb = lab_to_rgb(new)
    elif space == "rgb":
        new = transfer(src_rgb, compute_stats(src_rgb.reshape(-1, 3), src_clip), compute_stats(ref, clip), cfg,
                       chroma_channels=(0, 1, 2), shift_channels=())
        new_rgb = np.clip(new, 0.0, 1.0)
    else:
        raise ValueError(f"space must be 'lab' or 'rgb', got {space!r}")
    return blend(src_rgb, new_rgb, cfg.beta)
