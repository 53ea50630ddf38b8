"""Evaluation metrics: response agreement, image sharpness and CIEDE2000."""
from __future__ import annotations

import numpy as np

from .colorxfer import rgb_to_lab, srgb_to_linear


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"series lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("series are empty")
    return a, b


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def extrema_errors(a, b) -> tuple[float, float]:
    """Peak and trough discrepancies ``(|max a - max b|, |min a - min b|)``."""
    a, b = _pair(a, b)
    return float(abs(a.max() - b.max())), float(abs(a.min() - b.min()))


def extrema_error(a, b) -> float:
    return max(extrema_errors(a, b))


# -- sharpness -------------------------------------------------------------------


def to_gray(rgb) -> np.ndarray:
    """BT.709 luma of linearised sRGB, in [0, 1]."""
    lin = srgb_to_linear(np.asarray(rgb, dtype=np.float64)[..., :3])
    return lin @ np.array([0.2126, 0.7152, 0.0722])


def _gray(img) -> np.ndarray:
    g = np.asarray(img, dtype=np.float64)
    if g.ndim == 3:
        g = to_gray(g)
    if g.ndim != 2 or g.shape[0] < 3 or g.shape[1] < 3:
        raise ValueError(f"sharpness metrics need a gray image of at least 3x3, got shape {g.shape}")
    return g


def laplacian(img) -> np.ndarray:
    """4-neighbour Laplacian on interior pixels (no padding)."""
    g = _gray(img)
    return g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:] - 4.0 * g[1:-1, 1:-1]


def sobel(img) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel responses ``(G_x, G_y)`` on interior pixels."""
    g = _gray(img)
    gx = (g[:-2, 2:] + 2.0 * g[1:-1, 2:] + g[2:, 2:]) - (g[:-2, :-2] + 2.0 * g[1:-1, :-2] + g[2:, :-2])
    gy = (g[2:, :-2] + 2.0 * g[2:, 1:-1] + g[2:, 2:]) - (g[:-2, :-2] + 2.0 * g[:-2, 1:-1] + g[:-2, 2:])
    return gx, gy


def laplacian_variance(img) -> float:
    return float(np.var(laplacian(img)))


def tenengrad(img) -> float:
    gx, gy = sobel(img)
    return float(np.mean(gx * gx + gy * gy))


def box_blur(img, size: int = 2) -> np.ndarray:
    """Mean filter over ``size x size`` windows with edge replication (same shape)."""
    g = np.asarray(img, dtype=np.float64)
    pad_lo = (size - 1) // 2
    pad_hi = size - 1 - pad_lo
    widths = [(pad_lo, pad_hi), (pad_lo, pad_hi)] + [(0, 0)] * (g.ndim - 2)
    p = np.pad(g, widths, mode="edge")
    out = np.zeros_like(g)
    h, w = g.shape[:2]
    for i in range(size):
        for j in range(size):
            out += p[i : i + h, j : j + w]
    return out / (size * size)


# -- colour difference ------------------------------------------------------------


def ciede2000(lab1, lab2, kL: float = 1.0, kC: float = 1.0, kH: float = 1.0):
    """CIEDE2000 colour difference; inputs broadcast over leading axes."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    C1 = np.hypot(a1, b1)
    C2 = np.hypot(a2, b2)
    Cbar7 = ((C1 + C2) / 2.0) ** 7
    G = 0.5 * (1.0 - np.sqrt(Cbar7 / (Cbar7 + 25.0**7)))
    a1p = (1.0 + G) * a1
    a2p = (1.0 + G) * a2
    C1p = np.hypot(a1p, b1)
    C2p = np.hypot(a2p, b2)
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0
    h1p = np.where(C1p == 0, 0.0, h1p)
    h2p = np.where(C2p == 0, 0.0, h2p)

    dLp = L2 - L1
    dCp = C2p - C1p
    dh = h2p - h1p
    dh = np.where(dh > 180.0, dh - 360.0, np.where(dh < -180.0, dh + 360.0, dh))
    dh = np.where(C1p * C2p == 0, 0.0, dh)
    dHp = 2.0 * np.sqrt(C1p * C2p) * np.sin(np.radians(dh) / 2.0)

    Lbp = (L1 + L2) / 2.0
    Cbp = (C1p + C2p) / 2.0
    hsum = h1p + h2p
    hbp = np.where(
        np.abs(h1p - h2p) <= 180.0,
        hsum / 2.0,
        np.where(hsum < 360.0, (hsum + 360.0) / 2.0, (hsum - 360.0) / 2.0),
    )
    hbp = np.where(C1p * C2p == 0, hsum, hbp)

    T = (1.0 - 0.17 * np.cos(np.radians(hbp - 30.0)) + 0.24 * np.cos(np.radians(2.0 * hbp))
         + 0.32 * np.cos(np.radians(3.0 * hbp + 6.0)) - 0.20 * np.cos(np.radians(4.0 * hbp - 63.0)))
    dtheta = 30.0 * np.exp(-(((hbp - 275.0) / 25.0) ** 2))
    Cbp7 = Cbp**7
    RC = 2.0 * np.sqrt(Cbp7 / (Cbp7 + 25.0**7))
    SL = 1.0 + 0.015 * (Lbp - 50.0) ** 2 / np.sqrt(20.0 + (Lbp - 50.0) ** 2)
    SC = 1.0 + 0.045 * Cbp
    SH = 1.0 + 0.015 * Cbp * T
    RT = -np.sin(np.radians(2.0 * dtheta)) * RC

    tL = dLp / (kL * SL)
    tC = dCp / (kC * SC)
    tH = dHp / (kH * SH)
    de = np.sqrt(tL * tL + tC * tC + tH * tH + RT * tC * tH)
    return float(de) if de.ndim == 0 else de


def region_ciede2000(rgb1, rgb2, mask1=None, mask2=None, mode: str = "mean-lab") -> float:
    """CIEDE2000 between two image regions.

    ``mean-lab`` compares the mean Lab colour of each region; ``per-pixel``
    averages pixelwise differences and needs equally shaped regions.
    """
    lab1 = rgb_to_lab(rgb1)
    lab2 = rgb_to_lab(rgb2)
    sel1 = lab1.reshape(-1, 3) if mask1 is None else lab1[np.asarray(mask1, bool)]
    sel2 = lab2.reshape(-1, 3) if mask2 is None else lab2[np.asarray(mask2, bool)]
    if sel1.size == 0 or sel2.size == 0:
        raise ValueError("empty colour region")
    if mode == "mean-lab":
        return float(ciede2000(sel1.mean(axis=0), sel2.mean(axis=0)))
    if mode == "per-pixel":
        if sel1.shape != sel2.shape:
            raise ValueError("per-pixel CIEDE2000 needs regions of equal size")
        return float(np.mean(ciede2000(sel1, sel2)))
    raise ValueError(f"unknown mode {mode!r}")
