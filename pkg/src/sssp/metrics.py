"""Image quality metrics: PSNR, SSIM and the CPBD sharpness score.

All functions take images in [0, 1]. PSNR and SSIM are full-reference;
CPBD is no-reference: it estimates, per detected edge, the probability
that its width is noticeable blur, and reports the share of edges whose
blur stays below the just-noticeable threshold (higher = sharper).
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import convolve1d
from scipy.signal import convolve2d

PSNR_CAP_DB = 99.0
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_SIGMA = 1.5
_SSIM_WIN = 11

# CPBD constants: just-noticeable blur widths by block contrast, the
# psychometric exponent, and P(blur) at the just-noticeable width.
_JNB_WIDTH_LOW_CONTRAST = 5.0
_JNB_WIDTH_HIGH_CONTRAST = 3.0
_CONTRAST_SPLIT = 50
_PSYCH_BETA = 3.6
_P_JNB = 1.0 - np.exp(-1.0)
_BLOCK = 64
_EDGE_BLOCK_FRACTION = 0.002


def _to_array(img, name: str) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images; capped at 99."""
    x = _to_array(a, "a")
    y = _to_array(b, "b")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return 10.0 * np.log10(1.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_single(x: np.ndarray, y: np.ndarray) -> float:
    win = _gaussian_window(_SSIM_WIN, _SSIM_SIGMA)
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2
    mu_x = convolve2d(x, win, mode="valid")
    mu_y = convolve2d(y, win, mode="valid")
    xx = convolve2d(x * x, win, mode="valid") - mu_x**2
    yy = convolve2d(y * y, win, mode="valid") - mu_y**2
    xy = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def ssim(a, b) -> float:
    """Structural similarity (11x11 Gaussian window, K1=0.01, K2=0.03, L=1).

    Accepts [H, W] or [H, W, C]; channels are averaged.
    """
    x = _to_array(a, "a")
    y = _to_array(b, "b")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if min(x.shape[0], x.shape[1]) < _SSIM_WIN:
        raise ValueError(f"images must be at least {_SSIM_WIN}x{_SSIM_WIN}")
    if x.ndim == 2:
        return _ssim_single(x, y)
    if x.ndim == 3:
        return float(np.mean([_ssim_single(x[..., c], y[..., c]) for c in range(x.shape[2])]))
    raise ValueError("expected [H, W] or [H, W, C]")


def _edge_widths(row: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Marziliano edge widths along one image row.

    For each edge column, walk to the local extrema on both sides of the
    transition; width = total run length in pixels.
    """
    n = row.shape[0]
    widths = np.empty(len(cols))
    for out_i, c in enumerate(cols):
        rising = row[min(c + 1, n - 1)] >= row[max(c - 1, 0)]
        left = c
        while left > 0:
            a, b = row[left - 1], row[left]
            if (a < b) if rising else (a > b):
                left -= 1
            else:
                break
        right = c
        while right < n - 1:
            a, b = row[right], row[right + 1]
            if (b > a) if rising else (b < a):
                right += 1
            else:
                break
        widths[out_i] = right - left
    return widths


def cpbd(img) -> float:
    """Cumulative probability of blur detection, in [0, 1].

    Processes 64x64 blocks; in blocks with enough edge pixels, measures each
    edge's width, converts it to a blur-detection probability against the
    contrast-dependent just-noticeable width, and returns the share of edges
    below the just-noticeable probability. A constant image has no edges and
    scores 0.
    """
    gray = _to_array(img, "img")
    if gray.ndim != 2:
        raise ValueError("cpbd expects a grayscale [H, W] image")
    gray = gray * 255.0

    gx = convolve1d(gray, [-1, 0, 1], axis=1, mode="nearest")
    mag = np.abs(gx)
    if mag.max() <= 1e-12:
        return 0.0
    thr = 2.0 * mag.mean()
    edge_map = mag > thr

    probs = []
    h, w = gray.shape
    for r0 in range(0, h, _BLOCK):
        for c0 in range(0, w, _BLOCK):
            block = gray[r0 : r0 + _BLOCK, c0 : c0 + _BLOCK]
            edges = edge_map[r0 : r0 + _BLOCK, c0 : c0 + _BLOCK]
            if edges.sum() <= _EDGE_BLOCK_FRACTION * block.size:
                continue
            contrast = block.max() - block.min()
            w_jnb = _JNB_WIDTH_LOW_CONTRAST if contrast <= _CONTRAST_SPLIT else _JNB_WIDTH_HIGH_CONTRAST
            for rr in range(block.shape[0]):
                cols = np.flatnonzero(edges[rr])
                if cols.size == 0:
                    continue
                widths = _edge_widths(gray[r0 + rr], cols + c0)
                probs.append(1.0 - np.exp(-np.abs(widths / w_jnb) ** _PSYCH_BETA))
    if not probs:
        return 0.0
    all_probs = np.concatenate(probs)
    return float(np.mean(all_probs <= _P_JNB))
