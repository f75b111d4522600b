"""Pure numpy reference implementations of the render kernels.

Selected automatically when the compiled extension is unavailable; also the
ground truth the compiled kernels are tested against.
"""

from __future__ import annotations

import numpy as np

_PLANE_AXES = ((0, 1), (0, 2), (1, 2))


def sample_triplane(planes: np.ndarray, pts: np.ndarray, extent: float) -> np.ndarray:
    """planes [3, C, R, R] (rows=v, cols=u), pts [N, 3] -> features [N, C]."""
    planes = np.asarray(planes, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.float64)
    n = pts.shape[0]
    _, c, r, _ = planes.shape
    out = np.zeros((n, c))
    scale = r / (2.0 * extent)
    for k, (a, b) in enumerate(_PLANE_AXES):
        u = pts[:, a]
        v = pts[:, b]
        inside = (np.abs(u) <= extent) & (np.abs(v) <= extent)
        fu = (u + extent) * scale - 0.5
        fv = (v + extent) * scale - 0.5
        iu0 = np.floor(fu).astype(np.int64)
        iv0 = np.floor(fv).astype(np.int64)
        tu = fu - iu0
        tv = fv - iv0
        for du, wu in ((0, 1.0 - tu), (1, tu)):
            for dv, wv in ((0, 1.0 - tv), (1, tv)):
                iu = iu0 + du
                iv = iv0 + dv
                valid = (iu >= 0) & (iu < r) & (iv >= 0) & (iv < r) & inside
                w = wu * wv * valid
                vals = planes[k, :, iv.clip(0, r - 1), iu.clip(0, r - 1)]  # [N, C]
                out += vals * w[:, None]
    return out


def composite_rays(sigmas: np.ndarray, feats: np.ndarray, delta: float,
                   background: np.ndarray | None = None):
    """sigmas [Nr, Ns], feats [Nr, Ns, C] -> (features [Nr, C], weights [Nr, Ns])."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    feats = np.asarray(feats, dtype=np.float64)
    alpha = 1.0 - np.exp(-sigmas * delta)
    keep = 1.0 - alpha
    trans = np.cumprod(np.concatenate([np.ones_like(keep[:, :1]), keep[:, :-1]], axis=1), axis=1)
    weights = trans * alpha
    out = np.einsum("rs,rsc->rc", weights, feats)
    if background is not None:
        rest = 1.0 - weights.sum(axis=1)
        out = out + rest[:, None] * np.asarray(background, dtype=np.float64)
    return out, weights
