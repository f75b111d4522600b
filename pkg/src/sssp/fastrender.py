"""Grad-free CPU rendering through the compiled kernels.

Mirrors sssp.renderer for inference: tri-plane sampling and compositing run
in the selected kernel backend (Cython or numpy fallback), the tiny decoder
MLP runs as BLAS matmuls. Intended for the CLI fast path and benchmarks;
training and the service stay on the autograd renderer.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .camera import Camera, generate_rays
from .renderer import RenderConfig, sample_depths
from .triplane import PointDecoder

import torch


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


class InferenceRenderer:
    """Renders a fixed tri-plane scene with numpy weights and C kernels."""

    def __init__(self, planes: torch.Tensor, decoder: PointDecoder, extent: float = 1.0,
                 backend: str | None = None):
        self.planes = np.ascontiguousarray(planes.detach().cpu().numpy(), dtype=np.float64)
        if self.planes.ndim != 4 or self.planes.shape[0] != 3:
            raise ValueError("planes must be a [3, C, R, R] stack")
        self.extent = float(extent)
        self.out_channels = decoder.out_channels
        self._weights = [
            (lin.weight.detach().cpu().numpy().astype(np.float64),
             lin.bias.detach().cpu().numpy().astype(np.float64))
            for lin in (decoder.fc1, decoder.fc2, decoder.fc3)
        ]
        self._kernel = _kernels.get_backend(backend) if backend else _kernels

    def _decode(self, feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        (w1, b1), (w2, b2), (w3, b3) = self._weights
        h = _softplus(feats @ w1.T + b1)
        h = _softplus(h @ w2.T + b2)
        raw = h @ w3.T + b3
        return raw[:, : self.out_channels], _softplus(raw[:, self.out_channels])

    def render(self, cam: Camera, cfg: RenderConfig) -> np.ndarray:
        """Render to a [C, h, h] float64 image."""
        h = cfg.resolution
        origins, dirs = generate_rays(cam, h, dtype=torch.float64)
        depths, delta = sample_depths(cfg, cam, self.extent, h * h, torch.float64)
        o = origins.reshape(-1, 3).numpy()
        d = dirs.reshape(-1, 3).numpy()
        t = depths.numpy()
        pts = o[:, None, :] + t[..., None] * d[:, None, :]
        nr, ns, _ = pts.shape
        feats = self._kernel.sample_triplane(
            self.planes, np.ascontiguousarray(pts.reshape(-1, 3)), self.extent
        )
        color, sigma = self._decode(feats)
        color = np.ascontiguousarray(color.reshape(nr, ns, -1))
        sigma = np.ascontiguousarray(sigma.reshape(nr, ns))
        bg = None if cfg.background is None else np.asarray(cfg.background, dtype=np.float64)
        out, _ = self._kernel.composite_rays(sigma, color, delta, bg)
        return out.reshape(h, h, -1).transpose(2, 0, 1)
