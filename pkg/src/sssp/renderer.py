"""Emission-absorption volume rendering of tri-plane scenes.

Rays are sampled at stratified depths (deterministic bin midpoints unless
jitter is enabled), each sample is decoded to a (color feature, density)
pair and the samples are composited front to back:

    alpha_j = 1 - exp(-sigma_j * delta_j)
    T_j     = prod_{k<j} (1 - alpha_k)
    w_j     = T_j * alpha_j
    out     = sum_j w_j feat_j + (1 - sum_j w_j) * background

The result is a feature image whose first three channels are the RGB view.

``row_stable=True`` evaluates every per-ray reduction with a fixed
elementwise accumulation order, so a ray's pixel is bit-identical whether
it is rendered alone, inside a crop, or inside the full frame. This is
slower and only needed when exact crop/full agreement matters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch

from .camera import Camera, default_near_far, generate_rays
from .triplane import PointDecoder, sample_planes


@dataclass
class RenderConfig:
    resolution: int = 32
    samples_per_ray: int = 32
    near: float | None = None  # default: radius - sqrt(3)*extent, clamped positive
    far: float | None = None   # default: radius + sqrt(3)*extent
    background: torch.Tensor | None = None  # [C], default zeros
    jitter: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        if self.samples_per_ray < 1:
            raise ValueError("samples_per_ray must be >= 1")
        if self.near is not None and self.far is not None and not 0 < self.near < self.far:
            raise ValueError("need 0 < near < far")

    def near_far(self, cam: Camera, extent: float) -> tuple[float, float]:
        if self.near is not None and self.far is not None:
            return self.near, self.far
        near, far = default_near_far(cam, extent)
        return (self.near if self.near is not None else near,
                self.far if self.far is not None else far)


@dataclass
class FeatureImage:
    """Accumulated h x h x C render; channels first ([C, h, h])."""

    data: torch.Tensor

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[1] != self.data.shape[2]:
            raise ValueError("feature image must be [C, h, h]")
        if not torch.isfinite(self.data).all():
            raise ValueError("feature image contains non-finite values")

    @property
    def rgb(self) -> torch.Tensor:
        """First three channels, as a view of the underlying storage."""
        return self.data[:3]

    @property
    def resolution(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[0]


def composite(
    sigmas: torch.Tensor,
    feats: torch.Tensor,
    deltas: torch.Tensor | float,
    background: torch.Tensor | None = None,
    row_stable: bool = False,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Front-to-back alpha compositing along the last sample dimension.

    sigmas: [..., N] nonnegative densities; feats: [..., N, C];
    deltas: scalar or [..., N] positive segment lengths.
    Returns (features [..., C], weights [..., N]).
    """
    if (torch.as_tensor(sigmas) < 0).any():
        raise ValueError("negative density")
    deltas_t = torch.as_tensor(deltas, dtype=sigmas.dtype)
    if (deltas_t <= 0).any():
        raise ValueError("deltas must be positive")
    alpha = 1.0 - torch.exp(-sigmas * deltas_t)  # [..., N]
    if row_stable:
        n = sigmas.shape[-1]
        trans = torch.ones_like(alpha[..., 0])
        out = torch.zeros_like(feats[..., 0, :])
        weights = []
        for j in range(n):
            w = trans * alpha[..., j]
            weights.append(w)
            out = out + w.unsqueeze(-1) * feats[..., j, :]
            trans = trans * (1.0 - alpha[..., j])
        weights = torch.stack(weights, dim=-1)
        acc = 1.0 - trans
    else:
        keep = 1.0 - alpha
        trans = torch.cumprod(
            torch.cat([torch.ones_like(keep[..., :1]), keep[..., :-1]], dim=-1), dim=-1
        )
        weights = trans * alpha
        out = (weights.unsqueeze(-1) * feats).sum(dim=-2)
        acc = weights.sum(dim=-1)
    if background is not None:
        out = out + (1.0 - acc).unsqueeze(-1) * background
    return out, weights


def sample_depths(cfg: RenderConfig, cam: Camera, extent: float, n_rays: int,
                  dtype: torch.dtype) -> tuple[torch.Tensor, float]:
    """Stratified depths [n_rays, N] and the (uniform) segment length."""
    near, far = cfg.near_far(cam, extent)
    n = cfg.samples_per_ray
    step = (far - near) / n
    base = torch.arange(n, dtype=dtype)
    if cfg.jitter:
        gen = torch.Generator().manual_seed(cfg.seed)
        offs = torch.rand(n_rays, n, generator=gen, dtype=dtype)
        t = near + (base + offs) * step
    else:
        t = (near + (base + 0.5) * step).expand(n_rays, n)
    return t, step


def _render_rays(
    planes: torch.Tensor,
    decoder: PointDecoder,
    origins: torch.Tensor,
    dirs: torch.Tensor,
    depths: torch.Tensor,
    delta: float,
    extent: float,
    background: torch.Tensor | None,
    row_stable: bool,
) -> torch.Tensor:
    """Composite one scene along [N_rays, N_samples] rays -> [N_rays, C]."""
    pts = origins.unsqueeze(1) + depths.unsqueeze(-1) * dirs.unsqueeze(1)  # [Nr, Ns, 3]
    nr, ns, _ = pts.shape
    feats = sample_planes(planes, pts.reshape(nr * ns, 3), extent).reshape(nr, ns, -1)
    color, sigma = decoder(feats, row_stable=row_stable)
    out, _ = composite(sigma, color, delta, background, row_stable=row_stable)
    return out


def render(
    planes: torch.Tensor,
    decoder: PointDecoder,
    cam: Camera,
    cfg: RenderConfig,
    extent: float = 1.0,
    row_stable: bool = False,
) -> FeatureImage:
    """Render a tri-plane ([3, C_t, R, R] stack) to a FeatureImage."""
    h = cfg.resolution
    dtype = planes.dtype
    origins, dirs = generate_rays(cam, h, dtype=dtype)
    depths, delta = sample_depths(cfg, cam, extent, h * h, dtype)
    bg = None if cfg.background is None else cfg.background.to(dtype)
    out = _render_rays(
        planes, decoder, origins.reshape(-1, 3), dirs.reshape(-1, 3),
        depths, delta, extent, bg, row_stable,
    )
    return FeatureImage(out.reshape(h, h, -1).permute(2, 0, 1))


def render_batch(
    planes: torch.Tensor,
    decoder: PointDecoder,
    cams: list[Camera],
    cfg: RenderConfig,
    extent: float = 1.0,
) -> torch.Tensor:
    """Render a batch of scenes, one camera each: [B, 3, C_t, R, R] -> [B, C, h, h].

    Used by the training loop; differentiable w.r.t. planes and decoder.
    """
    if planes.ndim != 5 or planes.shape[0] != len(cams):
        raise ValueError("planes must be [B, 3, C, R, R] with one camera per scene")
    b = planes.shape[0]
    h = cfg.resolution
    dtype = planes.dtype
    rays_o, rays_d, depth_list, delta_list = [], [], [], []
    for i, cam in enumerate(cams):
        o, d = generate_rays(cam, h, dtype=dtype)
        per_cam = replace(cfg, seed=cfg.seed + i) if cfg.jitter else cfg
        t, delta = sample_depths(per_cam, cam, extent, h * h, dtype)
        rays_o.append(o.reshape(-1, 3))
        rays_d.append(d.reshape(-1, 3))
        depth_list.append(t)
        delta_list.append(delta)
    origins = torch.stack(rays_o)            # [B, h*h, 3]
    dirs = torch.stack(rays_d)
    depths = torch.stack(depth_list)         # [B, h*h, Ns]
    pts = origins.unsqueeze(2) + depths.unsqueeze(-1) * dirs.unsqueeze(2)
    ns = cfg.samples_per_ray
    feats = sample_planes(planes, pts.reshape(b, h * h * ns, 3), extent)
    feats = feats.reshape(b, h * h, ns, -1)
    color, sigma = decoder(feats)
    bg = None if cfg.background is None else cfg.background.to(dtype)
    deltas = torch.tensor(delta_list, dtype=dtype).view(b, 1, 1)
    out, _ = composite(sigma, color, deltas, bg)
    return out.reshape(b, h, h, -1).permute(0, 3, 1, 2)
