"""Tri-plane 3D representation.

Scene features live in three orthogonal 2D grids (xy, xz, yz) spanning the
cube [-extent, extent]^3. A 3D point is described by the sum of bilinearly
interpolated features at its three plane projections; a tiny MLP decodes
that sum into a color feature and a nonnegative density.

Grid samples sit at pixel centers, symmetric about the plane midline, so
that reversing a plane's x-axis maps sample positions onto sample positions.
Together with zero contribution outside the cube this makes the mirror
identity query(F, p) == query(flip(F), mirror(p)) hold to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

# plane index -> which point coordinates form (u, v)
PLANE_AXES = ((0, 1), (0, 2), (1, 2))  # xy, xz, yz


@dataclass
class TriPlane:
    """Three axis-aligned feature grids, each [C_t, R, R] (rows=v, cols=u)."""

    plane_xy: torch.Tensor
    plane_xz: torch.Tensor
    plane_yz: torch.Tensor
    extent: float = 1.0

    def __post_init__(self):
        shapes = {self.plane_xy.shape, self.plane_xz.shape, self.plane_yz.shape}
        if len(shapes) != 1:
            raise ValueError(f"plane shapes differ: {shapes}")
        if self.plane_xy.ndim != 3 or self.plane_xy.shape[1] != self.plane_xy.shape[2]:
            raise ValueError("each plane must be [C, R, R]")
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        for name in ("plane_xy", "plane_xz", "plane_yz"):
            if not torch.isfinite(getattr(self, name)).all():
                raise ValueError(f"{name} contains non-finite values")

    @property
    def resolution(self) -> int:
        return self.plane_xy.shape[1]

    @property
    def channels(self) -> int:
        return self.plane_xy.shape[0]

    def stacked(self) -> torch.Tensor:
        """Planes as one [3, C, R, R] tensor (xy, xz, yz order)."""
        return torch.stack([self.plane_xy, self.plane_xz, self.plane_yz], dim=0)

    @classmethod
    def from_stacked(cls, planes: torch.Tensor, extent: float = 1.0) -> "TriPlane":
        return cls(planes[0], planes[1], planes[2], extent=extent)


def as_point(p) -> torch.Tensor:
    """Validate and convert a 3D point (or batch of points) to a tensor."""
    t = p if torch.is_tensor(p) else torch.as_tensor(p, dtype=torch.float64)
    if t.shape[-1] != 3:
        raise ValueError("points must have 3 components in the last dimension")
    if not torch.isfinite(t).all():
        raise ValueError("point coordinates must be finite")
    return t


def project_point(p) -> tuple:
    """Project a point onto the three planes: (x,y), (x,z), (y,z)."""
    t = as_point(p)
    return (
        t[..., (0, 1)],
        t[..., (0, 2)],
        t[..., (1, 2)],
    )


def mirror_point(p) -> torch.Tensor:
    """Reflect about the yz-plane: (x, y, z) -> (-x, y, z)."""
    t = as_point(p)
    out = t.clone()
    out[..., 0] = -out[..., 0]
    return out


def _sample_plane(plane: torch.Tensor, u: torch.Tensor, v: torch.Tensor, extent: float) -> torch.Tensor:
    """Bilinear sample of one plane at continuous coords, zero outside.

    plane: [B, C, R, R] (rows index v, cols index u); u, v: [B, N].
    Returns [B, N, C]. Neighbours outside the grid contribute zero, and
    points with |u| > extent or |v| > extent contribute zero entirely.
    """
    B, C, R, _ = plane.shape
    scale = R / (2.0 * extent)
    fu = (u + extent) * scale - 0.5
    fv = (v + extent) * scale - 0.5
    iu0 = torch.floor(fu)
    iv0 = torch.floor(fv)
    tu = fu - iu0
    tv = fv - iv0
    iu0 = iu0.long()
    iv0 = iv0.long()

    inside = ((u.abs() <= extent) & (v.abs() <= extent)).to(plane.dtype)

    flat = plane.reshape(B, C, R * R)
    out = None
    for du, wu in ((0, 1.0 - tu), (1, tu)):
        for dv, wv in ((0, 1.0 - tv), (1, tv)):
            iu = iu0 + du
            iv = iv0 + dv
            valid = ((iu >= 0) & (iu < R) & (iv >= 0) & (iv < R)).to(plane.dtype)
            idx = (iv.clamp(0, R - 1) * R + iu.clamp(0, R - 1))  # [B, N]
            gathered = flat.gather(2, idx.unsqueeze(1).expand(B, C, -1))  # [B, C, N]
            w = (wu * wv * valid * inside).unsqueeze(1)  # [B, 1, N]
            term = gathered * w
            out = term if out is None else out + term
    return out.permute(0, 2, 1)  # [B, N, C]


def sample_planes(planes: torch.Tensor, points: torch.Tensor, extent: float = 1.0) -> torch.Tensor:
    """Aggregate tri-plane feature at 3D points (sum over the three planes).

    planes: [3, C, R, R] or [B, 3, C, R, R]; points: [N, 3] or [B, N, 3].
    Returns [N, C] or [B, N, C] matching the input batching.
    """
    squeeze = planes.ndim == 4
    if squeeze:
        planes = planes.unsqueeze(0)
        points = points.unsqueeze(0)
    if planes.ndim != 5 or planes.shape[1] != 3:
        raise ValueError("planes must be [B, 3, C, R, R]")
    out = None
    for k, (a, b) in enumerate(PLANE_AXES):
        term = _sample_plane(planes[:, k], points[..., a], points[..., b], extent)
        out = term if out is None else out + term
    return out.squeeze(0) if squeeze else out


def query_triplane(tp: TriPlane, p) -> torch.Tensor:
    """Interpolated tri-plane feature at point(s) p; zero outside the cube."""
    points = as_point(p).to(tp.plane_xy.dtype)
    single = points.ndim == 1
    if single:
        points = points.unsqueeze(0)
    feats = sample_planes(tp.stacked(), points, tp.extent)
    return feats[0] if single else feats


def flip_planes(planes: torch.Tensor) -> torch.Tensor:
    """Reverse the x-axis of the xy and xz planes; yz untouched.

    Works on [..., 3, C, R, R] stacks. Involution: flip(flip(x)) == x.
    """
    flipped_xy_xz = planes[..., :2, :, :, :].flip(-1)
    return torch.cat([flipped_xy_xz, planes[..., 2:, :, :, :]], dim=-4)


def flip_triplane(tp: TriPlane) -> TriPlane:
    return TriPlane(
        plane_xy=tp.plane_xy.flip(-1),
        plane_xz=tp.plane_xz.flip(-1),
        plane_yz=tp.plane_yz.clone(),
        extent=tp.extent,
    )


def rowwise_linear(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Affine map evaluated with a fixed per-row accumulation order.

    Equivalent to F.linear up to floating-point rounding, but built from
    elementwise ops only, so a row's result is bit-identical no matter how
    many other rows are in the batch. Used by the renderer's bit-exact mode;
    BLAS matmuls do not guarantee this.
    """
    out = bias.expand(*x.shape[:-1], bias.shape[0]).clone()
    for i in range(x.shape[-1]):
        out = out + x[..., i : i + 1] * weight[:, i]
    return out


class PointDecoder(nn.Module):
    """Tiny MLP mapping an aggregated plane feature to (color feature, density).

    Two softplus hidden layers; the density logit goes through softplus so
    sigma >= 0 for any finite input.
    """

    def __init__(self, in_channels: int = 32, out_channels: int = 32, hidden: int = 64):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.fc1 = nn.Linear(in_channels, hidden)
        self.fc2 = nn.Linear(hidden, hidden)
        self.fc3 = nn.Linear(hidden, out_channels + 1)

    def forward(self, feat: torch.Tensor, row_stable: bool = False) -> tuple[torch.Tensor, torch.Tensor]:
        if row_stable:
            h = F.softplus(rowwise_linear(feat, self.fc1.weight, self.fc1.bias))
            h = F.softplus(rowwise_linear(h, self.fc2.weight, self.fc2.bias))
            raw = rowwise_linear(h, self.fc3.weight, self.fc3.bias)
        else:
            h = F.softplus(self.fc1(feat))
            h = F.softplus(self.fc2(h))
            raw = self.fc3(h)
        color = raw[..., : self.out_channels]
        sigma = F.softplus(raw[..., self.out_channels])
        return color, sigma


def decode_point(decoder: PointDecoder, feat) -> tuple[torch.Tensor, torch.Tensor]:
    """Decode aggregated feature(s) into (color feature, sigma >= 0)."""
    t = torch.as_tensor(feat)
    if t.shape[-1] != decoder.in_channels:
        raise ValueError(f"expected {decoder.in_channels} channels, got {t.shape[-1]}")
    if not torch.isfinite(t).all():
        raise ValueError("decoder input must be finite")
    return decoder(t)
