"""Latent-driven tri-plane synthesis and feature-image upsampling.

A style-modulated convolutional backbone grows a learned 4x4 constant to a
[3*C_t, R, R] map that is channel-split into the three planes. A second
stack of modulated convolutions upsamples the rendered feature image to the
final portrait resolution. Layer count and widths are derived from the
config; the desk-scale default is ~0.5M parameters, far from the full-scale
backbone but shape-compatible with it.

Latents come in two flavours: a single vector shared by every modulated
layer (W) or one vector per layer (W+). Internally everything runs on the
per-layer form; expand_latent broadcasts a W code.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def expand_latent(w: torch.Tensor, num_ws: int) -> torch.Tensor:
    """Normalize a latent to per-layer form [B, num_ws, d_w].

    [d_w] and [B, d_w] broadcast to every layer; [num_ws, d_w] and
    [B, num_ws, d_w] are validated and passed through.
    """
    if w.ndim == 1:
        w = w.unsqueeze(0)
    if w.ndim == 2:
        return w.unsqueeze(1).expand(-1, num_ws, -1)
    if w.ndim == 3:
        if w.shape[1] != num_ws:
            raise ValueError(f"latent has {w.shape[1]} layer vectors, model wants {num_ws}")
        return w
    raise ValueError("latent must be [d_w], [B, d_w], [L, d_w] or [B, L, d_w]")


class ModulatedConv2d(nn.Module):
    """StyleGAN2-style conv: per-sample input-channel scaling + demodulation."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, w_dim: int, demodulate: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel) / math.sqrt(in_ch * kernel * kernel))
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self.affine = nn.Linear(w_dim, in_ch)
        with torch.no_grad():
            self.affine.weight.mul_(1.0 / math.sqrt(w_dim))
            self.affine.bias.fill_(1.0)
        self.demodulate = demodulate
        self.padding = kernel // 2

    def forward(self, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        b, in_ch, h_in, w_in = x.shape
        style = self.affine(w)  # [B, in_ch]
        weight = self.weight.unsqueeze(0) * style.view(b, 1, in_ch, 1, 1)
        if self.demodulate:
            d = torch.rsqrt(weight.pow(2).sum(dim=(2, 3, 4)) + 1e-8)
            weight = weight * d.view(b, -1, 1, 1, 1)
        out_ch = weight.shape[1]
        x = x.reshape(1, b * in_ch, h_in, w_in)
        weight = weight.reshape(b * out_ch, in_ch, *self.weight.shape[2:])
        out = F.conv2d(x, weight, padding=self.padding, groups=b)
        return out.reshape(b, out_ch, h_in, w_in) + self.bias.view(1, -1, 1, 1)


def _channels(res: int, channel_base: int = 2048, channel_max: int = 128) -> int:
    return max(16, min(channel_max, channel_base // res))


class TriplaneBackbone(nn.Module):
    """Learned 4x4 constant -> modulated conv pyramid -> [3, C_t, R, R]."""

    def __init__(self, plane_resolution: int, plane_channels: int, w_dim: int):
        super().__init__()
        if plane_resolution < 4 or plane_resolution & (plane_resolution - 1):
            raise ValueError("plane_resolution must be a power of two >= 4")
        self.plane_resolution = plane_resolution
        self.plane_channels = plane_channels
        self.const = nn.Parameter(torch.randn(_channels(4), 4, 4))
        convs = []
        res = 4
        ch = _channels(4)
        convs.append(ModulatedConv2d(ch, ch, 3, w_dim))
        while res < plane_resolution:
            res *= 2
            nxt = _channels(res)
            convs.append(ModulatedConv2d(ch, nxt, 3, w_dim))
            ch = nxt
        self.convs = nn.ModuleList(convs)
        self.to_planes = ModulatedConv2d(ch, 3 * plane_channels, 1, w_dim, demodulate=False)

    @property
    def num_ws(self) -> int:
        return len(self.convs) + 1

    def forward(self, ws: torch.Tensor) -> torch.Tensor:
        b = ws.shape[0]
        x = self.const.unsqueeze(0).expand(b, -1, -1, -1)
        for i, conv in enumerate(self.convs):
            if i > 0:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = F.leaky_relu(conv(x, ws[:, i]), 0.2)
        x = self.to_planes(x, ws[:, len(self.convs)])
        r = self.plane_resolution
        return x.reshape(b, 3, self.plane_channels, r, r)


class SuperResolver(nn.Module):
    """Feature image [B, C, h, h] -> RGB [B, 3, h*k, h*k] in [0, 1]."""

    def __init__(self, in_channels: int, factor: int, w_dim: int, hidden: int = 32):
        super().__init__()
        if factor < 1 or factor & (factor - 1):
            raise ValueError("upsampling factor must be a power of two")
        self.factor = factor
        self.conv_in = ModulatedConv2d(in_channels, hidden, 3, w_dim)
        self.ups = nn.ModuleList(
            ModulatedConv2d(hidden, hidden, 3, w_dim) for _ in range(int(math.log2(factor)))
        )
        self.to_rgb = ModulatedConv2d(hidden, 3, 1, w_dim, demodulate=False)

    @property
    def num_ws(self) -> int:
        return len(self.ups) + 2

    def forward(self, feat: torch.Tensor, ws: torch.Tensor) -> torch.Tensor:
        x = F.leaky_relu(self.conv_in(feat, ws[:, 0]), 0.2)
        for i, conv in enumerate(self.ups):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = F.leaky_relu(conv(x, ws[:, i + 1]), 0.2)
        return torch.sigmoid(self.to_rgb(x, ws[:, len(self.ups) + 1]))


class Generator(nn.Module):
    """Backbone + super-resolution head sharing one per-layer latent stack."""

    def __init__(self, plane_resolution: int, plane_channels: int, feature_channels: int,
                 sr_factor: int, w_dim: int):
        super().__init__()
        self.w_dim = w_dim
        self.backbone = TriplaneBackbone(plane_resolution, plane_channels, w_dim)
        self.sr = SuperResolver(feature_channels, sr_factor, w_dim)

    @property
    def num_ws(self) -> int:
        return self.backbone.num_ws + self.sr.num_ws

    def synthesize_triplane(self, w: torch.Tensor) -> torch.Tensor:
        """Latent -> plane stack [B, 3, C_t, R, R]."""
        ws = expand_latent(w, self.num_ws)
        return self.backbone(ws[:, : self.backbone.num_ws])

    def upsample(self, feature_image: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        """Rendered feature image -> final RGB portrait."""
        if feature_image.ndim != 4:
            raise ValueError("feature image must be [B, C, h, h]")
        ws = expand_latent(w, self.num_ws)
        return self.sr(feature_image, ws[:, self.backbone.num_ws :])
