"""Sketch encoder: grayscale sketch -> latent code.

Desk-scale default is a 4-stage residual net (one strided block per stage,
GroupNorm, global average pooling); a full ResNet-34 stack sits behind the
``resnet34`` flag. The head is a single linear for W mode or one linear per
modulated layer for W+ mode.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def _norm(ch: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, ch), ch)


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.n1 = _norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.n2 = _norm(out_ch)
        self.skip = None
        if stride != 1 or in_ch != out_ch:
            self.skip = nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False)

    def forward(self, x):
        identity = x if self.skip is None else self.skip(x)
        out = F.relu(self.n1(self.conv1(x)))
        out = self.n2(self.conv2(out))
        return F.relu(out + identity)


_ARCHS = {
    # (channels per stage, blocks per stage)
    "small": ((32, 64, 128, 256), (1, 1, 1, 1)),
    "resnet34": ((64, 128, 256, 512), (3, 4, 6, 3)),
}


class SketchEncoder(nn.Module):
    def __init__(self, resolution: int, w_dim: int, num_ws: int, arch: str = "small"):
        super().__init__()
        if arch not in _ARCHS:
            raise ValueError(f"unknown encoder arch {arch!r}")
        channels, blocks = _ARCHS[arch]
        self.resolution = resolution
        self.w_dim = w_dim
        self.num_ws = num_ws
        self.stem = nn.Sequential(nn.Conv2d(1, channels[0], 3, padding=1, bias=False),
                                  _norm(channels[0]), nn.ReLU())
        stages = []
        in_ch = channels[0]
        for ch, n in zip(channels, blocks):
            for i in range(n):
                stages.append(ResidualBlock(in_ch, ch, stride=2 if i == 0 else 1))
                in_ch = ch
        self.stages = nn.Sequential(*stages)
        self.head_w = nn.Linear(in_ch, w_dim)
        self.heads_wplus = nn.ModuleList(nn.Linear(in_ch, w_dim) for _ in range(num_ws))

    def forward(self, sketch: torch.Tensor, mode: str = "W") -> torch.Tensor:
        """[B, 1, H, H] in [0, 1] -> [B, d_w] (W) or [B, L, d_w] (Wplus)."""
        if sketch.ndim != 4 or sketch.shape[1] != 1:
            raise ValueError("sketch must be [B, 1, H, H]")
        if sketch.shape[2] != self.resolution or sketch.shape[3] != self.resolution:
            raise ValueError(
                f"sketch must be {self.resolution}x{self.resolution}, got {tuple(sketch.shape[2:])}"
            )
        feat = self.stages(self.stem(sketch))
        feat = feat.mean(dim=(2, 3))
        if mode == "W":
            return self.head_w(feat)
        if mode == "Wplus":
            return torch.stack([head(feat) for head in self.heads_wplus], dim=1)
        raise ValueError(f"unknown latent mode {mode!r}")
