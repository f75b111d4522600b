"""Sketch -> latent -> tri-plane -> portrait, bundled for training and serving."""

from __future__ import annotations

import torch
import torch.nn as nn

from .camera import Camera
from .config import TrainConfig
from .encoder import SketchEncoder
from .generator import Generator
from .renderer import RenderConfig, render_batch
from .triplane import PointDecoder


class PortraitPipeline(nn.Module):
    """Sketch encoder + generator + point decoder with render plumbing."""

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        self.cfg = cfg
        self.generator = Generator(
            plane_resolution=cfg.plane_resolution,
            plane_channels=cfg.plane_channels,
            feature_channels=cfg.feature_channels,
            sr_factor=cfg.sr_factor,
            w_dim=cfg.latent_dim,
        )
        self.encoder = SketchEncoder(
            resolution=cfg.final_resolution,
            w_dim=cfg.latent_dim,
            num_ws=self.generator.num_ws,
            arch=cfg.encoder_arch,
        )
        self.point_decoder = PointDecoder(cfg.plane_channels, cfg.feature_channels)

    def render_config(self, resolution: int | None = None) -> RenderConfig:
        return RenderConfig(
            resolution=resolution or self.cfg.render_resolution,
            samples_per_ray=self.cfg.samples_per_ray,
        )

    def encode(self, sketch: torch.Tensor) -> torch.Tensor:
        return self.encoder(sketch, mode=self.cfg.latent_mode)

    def synthesize(self, w: torch.Tensor) -> torch.Tensor:
        return self.generator.synthesize_triplane(w)

    def render_low(self, planes: torch.Tensor, cams: list[Camera]) -> torch.Tensor:
        """[B, 3, C_t, R, R] -> feature images [B, C, h, h]."""
        return render_batch(planes, self.point_decoder, cams, self.render_config(),
                            extent=self.cfg.extent)

    def portrait(self, sketch: torch.Tensor, cams: list[Camera]) -> torch.Tensor:
        """Full forward pass to the final RGB portrait [B, 3, H, H]."""
        w = self.encode(sketch)
        planes = self.synthesize(w)
        feats = self.render_low(planes, cams)
        return self.generator.upsample(feats, w)
