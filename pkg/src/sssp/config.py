"""Run configuration shared by the training stages, the CLI and the service.

A single flat dataclass mirrors the JSON config document accepted by
``sssp train --config``. Shape consistency between modules (tri-plane size,
feature channels, latent width, token grid) is validated once at load time
so that mismatches surface before any parameters are allocated.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

STAGES = ("vq", "contour", "sssp")
LATENT_MODES = ("W", "Wplus")


@dataclass
class TrainConfig:
    stage: str = "sssp"

    # resolutions and widths
    final_resolution: int = 64      # H, final portrait resolution (paper 512)
    render_resolution: int = 32     # h, volume-rendered feature image (paper 128)
    plane_resolution: int = 32      # R, tri-plane grid size (paper 256)
    plane_channels: int = 8         # C_t, channels per plane (paper 32)
    feature_channels: int = 8       # C, rendered feature channels (paper 32)
    latent_dim: int = 128           # d_w (512 at paper scale)
    latent_mode: str = "W"          # W or Wplus

    # volume rendering
    samples_per_ray: int = 32
    extent: float = 1.0
    fov_y: float = 0.6
    camera_radius: float = 2.7
    yaw_range: float = 0.5
    pitch_range: float = 0.2

    # VQ contour-to-sketch codec
    codebook_size: int = 512        # K
    code_dim: int = 64              # d_c
    token_downsample: int = 8       # H / g
    commitment_beta: float = 0.25
    contour_feature_norm: str = "l2"  # distance term of the teacher-student loss

    # losses
    lambda_recon: float = 1.0
    lambda_region: float = 1.0
    lambda_symmetry: float = 0.1
    region_scales: tuple[float, float, float, float] = (0.25, 0.25, 0.30, 0.30)
    perceptual_stages: int = 3
    loss_on_final: bool = False     # compare on the upsampled output instead of I_RGB

    # optimizer / schedule
    learning_rate: float = 2e-4
    batch_size: int = 8
    steps: int = 2000
    seed: int = 0

    # model options
    frozen_generator: bool = False
    encoder_arch: str = "small"     # small | resnet34
    pose_conditioning: bool = False

    # data
    num_train: int = 256
    num_val: int = 32

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.latent_mode not in LATENT_MODES:
            raise ValueError(f"latent_mode must be one of {LATENT_MODES}")
        if self.final_resolution < self.render_resolution:
            raise ValueError("final_resolution must be >= render_resolution")
        if self.final_resolution % self.render_resolution != 0:
            raise ValueError("final_resolution must be a multiple of render_resolution")
        k = self.final_resolution // self.render_resolution
        if k & (k - 1) != 0:
            raise ValueError("upsampling factor must be a power of two")
        if self.feature_channels < 3:
            raise ValueError("feature_channels must be >= 3 (RGB slice)")
        if self.plane_resolution < 4 or self.plane_resolution & (self.plane_resolution - 1) != 0:
            raise ValueError("plane_resolution must be a power of two >= 4")
        if self.final_resolution % self.token_downsample != 0:
            raise ValueError("final_resolution must be divisible by token_downsample")
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2")
        if self.samples_per_ray < 1:
            raise ValueError("samples_per_ray must be >= 1")
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        if not 0 < self.fov_y < 3.141592653589793:
            raise ValueError("fov_y must lie in (0, pi)")
        if self.camera_radius <= 0:
            raise ValueError("camera_radius must be positive")
        if len(self.region_scales) != 4:
            raise ValueError("region_scales must have exactly 4 entries")
        if any(not 0 < d <= 1 for d in self.region_scales):
            raise ValueError("region scales must lie in (0, 1]")
        if self.contour_feature_norm not in ("l1", "l2"):
            raise ValueError("contour_feature_norm must be 'l1' or 'l2'")
        if self.encoder_arch not in ("small", "resnet34"):
            raise ValueError("encoder_arch must be 'small' or 'resnet34'")

    @property
    def sr_factor(self) -> int:
        return self.final_resolution // self.render_resolution

    @property
    def token_grid(self) -> int:
        return self.final_resolution // self.token_downsample

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["region_scales"] = list(d["region_scales"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "region_scales" in d:
            d["region_scales"] = tuple(d["region_scales"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def replace(self, **kwargs) -> "TrainConfig":
        return dataclasses.replace(self, **kwargs)


def paper_scale_config(**overrides) -> TrainConfig:
    """Full-scale shape settings (512/128 images, 256x256x32 planes).

    Used for shape-contract checks only; training at this scale is out of
    reach on a desk machine.
    """
    base = dict(
        final_resolution=512,
        render_resolution=128,
        plane_resolution=256,
        plane_channels=32,
        feature_channels=32,
        latent_dim=512,
        samples_per_ray=48,
    )
    base.update(overrides)
    return TrainConfig(**base)
