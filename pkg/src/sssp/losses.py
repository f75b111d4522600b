"""Training objectives: pixel+perceptual reconstruction, region terms,
and the tri-plane symmetry constraint.

The perceptual extractor is a frozen 3-stage random conv pyramid seeded
deterministically: cheap, dependency-free multi-scale features that play
the role a pretrained VGG stack plays at full scale. Any callable
returning a list of feature maps can be plugged in instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .camera import Camera, RegionSpec, region_camera
from .renderer import render_batch
from .triplane import flip_planes


class PerceptualExtractor(nn.Module):
    """Fixed random conv pyramid; forward returns one feature map per stage."""

    def __init__(self, in_channels: int = 3, stages: int = 3, seed: int = 0):
        super().__init__()
        if stages < 1:
            raise ValueError("need at least one stage")
        gen = torch.Generator().manual_seed(seed)
        chans = [in_channels] + [8 * 2**i for i in range(stages)]
        for i in range(stages):
            w = torch.randn(chans[i + 1], chans[i], 3, 3, generator=gen)
            w = w / (chans[i] * 9) ** 0.5
            self.register_buffer(f"w{i}", w)
        self.stages = stages

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for i in range(self.stages):
            x = F.relu(F.conv2d(x, getattr(self, f"w{i}"), stride=2, padding=1))
            feats.append(x)
        return feats


def _batched(img: torch.Tensor) -> torch.Tensor:
    return img.unsqueeze(0) if img.ndim == 3 else img


def recon_loss(a: torch.Tensor, b: torch.Tensor, extractor: nn.Module | None = None) -> torch.Tensor:
    """Mean absolute pixel difference plus per-stage mean feature differences."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    loss = (a - b).abs().mean()
    if extractor is not None:
        fa = extractor(_batched(a))
        fb = extractor(_batched(b))
        for xa, xb in zip(fa, fb):
            loss = loss + (xa - xb).abs().mean()
    return loss


def region_loss(renders, targets, extractor: nn.Module | None = None) -> torch.Tensor:
    """Sum of recon_loss over the four region pairs (eyes, nose, mouth)."""
    if len(renders) != 4 or len(targets) != 4:
        raise ValueError("expected exactly 4 region pairs")
    total = None
    for r, t in zip(renders, targets):
        term = recon_loss(r, t, extractor)
        total = term if total is None else total + term
    return total


def symmetry_loss(planes_a: torch.Tensor, planes_b: torch.Tensor) -> torch.Tensor:
    """Mean absolute deviation from the flip identity between two tri-planes.

    Zero iff planes_a equals the x-flip of planes_b exactly (the mirrored
    sketch produced a mirrored scene).
    """
    if planes_a.shape != planes_b.shape:
        raise ValueError("tri-plane stacks must have matching shapes")
    return (planes_a - flip_planes(planes_b)).abs().mean()


@dataclass
class GroundTruthPair:
    """Full-resolution target plus its derived supervision views."""

    full: torch.Tensor            # [B, 3, H, H]
    low: torch.Tensor             # [B, 3, h, h], area-downsampled
    region_crops: list[torch.Tensor]  # 4 x [B, 3, h, h]


def crop_regions(images: torch.Tensor, regions: list[list[RegionSpec]], out_res: int) -> list[torch.Tensor]:
    """Sample each region box to out_res x out_res (bilinear, pixel centers)."""
    b = images.shape[0]
    crops = []
    for i in range(4):
        grids = []
        for bi in range(b):
            reg = regions[bi][i]
            cx, cy = reg.center
            lo_u, lo_v = cx - reg.scale / 2, cy - reg.scale / 2
            frac = (torch.arange(out_res, dtype=images.dtype) + 0.5) / out_res * reg.scale
            us = 2 * (lo_u + frac) - 1
            vs = 2 * (lo_v + frac) - 1
            grid = torch.stack(torch.meshgrid(vs, us, indexing="ij")[::-1], dim=-1)
            grids.append(grid)
        crops.append(F.grid_sample(images, torch.stack(grids), mode="bilinear",
                                   padding_mode="border", align_corners=False))
    return crops


def ground_truth_pair(image: torch.Tensor, regions: list[list[RegionSpec]], low_res: int) -> GroundTruthPair:
    if image.shape[-1] % low_res:
        raise ValueError("full resolution must be a multiple of the render resolution")
    factor = image.shape[-1] // low_res
    return GroundTruthPair(
        full=image,
        low=F.avg_pool2d(image, factor),
        region_crops=crop_regions(image, regions, low_res),
    )


def total_encoder_loss(
    pipeline,
    batch: dict,
    extractor: nn.Module | None = None,
    weights: tuple[float, float, float] | None = None,
) -> dict[str, torch.Tensor]:
    """Weighted sum of reconstruction, region and symmetry terms.

    batch needs: sketch [B,1,H,H], image [B,3,H,H], cameras (list[Camera]),
    regions (per-sample list of 4 RegionSpec). Returns the breakdown with
    'total' = l1*recon + l2*region + l3*symmetry.
    """
    cfg = pipeline.cfg
    if weights is None:
        weights = (cfg.lambda_recon, cfg.lambda_region, cfg.lambda_symmetry)
    l_recon, l_region, l_sym = weights
    sketch = batch["sketch"]
    image = batch["image"]
    cams: list[Camera] = batch["cameras"]
    regions: list[list[RegionSpec]] = batch["regions"]
    b = sketch.shape[0]

    gt = ground_truth_pair(image, regions, cfg.render_resolution)
    w = pipeline.encode(sketch)
    planes = pipeline.synthesize(w)
    feats = pipeline.render_low(planes, cams)
    i_rgb = feats[:, :3]

    if cfg.loss_on_final:
        recon = recon_loss(pipeline.generator.upsample(feats, w), gt.full, extractor)
    else:
        recon = recon_loss(i_rgb, gt.low, extractor)

    region = i_rgb.new_zeros(())
    if l_region != 0.0:
        region_cams = [region_camera(cams[bi], regions[bi][i]) for i in range(4) for bi in range(b)]
        planes_rep = planes.repeat(4, 1, 1, 1, 1)
        region_rgb = pipeline.render_low(planes_rep, region_cams)[:, :3]
        renders = [region_rgb[i * b : (i + 1) * b] for i in range(4)]
        region = region_loss(renders, gt.region_crops, extractor)

    sym = i_rgb.new_zeros(())
    if l_sym != 0.0:
        w_flipped = pipeline.encode(sketch.flip(-1))
        planes_flipped = pipeline.synthesize(w_flipped)
        sym = symmetry_loss(planes, planes_flipped)

    total = l_recon * recon + l_region * region + l_sym * sym
    return {"recon": recon, "region": region, "symmetry": sym, "total": total}
