import pytest
import torch

from sssp.camera import Camera, RegionSpec
from sssp.config import TrainConfig
from sssp.losses import (
    PerceptualExtractor,
    crop_regions,
    ground_truth_pair,
    recon_loss,
    region_loss,
    symmetry_loss,
    total_encoder_loss,
)
from sssp.pipeline import PortraitPipeline
from sssp.triplane import flip_planes

TINY = TrainConfig(
    final_resolution=16,
    render_resolution=8,
    plane_resolution=8,
    plane_channels=4,
    feature_channels=4,
    latent_dim=16,
    samples_per_ray=4,
    token_downsample=8,
)


def tiny_batch(b=2, seed=0):
    gen = torch.Generator().manual_seed(seed)
    regions = [
        [
            RegionSpec("left_eye", (0.375, 0.375), 0.25),
            RegionSpec("right_eye", (0.625, 0.375), 0.25),
            RegionSpec("nose", (0.5, 0.563), 0.3),
            RegionSpec("mouth", (0.5, 0.75), 0.3),
        ]
        for _ in range(b)
    ]
    return {
        "sketch": torch.rand(b, 1, 16, 16, generator=gen),
        "image": torch.rand(b, 3, 16, 16, generator=gen),
        "cameras": [Camera(yaw=0.1 * i) for i in range(b)],
        "regions": regions,
    }


class TestReconLoss:
    def test_identity_zero(self):
        a = torch.rand(3, 12, 12)
        px = PerceptualExtractor()
        assert recon_loss(a, a, px).item() == 0.0

    def test_constant_images_extractor_disabled(self):
        a = torch.zeros(3, 8, 8)
        b = torch.full((3, 8, 8), 0.5)
        assert recon_loss(a, b, None).item() == pytest.approx(0.5)

    def test_symmetric(self):
        a = torch.rand(3, 12, 12)
        b = torch.rand(3, 12, 12)
        px = PerceptualExtractor()
        assert recon_loss(a, b, px).item() == pytest.approx(recon_loss(b, a, px).item())

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            recon_loss(torch.zeros(3, 8, 8), torch.zeros(3, 9, 9))

    def test_extractor_deterministic(self):
        a = torch.rand(1, 3, 16, 16)
        p1 = PerceptualExtractor(seed=4)
        p2 = PerceptualExtractor(seed=4)
        f1 = p1(a)
        f2 = p2(a)
        assert len(f1) == 3
        for x, y in zip(f1, f2):
            assert torch.equal(x, y)

    def test_gradient_matches_fd(self):
        torch.manual_seed(0)
        px = PerceptualExtractor().double()
        a = torch.rand(1, 3, 12, 12, dtype=torch.float64, requires_grad=True)
        b = torch.rand(1, 3, 12, 12, dtype=torch.float64)
        recon_loss(a, b, px).backward()
        eps = 1e-6
        gen = torch.Generator().manual_seed(1)
        for _ in range(20):
            idx = tuple(torch.randint(0, s, (1,), generator=gen).item() for s in a.shape)
            with torch.no_grad():
                orig = a[idx].item()
                a[idx] = orig + eps
                up = recon_loss(a, b, px).item()
                a[idx] = orig - eps
                dn = recon_loss(a, b, px).item()
                a[idx] = orig
            fd = (up - dn) / (2 * eps)
            analytic = a.grad[idx].item()
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-12)
            assert rel < 1e-3


class TestRegionLoss:
    def test_identical_zero(self):
        imgs = [torch.rand(3, 8, 8) for _ in range(4)]
        assert region_loss(imgs, [i.clone() for i in imgs]).item() == 0.0

    def test_single_region_differs(self):
        renders = [torch.rand(3, 8, 8) for _ in range(4)]
        targets = [r.clone() for r in renders]
        targets[3] = torch.rand(3, 8, 8)
        got = region_loss(renders, targets)
        assert got.item() == pytest.approx(recon_loss(renders[3], targets[3]).item())

    def test_matches_sum_of_independent_calls(self):
        px = PerceptualExtractor()
        renders = [torch.rand(1, 3, 16, 16) for _ in range(4)]
        targets = [torch.rand(1, 3, 16, 16) for _ in range(4)]
        expect = sum(recon_loss(r, t, px).item() for r, t in zip(renders, targets))
        assert region_loss(renders, targets, px).item() == pytest.approx(expect, rel=1e-6)

    def test_wrong_count_rejected(self):
        with pytest.raises(ValueError):
            region_loss([torch.zeros(3, 4, 4)] * 3, [torch.zeros(3, 4, 4)] * 3)


class TestSymmetryLoss:
    def test_zero_for_flipped_pair(self):
        planes = torch.randn(3, 4, 8, 8)
        assert symmetry_loss(planes, flip_planes(planes)).item() == 0.0

    def test_zero_for_constant_equal(self):
        planes = torch.ones(3, 2, 4, 4)
        assert symmetry_loss(planes, planes).item() == 0.0

    def test_matches_elementwise_oracle(self):
        a = torch.randn(3, 2, 6, 6, dtype=torch.float64)
        b = torch.randn(3, 2, 6, 6, dtype=torch.float64)
        expect = (a - flip_planes(b)).abs().mean().item()
        assert symmetry_loss(a, b).item() == pytest.approx(expect)

    def test_gradient_matches_fd(self):
        a = torch.randn(3, 2, 4, 4, dtype=torch.float64, requires_grad=True)
        b = torch.randn(3, 2, 4, 4, dtype=torch.float64)
        symmetry_loss(a, b).backward()
        eps = 1e-6
        gen = torch.Generator().manual_seed(2)
        for _ in range(20):
            idx = tuple(torch.randint(0, s, (1,), generator=gen).item() for s in a.shape)
            with torch.no_grad():
                orig = a[idx].item()
                a[idx] = orig + eps
                up = symmetry_loss(a, b).item()
                a[idx] = orig - eps
                dn = symmetry_loss(a, b).item()
                a[idx] = orig
            fd = (up - dn) / (2 * eps)
            analytic = a.grad[idx].item()
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-12)
            assert rel < 1e-3


class TestGroundTruthPair:
    def test_low_is_area_downsample(self):
        img = torch.rand(1, 3, 16, 16)
        gt = ground_truth_pair(img, tiny_batch(1)["regions"], 8)
        manual = img.reshape(1, 3, 8, 2, 8, 2).mean(dim=(3, 5))
        assert torch.allclose(gt.low, manual)

    def test_full_scale_region_is_identity(self):
        img = torch.rand(1, 3, 16, 16)
        regions = [[RegionSpec(n, (0.5, 0.5), 1.0) for n in ("left_eye", "right_eye", "nose", "mouth")]]
        crops = crop_regions(img, regions, 16)
        for c in crops:
            assert torch.allclose(c, img, atol=1e-6)


class TestTotalEncoderLoss:
    def test_breakdown_weighting(self):
        torch.manual_seed(0)
        pipe = PortraitPipeline(TINY)
        px = PerceptualExtractor()
        batch = tiny_batch()
        terms = total_encoder_loss(pipe, batch, px, weights=(1.0, 1.0, 0.1))
        expect = terms["recon"] + terms["region"] + 0.1 * terms["symmetry"]
        assert terms["total"].item() == pytest.approx(expect.item(), rel=1e-6)

    def test_linear_in_weights(self):
        torch.manual_seed(0)
        pipe = PortraitPipeline(TINY)
        batch = tiny_batch()
        base = total_encoder_loss(pipe, batch, None, weights=(1.0, 1.0, 1.0))
        scaled = total_encoder_loss(pipe, batch, None, weights=(2.0, 0.5, 3.0))
        expect = 2.0 * base["recon"] + 0.5 * base["region"] + 3.0 * base["symmetry"]
        assert scaled["total"].item() == pytest.approx(expect.item(), rel=1e-5)

    def test_without_symmetry_matches_ablation(self):
        torch.manual_seed(0)
        pipe = PortraitPipeline(TINY)
        batch = tiny_batch()
        full = total_encoder_loss(pipe, batch, None, weights=(1.0, 1.0, 0.0))
        expect = full["recon"] + full["region"]
        assert full["total"].item() == pytest.approx(expect.item(), rel=1e-6)
        assert full["symmetry"].item() == 0.0

    def test_gradients_reach_encoder_and_generator(self):
        torch.manual_seed(0)
        pipe = PortraitPipeline(TINY)
        batch = tiny_batch()
        terms = total_encoder_loss(pipe, batch, None)
        terms["total"].backward()
        assert pipe.encoder.head_w.weight.grad is not None
        assert pipe.generator.backbone.const.grad is not None
        assert pipe.point_decoder.fc1.weight.grad is not None
