import pytest
import torch

from sssp.encoder import SketchEncoder
from sssp.generator import Generator, expand_latent


def small_gen(**kw):
    args = dict(plane_resolution=16, plane_channels=4, feature_channels=4, sr_factor=2, w_dim=32)
    args.update(kw)
    torch.manual_seed(0)
    return Generator(**args)


class TestGenerator:
    def test_triplane_shape_desk(self):
        g = small_gen()
        planes = g.synthesize_triplane(torch.randn(2, 32))
        assert planes.shape == (2, 3, 4, 16, 16)

    @pytest.mark.slow
    def test_triplane_shape_paper_scale(self):
        # 256x256x96 backbone map split into three 256x256x32 planes
        g = small_gen(plane_resolution=256, plane_channels=32, feature_channels=32,
                      sr_factor=4, w_dim=512)
        with torch.no_grad():
            planes = g.synthesize_triplane(torch.randn(1, 512))
        assert planes.shape == (1, 3, 32, 256, 256)
        merged = planes.reshape(1, 96, 256, 256)
        assert merged.shape[1] == 96

    def test_w_broadcast_equals_wplus(self):
        g = small_gen()
        w = torch.randn(2, 32)
        wplus = expand_latent(w, g.num_ws).clone()
        a = g.synthesize_triplane(w)
        b = g.synthesize_triplane(wplus)
        assert torch.equal(a, b)

    def test_deterministic(self):
        g = small_gen()
        w = torch.randn(1, 32)
        assert torch.equal(g.synthesize_triplane(w), g.synthesize_triplane(w))

    def test_latent_layer_count_mismatch_rejected(self):
        g = small_gen()
        bad = torch.randn(1, g.num_ws + 1, 32)
        with pytest.raises(ValueError):
            g.synthesize_triplane(bad)

    def test_upsample_shapes(self):
        g = small_gen()
        w = torch.randn(2, 32)
        out = g.upsample(torch.randn(2, 4, 8, 8), w)
        assert out.shape == (2, 3, 16, 16)
        assert (out >= 0).all() and (out <= 1).all()

    def test_upsample_paper_factor(self):
        g = small_gen(sr_factor=4)
        out = g.upsample(torch.randn(1, 4, 8, 8), torch.randn(1, 32))
        assert out.shape == (1, 3, 32, 32)

    def test_upsample_rejects_bad_shape(self):
        g = small_gen()
        with pytest.raises(ValueError):
            g.upsample(torch.randn(4, 8, 8), torch.randn(1, 32))

    def test_gradients_flow_to_w_and_params(self):
        g = small_gen().double()
        w = torch.randn(1, 32, dtype=torch.float64, requires_grad=True)
        planes = g.synthesize_triplane(w)
        loss = planes.square().mean()
        loss.backward()
        assert w.grad is not None and w.grad.abs().max() > 0
        assert g.backbone.const.grad is not None

    def test_w_gradient_matches_finite_differences(self):
        g = small_gen().double()
        w = torch.randn(1, 32, dtype=torch.float64, requires_grad=True)
        target = torch.randn(1, 3, 4, 16, 16, dtype=torch.float64)

        def loss_fn():
            return ((g.synthesize_triplane(w) - target) ** 2).mean()

        loss_fn().backward()
        eps = 1e-5
        for idx in [(0, 3), (0, 17), (0, 31)]:
            with torch.no_grad():
                orig = w[idx].item()
                w[idx] = orig + eps
                up = loss_fn().item()
                w[idx] = orig - eps
                dn = loss_fn().item()
                w[idx] = orig
            fd = (up - dn) / (2 * eps)
            analytic = w.grad[idx].item()
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-12)
            assert rel < 1e-3


class TestSketchEncoder:
    def test_w_mode_shape(self):
        enc = SketchEncoder(resolution=32, w_dim=512, num_ws=7)
        w = enc(torch.rand(2, 1, 32, 32))
        assert w.shape == (2, 512)

    def test_wplus_mode_shape(self):
        enc = SketchEncoder(resolution=32, w_dim=64, num_ws=7)
        w = enc(torch.rand(2, 1, 32, 32), mode="Wplus")
        assert w.shape == (2, 7, 64)

    def test_blank_sketch_finite(self):
        enc = SketchEncoder(resolution=32, w_dim=64, num_ws=7)
        w = enc(torch.ones(1, 1, 32, 32))
        assert torch.isfinite(w).all()

    def test_deterministic(self):
        enc = SketchEncoder(resolution=32, w_dim=64, num_ws=7)
        s = torch.rand(1, 1, 32, 32)
        assert torch.equal(enc(s), enc(s))

    def test_wrong_size_rejected(self):
        enc = SketchEncoder(resolution=32, w_dim=64, num_ws=7)
        with pytest.raises(ValueError):
            enc(torch.rand(1, 1, 16, 16))

    def test_resnet34_variant(self):
        enc = SketchEncoder(resolution=32, w_dim=64, num_ws=7, arch="resnet34")
        w = enc(torch.rand(1, 1, 32, 32))
        assert w.shape == (1, 64)

    def test_encoder_gradient_matches_finite_differences(self):
        torch.manual_seed(1)
        enc = SketchEncoder(resolution=16, w_dim=8, num_ws=3).double()
        s = torch.rand(1, 1, 16, 16, dtype=torch.float64)
        target = torch.randn(1, 8, dtype=torch.float64)
        param = enc.head_w.weight

        def loss_fn():
            return ((enc(s) - target) ** 2).mean()

        loss_fn().backward()
        eps = 1e-5
        grad = param.grad
        for idx in [(0, 0), (3, 100), (7, 255)]:
            with torch.no_grad():
                orig = param[idx].item()
                param[idx] = orig + eps
                up = loss_fn().item()
                param[idx] = orig - eps
                dn = loss_fn().item()
                param[idx] = orig
            fd = (up - dn) / (2 * eps)
            analytic = grad[idx].item()
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-12)
            assert rel < 1e-3
