import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from sssp.vqsketch import (
    Codebook,
    GridEncoder,
    SketchDecoder,
    contour_to_sketch,
    contour_training_losses,
    decode_sketch,
    dequantize,
    encode_contour,
    quantize,
    token_accuracy,
    tokenize,
    vq_training_losses,
)


def oracle_nearest(codebook_np, cell):
    """Exhaustive scan, lowest index wins ties."""
    best, best_d = 0, float("inf")
    for k in range(codebook_np.shape[0]):
        d = float(((codebook_np[k] - cell) ** 2).sum())
        if d < best_d:
            best, best_d = k, d
    return best


def make_codebook(entries):
    cb = Codebook(len(entries), len(entries[0]))
    with torch.no_grad():
        cb.embed.copy_(torch.tensor(entries, dtype=cb.embed.dtype))
    return cb


class TestQuantize:
    def test_simple_nearest(self):
        cb = make_codebook([[0.0, 0.0], [1.0, 1.0]])
        tokens, q = quantize(cb, torch.tensor([[0.2, 0.1]]))
        assert tokens.tolist() == [0]
        assert torch.allclose(q, torch.tensor([[0.0, 0.0]]))

    def test_exact_entry_zero_error(self):
        cb = make_codebook([[0.3, -0.2], [0.9, 0.4], [0.0, 0.0]])
        tokens, q = quantize(cb, torch.tensor([[0.9, 0.4]]))
        assert tokens.tolist() == [1]
        assert torch.equal(q, torch.tensor([[0.9, 0.4]]))

    def test_tie_breaks_to_lowest_index(self):
        # cell equidistant from entries 1 and 3
        cb = make_codebook([[5.0, 5.0], [0.0, 0.0], [5.0, -5.0], [1.0, 1.0]])
        tokens, _ = quantize(cb, torch.tensor([[0.5, 0.5]]))
        assert tokens.tolist() == [1]

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            k = int(rng.integers(2, 40))
            d = int(rng.integers(1, 8))
            entries = rng.normal(size=(k, d))
            cells = rng.normal(size=(200, d))
            cb = make_codebook(entries.tolist())
            tokens, _ = quantize(cb, torch.tensor(cells, dtype=torch.float32))
            expect = [oracle_nearest(entries.astype(np.float32), c.astype(np.float32)) for c in cells]
            assert tokens.tolist() == expect

    def test_dimension_mismatch_rejected(self):
        cb = make_codebook([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(ValueError):
            quantize(cb, torch.zeros(1, 3))

    def test_straight_through_gradient(self):
        cb = make_codebook([[0.0, 0.0], [1.0, 1.0]])
        z = torch.tensor([[0.2, 0.1]], requires_grad=True)
        _, q = quantize(cb, z)
        loss = (q * torch.tensor([[2.0, -3.0]])).sum()
        loss.backward()
        # identity pass-through: dL/dz == dL/dq
        assert torch.allclose(z.grad, torch.tensor([[2.0, -3.0]]))


class TestDequantize:
    def test_roundtrip_idempotent(self):
        rng = np.random.default_rng(1)
        cb = make_codebook(rng.normal(size=(17, 5)).tolist())
        tokens = torch.tensor(rng.integers(0, 17, size=(4, 6)), dtype=torch.long)
        feats = dequantize(cb, tokens)
        tokens2, _ = quantize(cb, feats)
        assert torch.equal(tokens, tokens2)

    def test_single_token_everywhere(self):
        cb = make_codebook([[1.0, 2.0], [3.0, 4.0]])
        feats = dequantize(cb, torch.full((3, 3), 1, dtype=torch.long))
        assert torch.allclose(feats, torch.tensor([3.0, 4.0]).expand(3, 3, 2))

    def test_matches_indexing_oracle(self):
        rng = np.random.default_rng(2)
        entries = rng.normal(size=(9, 4))
        cb = make_codebook(entries.tolist())
        tokens = rng.integers(0, 9, size=(5, 5))
        feats = dequantize(cb, torch.tensor(tokens, dtype=torch.long)).detach().numpy()
        np.testing.assert_allclose(feats, entries[tokens].astype(np.float32), rtol=1e-6)

    def test_out_of_range_rejected(self):
        cb = make_codebook([[0.0], [1.0]])
        with pytest.raises(IndexError):
            dequantize(cb, torch.tensor([2]))


class TestCodecModules:
    def test_tokenize_shape_contract(self):
        tok = GridEncoder(code_dim=16, factor=8)
        z = tokenize(tok, torch.rand(2, 1, 64, 64))
        assert z.shape == (2, 8, 8, 16)

    def test_blank_sketch_finite(self):
        tok = GridEncoder(code_dim=16, factor=8)
        z = tokenize(tok, torch.ones(1, 1, 64, 64))
        assert torch.isfinite(z).all()

    def test_tokenize_deterministic(self):
        tok = GridEncoder(code_dim=8, factor=4)
        s = torch.rand(1, 1, 32, 32)
        assert torch.equal(tokenize(tok, s), tokenize(tok, s))

    def test_size_mismatch_rejected(self):
        tok = GridEncoder(code_dim=8, factor=8)
        with pytest.raises(ValueError):
            tokenize(tok, torch.rand(1, 1, 30, 30))

    def test_decode_range_and_shape(self):
        dec = SketchDecoder(code_dim=16, factor=8)
        out = decode_sketch(dec, torch.randn(2, 8, 8, 16) * 5)
        assert out.shape == (2, 1, 64, 64)
        assert (out >= 0).all() and (out <= 1).all()

    def test_decode_deterministic(self):
        dec = SketchDecoder(code_dim=8, factor=4)
        feats = torch.randn(1, 4, 4, 8)
        assert torch.equal(decode_sketch(dec, feats), decode_sketch(dec, feats))

    def test_contour_encoder_shape(self):
        enc = GridEncoder(code_dim=16, factor=8)
        z = encode_contour(enc, torch.ones(1, 1, 64, 64))
        assert z.shape == (1, 8, 8, 16)
        assert torch.isfinite(z).all()

    def test_contour_to_sketch_composition(self):
        torch.manual_seed(0)
        enc = GridEncoder(code_dim=8, factor=4)
        cb = Codebook(6, 8)
        dec = SketchDecoder(code_dim=8, factor=4)
        contour = torch.rand(1, 1, 32, 32)
        out = contour_to_sketch(enc, cb, dec, contour)
        tokens, _ = quantize(cb, encode_contour(enc, contour))
        expect = decode_sketch(dec, dequantize(cb, tokens))
        assert torch.equal(out, expect)
        assert torch.equal(out, contour_to_sketch(enc, cb, dec, contour))


class _StubEncoder(nn.Module):
    """Fixed latent grid regardless of input; shaped like GridEncoder output."""

    def __init__(self, grid):
        super().__init__()
        self.grid = grid  # [B, d_c, g, g]

    def forward(self, img):
        return self.grid


class _StubDecoder(nn.Module):
    def __init__(self, value, size):
        super().__init__()
        self.value = value
        self.size = size
        self.code_dim = None

    def forward(self, feats):
        b = feats.shape[0]
        return torch.full((b, 1, self.size, self.size), self.value)


class TestVqLosses:
    def test_hand_computed_toy(self):
        # one cell, two entries; z=(0.2, 0.1), nearest entry (0,0)
        z = torch.tensor([0.2, 0.1]).view(1, 2, 1, 1)
        tokenizer = _StubEncoder(z)
        cb = make_codebook([[0.0, 0.0], [1.0, 1.0]])
        decoder = _StubDecoder(0.6, 4)
        decoder.code_dim = 2
        sketch = torch.full((1, 1, 4, 4), 0.5)
        terms = vq_training_losses(sketch, tokenizer, cb, decoder, beta=0.25)
        assert terms["tokens"].flatten().tolist() == [0]
        assert terms["recon"].item() == pytest.approx(0.1, abs=1e-6)
        assert terms["codebook"].item() == pytest.approx((0.04 + 0.01) / 2, abs=1e-7)
        assert terms["commitment"].item() == pytest.approx(0.25 * 0.025, abs=1e-7)
        assert terms["total"].item() == pytest.approx(0.1 + 0.025 + 0.00625, abs=1e-6)

    def test_commitment_scales_linearly_in_beta(self):
        z = torch.tensor([0.2, 0.1]).view(1, 2, 1, 1)
        cb = make_codebook([[0.0, 0.0], [1.0, 1.0]])
        decoder = _StubDecoder(0.6, 4)
        decoder.code_dim = 2
        sketch = torch.full((1, 1, 4, 4), 0.5)
        t1 = vq_training_losses(sketch, _StubEncoder(z), cb, decoder, beta=0.25)
        t2 = vq_training_losses(sketch, _StubEncoder(z), cb, decoder, beta=0.5)
        assert t2["commitment"].item() == pytest.approx(2 * t1["commitment"].item(), rel=1e-6)

    def test_zero_at_perfect_codec(self):
        # z sits exactly on an entry and the decoder reproduces the sketch
        z = torch.tensor([1.0, 1.0]).view(1, 2, 1, 1)
        cb = make_codebook([[0.0, 0.0], [1.0, 1.0]])
        decoder = _StubDecoder(0.5, 4)
        decoder.code_dim = 2
        sketch = torch.full((1, 1, 4, 4), 0.5)
        terms = vq_training_losses(sketch, _StubEncoder(z), cb, decoder)
        assert terms["total"].item() == pytest.approx(0.0, abs=1e-12)

    def test_all_terms_nonnegative(self):
        torch.manual_seed(0)
        tok = GridEncoder(code_dim=8, factor=4)
        cb = Codebook(16, 8)
        dec = SketchDecoder(code_dim=8, factor=4)
        terms = vq_training_losses(torch.rand(2, 1, 32, 32), tok, cb, dec)
        for key in ("recon", "codebook", "commitment", "total"):
            assert terms[key].item() >= 0

    def test_codebook_commitment_gradients_match_fd(self):
        # the stop-gradients route each term to one variable: the codebook
        # term trains the entries, the commitment term trains the encoder
        # grid. Check each against finite differences of that term alone,
        # with the token assignment held fixed (autograd treats it as such).
        torch.manual_seed(3)
        cb = Codebook(5, 3).double()
        z = torch.randn(1, 4, 4, 3, dtype=torch.float64, requires_grad=True)
        tokens, _ = quantize(cb, z.detach())

        def loss_codebook():
            return (z.detach() - cb.embed[tokens]).pow(2).mean()

        def loss_commit():
            return 0.25 * (z - cb.embed[tokens].detach()).pow(2).mean()

        eps = 1e-5
        for loss_fn, tensor in ((loss_codebook, cb.embed), (loss_commit, z)):
            if tensor.grad is not None:
                tensor.grad = None
            loss_fn().backward()
            grad = tensor.grad
            probes = 0
            gen = torch.Generator().manual_seed(0)
            while probes < 20:
                idx = tuple(torch.randint(0, s, (1,), generator=gen).item() for s in tensor.shape)
                with torch.no_grad():
                    orig = tensor[idx].item()
                    tensor[idx] = orig + eps
                    up = loss_fn().item()
                    tensor[idx] = orig - eps
                    dn = loss_fn().item()
                    tensor[idx] = orig
                fd = (up - dn) / (2 * eps)
                analytic = grad[idx].item()
                if abs(fd) < 1e-9 and abs(analytic) < 1e-9:
                    probes += 1  # untouched codebook entry: both gradients vanish
                    continue
                rel = abs(fd - analytic) / max(abs(fd), abs(analytic))
                assert rel < 1e-3
                probes += 1


class TestContourLosses:
    def test_hand_computed_toy(self):
        # K=2, one cell; student = teacher encoder output (0.2, 0.1)
        z = torch.tensor([0.2, 0.1]).view(1, 2, 1, 1)
        cb = make_codebook([[0.0, 0.0], [1.0, 1.0]])
        contour = torch.zeros(1, 1, 4, 4)
        sketch = torch.zeros(1, 1, 4, 4)
        terms = contour_training_losses(contour, sketch, _StubEncoder(z), _StubEncoder(z), cb)
        # d0^2 = 0.05, d1^2 = 1.45 -> CE = log(1 + exp(-(1.45 - 0.05)))
        expect_ce = math.log(1.0 + math.exp(-1.4))
        assert terms["ce"].item() == pytest.approx(expect_ce, abs=1e-6)
        # teacher tokens -> entry 0; student grid vs (0,0): mean(0.04, 0.01)
        assert terms["feature"].item() == pytest.approx(0.025, abs=1e-7)

    def test_zero_feature_term_when_student_hits_entry(self):
        z_teacher = torch.tensor([0.2, 0.1]).view(1, 2, 1, 1)
        z_student = torch.tensor([0.0, 0.0]).view(1, 2, 1, 1)
        cb = make_codebook([[0.0, 0.0], [1.0, 1.0]])
        blank = torch.zeros(1, 1, 4, 4)
        terms = contour_training_losses(blank, blank, _StubEncoder(z_student), _StubEncoder(z_teacher), cb)
        assert terms["feature"].item() == pytest.approx(0.0, abs=1e-12)
        # CE at the induced logits is at its minimum over student positions equal to the entry
        assert terms["ce"].item() <= math.log(1.0 + math.exp(-0.0))

    def test_l1_flag(self):
        z = torch.tensor([0.2, 0.1]).view(1, 2, 1, 1)
        cb = make_codebook([[0.0, 0.0], [1.0, 1.0]])
        blank = torch.zeros(1, 1, 4, 4)
        terms = contour_training_losses(blank, blank, _StubEncoder(z), _StubEncoder(z), cb,
                                        feature_norm="l1")
        assert terms["feature"].item() == pytest.approx((0.2 + 0.1) / 2, abs=1e-7)

    def test_terms_nonnegative(self):
        torch.manual_seed(1)
        tok = GridEncoder(code_dim=8, factor=4)
        enc = GridEncoder(code_dim=8, factor=4)
        cb = Codebook(16, 8)
        terms = contour_training_losses(torch.rand(2, 1, 32, 32), torch.rand(2, 1, 32, 32), enc, tok, cb)
        assert terms["ce"].item() >= 0 and terms["feature"].item() >= 0


def test_token_accuracy_perfect_for_identical_encoders():
    torch.manual_seed(0)
    tok = GridEncoder(code_dim=8, factor=4)
    cb = Codebook(16, 8)
    img = torch.rand(2, 1, 32, 32)
    assert token_accuracy(img, img, tok, tok, cb) == 1.0
