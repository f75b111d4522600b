"""Contour-to-sketch translation through a vector-quantized patch codebook.

Stage one learns a discrete representation of detailed sketches: a conv
tokenizer maps a sketch to a g x g latent grid, each cell snaps to its
nearest codebook entry (Euclidean; ties to the lowest index), and a conv
decoder reconstructs the sketch from the de-quantized grid. Stage two
trains a contour encoder teacher-student style to land in the same
codebook cells, supervised by a per-cell classification loss over entries
plus a distance penalty to the teacher's de-quantized features. Chaining
contour encoder -> quantize -> dequantize -> decoder turns a sparse
contour into a detailed sketch whose patches all come from the learned
sketch vocabulary.

Quantization uses the straight-through trick: the forward value is the
codebook entry, the backward pass treats it as identity on the encoder
output.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


class Codebook(nn.Module):
    """Learnable entry table [K, d_c]."""

    def __init__(self, num_entries: int = 512, dim: int = 64):
        super().__init__()
        if num_entries < 2:
            raise ValueError("codebook needs at least 2 entries")
        self.embed = nn.Parameter(torch.empty(num_entries, dim).uniform_(-1.0 / num_entries, 1.0 / num_entries))

    @property
    def num_entries(self) -> int:
        return self.embed.shape[0]

    @property
    def dim(self) -> int:
        return self.embed.shape[1]


def squared_distances(z: torch.Tensor, codebook: Codebook) -> torch.Tensor:
    """[..., d_c] -> [..., K]; plain (z - e)^2 sums, no dot-product expansion."""
    if z.shape[-1] != codebook.dim:
        raise ValueError(f"feature dim {z.shape[-1]} != codebook dim {codebook.dim}")
    diff = z.unsqueeze(-2) - codebook.embed  # [..., K, d_c]
    return diff.pow(2).sum(-1)


def quantize(codebook: Codebook, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Snap cells to nearest entries.

    Returns (tokens [...], quantized [..., d_c]); the quantized features
    carry straight-through gradients back to z.
    """
    d2 = squared_distances(z, codebook)
    tokens = d2.argmin(dim=-1)  # first minimum wins: lowest index on ties
    entries = codebook.embed[tokens]
    quantized = z + (entries - z).detach()
    return tokens, quantized


def dequantize(codebook: Codebook, tokens: torch.Tensor) -> torch.Tensor:
    """Token grid -> entry features; pure table lookup."""
    if tokens.numel() and (tokens.min() < 0 or tokens.max() >= codebook.num_entries):
        raise IndexError("token index out of range")
    return codebook.embed[tokens]


def _down_blocks(factor: int, out_dim: int) -> list[nn.Module]:
    steps = int(math.log2(factor))
    if 2**steps != factor:
        raise ValueError("downsample factor must be a power of two")
    layers: list[nn.Module] = [nn.Conv2d(1, 32, 3, padding=1), nn.ReLU()]
    ch = 32
    for _ in range(steps):
        nxt = min(128, ch * 2)
        layers += [nn.Conv2d(ch, nxt, 4, stride=2, padding=1), nn.ReLU()]
        ch = nxt
    layers += [nn.Conv2d(ch, out_dim, 1)]
    return layers


class GridEncoder(nn.Module):
    """Conv downsampler: [B, 1, H, H] -> [B, d_c, H/f, H/f].

    Used both as the sketch tokenizer and (a separate instance) as the
    contour encoder; the two never share weights.
    """

    def __init__(self, code_dim: int = 64, factor: int = 8):
        super().__init__()
        self.factor = factor
        self.net = nn.Sequential(*_down_blocks(factor, code_dim))

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        if img.ndim != 4 or img.shape[1] != 1:
            raise ValueError("input must be [B, 1, H, H]")
        if img.shape[2] % self.factor or img.shape[3] % self.factor:
            raise ValueError(f"image size must be divisible by {self.factor}")
        return self.net(img)


class SketchDecoder(nn.Module):
    """Conv upsampler: [B, d_c, g, g] -> [B, 1, g*f, g*f] in [0, 1]."""

    def __init__(self, code_dim: int = 64, factor: int = 8):
        super().__init__()
        steps = int(math.log2(factor))
        if 2**steps != factor:
            raise ValueError("upsample factor must be a power of two")
        self.code_dim = code_dim
        ch = min(128, 32 * 2 ** max(steps - 1, 0))
        layers: list[nn.Module] = [nn.Conv2d(code_dim, ch, 3, padding=1), nn.ReLU()]
        for _ in range(steps):
            nxt = max(32, ch // 2)
            layers += [nn.Upsample(scale_factor=2, mode="nearest"),
                       nn.Conv2d(ch, nxt, 3, padding=1), nn.ReLU()]
            ch = nxt
        layers += [nn.Conv2d(ch, 1, 3, padding=1)]
        self.net = nn.Sequential(*layers)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        if feats.ndim != 4 or feats.shape[1] != self.code_dim:
            raise ValueError(f"expected [B, {self.code_dim}, g, g]")
        return torch.sigmoid(self.net(feats))


def tokenize(tokenizer: GridEncoder, sketch: torch.Tensor) -> torch.Tensor:
    """Sketch -> latent grid [B, g, g, d_c] (channels last for quantizing)."""
    return tokenizer(sketch).permute(0, 2, 3, 1)


def decode_sketch(decoder: SketchDecoder, feats: torch.Tensor) -> torch.Tensor:
    """Latent grid [B, g, g, d_c] -> sketch image [B, 1, H, H]."""
    return decoder(feats.permute(0, 3, 1, 2))


def encode_contour(contour_encoder: GridEncoder, contour: torch.Tensor) -> torch.Tensor:
    return tokenize(contour_encoder, contour)


def contour_to_sketch(
    contour_encoder: GridEncoder,
    codebook: Codebook,
    decoder: SketchDecoder,
    contour: torch.Tensor,
) -> torch.Tensor:
    """Full inference path: contour image -> detailed sketch image."""
    z = encode_contour(contour_encoder, contour)
    tokens, _ = quantize(codebook, z)
    return decode_sketch(decoder, dequantize(codebook, tokens))


def vq_training_losses(
    sketch: torch.Tensor,
    tokenizer: GridEncoder,
    codebook: Codebook,
    decoder: SketchDecoder,
    beta: float = 0.25,
) -> dict[str, torch.Tensor]:
    """Reconstruction + codebook + commitment terms (means over elements)."""
    z = tokenize(tokenizer, sketch)
    tokens, quantized = quantize(codebook, z)
    entries = dequantize(codebook, tokens)
    recon = decode_sketch(decoder, quantized)
    loss_recon = (recon - sketch).abs().mean()
    loss_codebook = (z.detach() - entries).pow(2).mean()
    loss_commit = beta * (z - entries.detach()).pow(2).mean()
    total = loss_recon + loss_codebook + loss_commit
    return {"recon": loss_recon, "codebook": loss_codebook, "commitment": loss_commit,
            "total": total, "tokens": tokens}


def contour_training_losses(
    contour: torch.Tensor,
    sketch: torch.Tensor,
    contour_encoder: GridEncoder,
    tokenizer: GridEncoder,
    codebook: Codebook,
    feature_norm: str = "l2",
) -> dict[str, torch.Tensor]:
    """Teacher-student supervision for the contour encoder.

    Per-cell cross-entropy with logits = -squared distance to each entry,
    against the frozen tokenizer's tokens, plus a distance penalty between
    the student grid and the teacher's de-quantized features.
    """
    with torch.no_grad():
        teacher_z = tokenize(tokenizer, sketch)
        teacher_tokens, _ = quantize(codebook, teacher_z)
        teacher_feats = dequantize(codebook, teacher_tokens)
    student = encode_contour(contour_encoder, contour)
    logits = -squared_distances(student, codebook)  # [B, g, g, K]
    loss_ce = F.cross_entropy(logits.flatten(0, 2), teacher_tokens.flatten())
    diff = student - teacher_feats
    if feature_norm == "l2":
        loss_feat = diff.pow(2).mean()
    elif feature_norm == "l1":
        loss_feat = diff.abs().mean()
    else:
        raise ValueError("feature_norm must be 'l1' or 'l2'")
    total = loss_ce + loss_feat
    return {"ce": loss_ce, "feature": loss_feat, "total": total,
            "teacher_tokens": teacher_tokens}


def token_accuracy(
    contour: torch.Tensor,
    sketch: torch.Tensor,
    contour_encoder: GridEncoder,
    tokenizer: GridEncoder,
    codebook: Codebook,
) -> float:
    """Share of cells where the student predicts the teacher's token."""
    with torch.no_grad():
        teacher_tokens, _ = quantize(codebook, tokenize(tokenizer, sketch))
        student_tokens, _ = quantize(codebook, encode_contour(contour_encoder, contour))
    return (teacher_tokens == student_tokens).double().mean().item()
