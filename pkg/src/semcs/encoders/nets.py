"""Network definitions for the bundled frozen encoders.

These are compact, self-contained architectures whose weights are
synthesized deterministically (see ``weights.py``) instead of downloaded.
Smooth activations (SiLU) and average pooling are used throughout so that
finite-difference gradient checks hold tightly; piecewise-linear kinks
would break them.

The dense feature extractor is a small vision transformer WITHOUT
positional embeddings: patch features are pure functions of patch content,
so two identical patches always produce identical feature rows. That makes
feature collapse on constant-color images exact and detectable.
"""

from __future__ import annotations

import hashlib
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

TEXT_VOCAB = 4096
TEXT_MAX_TOKENS = 32


def stable_token_ids(text: str) -> list[int]:
    """Deterministic, platform-independent token ids for a string.

    Lowercased words are hashed with blake2b into a fixed vocabulary.
    Strings without alphanumeric words fall back to byte-level tokens so
    every nonempty string tokenizes.
    """
    words = []
    current = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            words.append("".join(current))
            current = []
    if current:
        words.append("".join(current))
    if not words:
        words = [f"byte{b}" for b in text.encode("utf-8")]
    ids = []
    for w in words[:TEXT_MAX_TOKENS]:
        digest = hashlib.blake2b(w.encode("utf-8"), digest_size=4).digest()
        ids.append(int.from_bytes(digest, "big") % TEXT_VOCAB)
    return ids


class SelfAttention(nn.Module):
    """Multi-head self-attention that can expose its key vectors."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, return_keys: bool = False):
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, self.head_dim)
        q, k, v = qkv.unbind(dim=2)  # each (b, n, heads, head_dim)
        q = q.transpose(1, 2)
        k = k.transpose(1, 2)
        v = v.transpose(1, 2)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(self.head_dim), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        out = self.proj(out)
        if return_keys:
            keys = k.transpose(1, 2).reshape(b, n, d)
            return out, keys
        return out


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: int = 2):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * mlp_ratio),
            nn.SiLU(),
            nn.Linear(dim * mlp_ratio, dim),
        )

    def forward(self, x: torch.Tensor, return_keys: bool = False):
        if return_keys:
            attn_out, keys = self.attn(self.norm1(x), return_keys=True)
            x = x + attn_out
            x = x + self.mlp(self.norm2(x))
            return x, keys
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class PatchTransformer(nn.Module):
    """ViT-style dense feature network; emits last-block key vectors.

    No positional embeddings (see module docstring). ``forward`` returns a
    (B, N, dim) tensor of key vectors for the N patches.
    """

    def __init__(self, patch_size: int = 8, dim: int = 64, heads: int = 2, depth: int = 2):
        super().__init__()
        self.patch_size = patch_size
        self.dim = dim
        self.patch_embed = nn.Conv2d(3, dim, kernel_size=patch_size, stride=patch_size)
        self.blocks = nn.ModuleList(TransformerBlock(dim, heads) for _ in range(depth))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        tokens = self.patch_embed(x)  # (B, dim, gh, gw)
        b, d, gh, gw = tokens.shape
        tokens = tokens.flatten(2).transpose(1, 2)  # (B, N, dim)
        keys = None
        for i, block in enumerate(self.blocks):
            if i == len(self.blocks) - 1:
                tokens, keys = block(tokens, return_keys=True)
            else:
                tokens = block(tokens)
        return keys


def _conv_block(c_in: int, c_out: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, kernel_size=3, stride=stride, padding=1),
        nn.GroupNorm(4, c_out),
        nn.SiLU(),
    )


class ImageTower(nn.Module):
    """Conv image tower producing a pooled joint-space embedding."""

    def __init__(self, embed_dim: int = 128, input_size: int = 64):
        super().__init__()
        self.input_size = input_size
        self.stem = nn.Sequential(
            _conv_block(3, 32, stride=2),
            _conv_block(32, 64, stride=2),
            _conv_block(64, 128, stride=2),
            _conv_block(128, 128, stride=2),
        )
        self.proj = nn.Linear(128, embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.stem(x)
        pooled = feats.mean(dim=(2, 3))
        return self.proj(pooled)


class TextTower(nn.Module):
    """Hashed-token text tower sharing the joint embedding space."""

    def __init__(self, embed_dim: int = 128, token_dim: int = 64, heads: int = 2):
        super().__init__()
        self.token_embed = nn.Embedding(TEXT_VOCAB, token_dim)
        self.pos_embed = nn.Parameter(torch.zeros(TEXT_MAX_TOKENS, token_dim))
        self.block = TransformerBlock(token_dim, heads)
        self.proj = nn.Linear(token_dim, embed_dim)

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        # token_ids: (L,) int64
        emb = self.token_embed(token_ids) + self.pos_embed[: token_ids.shape[0]]
        emb = self.block(emb.unsqueeze(0))
        return self.proj(emb.mean(dim=1)).squeeze(0)


class DualEncoder(nn.Module):
    """Joint image/text encoder (frozen CLIP-style stand-in)."""

    def __init__(self, embed_dim: int = 128, image_size: int = 64):
        super().__init__()
        self.embed_dim = embed_dim
        self.image_tower = ImageTower(embed_dim, image_size)
        self.text_tower = TextTower(embed_dim)

    def encode_image(self, x: torch.Tensor) -> torch.Tensor:
        return self.image_tower(x)

    def encode_text(self, token_ids: torch.Tensor) -> torch.Tensor:
        return self.text_tower(token_ids)


class ConvFeaturePyramid(nn.Module):
    """Fully convolutional perceptual feature stack with named stages.

    Stage strides relative to the input: stage1 -> 1, stage2 -> 2,
    stage3 -> 4, stage4 -> 8. Average pooling keeps everything smooth.
    """

    STAGE_CHANNELS = {"stage1": 32, "stage2": 64, "stage3": 128, "stage4": 128}

    def __init__(self):
        super().__init__()
        self.stage1 = nn.Sequential(_conv_block(3, 32), _conv_block(32, 32))
        self.stage2 = _conv_block(32, 64)
        self.stage3 = _conv_block(64, 128)
        self.stage4 = _conv_block(128, 128)
        self.pool = nn.AvgPool2d(2)

    def forward(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        f1 = self.stage1(x)
        f2 = self.stage2(self.pool(f1))
        f3 = self.stage3(self.pool(f2))
        f4 = self.stage4(self.pool(f3))
        return {"stage1": f1, "stage2": f2, "stage3": f3, "stage4": f4}


class RatingNet(nn.Module):
    """Backbone + 10-bin rating head (aesthetic-score style)."""

    def __init__(self, bins: int = 10, input_size: int = 64):
        super().__init__()
        self.input_size = input_size
        self.bins = bins
        self.backbone = nn.Sequential(
            _conv_block(3, 32, stride=2),
            _conv_block(32, 64, stride=2),
            _conv_block(64, 128, stride=2),
        )
        self.head = nn.Linear(128, bins)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pooled = self.backbone(x).mean(dim=(2, 3))
        return torch.softmax(self.head(pooled), dim=-1)
