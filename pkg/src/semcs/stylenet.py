"""The per-image stylization network.

A lightweight encoder-decoder: three stride-2 downsampling stages, a
residual bottleneck, three upsampling stages, sigmoid output. One instance
is trained from scratch for every content image; nothing here is ever
reused across runs except the architecture itself.
"""

from __future__ import annotations

import hashlib

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidInputError, NumericError

ARCHITECTURE_ID = "sem-stylenet-v1"
_DOWN_FACTOR = 8


def _gn(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(4, channels), channels)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            _gn(channels),
            nn.SiLU(),
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            _gn(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class StyleNet(nn.Module):
    """Trainable image-to-image network, output squashed into [0, 1].

    Construct via :func:`init_stylenet` so parameters are seeded
    reproducibly. Inputs whose sides are not multiples of 8 are
    reflect-padded internally and cropped back on exit.
    """

    def __init__(self, seed: int, base_channels: int = 16):
        super().__init__()
        self.seed = int(seed)
        self.base_channels = base_channels
        self.architecture_id = ARCHITECTURE_ID
        c = base_channels
        self.entry = nn.Sequential(
            nn.Conv2d(3, c, 3, padding=1, padding_mode="reflect"), _gn(c), nn.SiLU()
        )
        self.down = nn.Sequential(
            nn.Conv2d(c, 2 * c, 3, stride=2, padding=1), _gn(2 * c), nn.SiLU(),
            nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1), _gn(4 * c), nn.SiLU(),
            nn.Conv2d(4 * c, 4 * c, 3, stride=2, padding=1), _gn(4 * c), nn.SiLU(),
        )
        self.bottleneck = nn.Sequential(
            ResidualBlock(4 * c), ResidualBlock(4 * c), ResidualBlock(4 * c)
        )
        self.up = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(4 * c, 4 * c, 3, padding=1, padding_mode="reflect"), _gn(4 * c), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(4 * c, 2 * c, 3, padding=1, padding_mode="reflect"), _gn(2 * c), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(2 * c, c, 3, padding=1, padding_mode="reflect"), _gn(c), nn.SiLU(),
        )
        self.exit = nn.Conv2d(c, 3, 3, padding=1, padding_mode="reflect")
        self._seed_parameters()

    def _seed_parameters(self) -> None:
        # Per-tensor generators: init depends only on (seed, tensor name).
        with torch.no_grad():
            for name, p in sorted(self.named_parameters(), key=lambda kv: kv[0]):
                key = f"{ARCHITECTURE_ID}:{self.seed}:{name}"
                digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
                g = torch.Generator().manual_seed(int.from_bytes(digest, "big") % (2**63 - 1))
                draw = torch.randn(p.shape, generator=g, dtype=torch.float64)
                if p.dim() >= 2:
                    p.copy_((draw / (p[0].numel() ** 0.5)).to(p.dtype))
                elif name.endswith("weight"):
                    p.copy_((1.0 + 0.05 * draw).to(p.dtype))
                else:
                    p.copy_((0.02 * draw).to(p.dtype))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != 3:
            raise InvalidInputError(f"expected (1, 3, H, W) input, got {tuple(x.shape)}")
        for p in self.parameters():
            if not torch.isfinite(p).all():
                raise NumericError("style network parameters contain non-finite values")
        h, w = x.shape[2], x.shape[3]
        pad_h = (-h) % _DOWN_FACTOR
        pad_w = (-w) % _DOWN_FACTOR
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
        y = self.entry(x)
        y = self.down(y)
        y = self.bottleneck(y)
        y = self.up(y)
        y = torch.sigmoid(self.exit(y))
        if pad_h or pad_w:
            y = y[:, :, :h, :w]
        return y


def init_stylenet(seed: int, base_channels: int = 16, dtype=torch.float32) -> StyleNet:
    """Fresh network with reproducible parameters for ``seed``."""
    net = StyleNet(seed, base_channels=base_channels)
    return net.to(dtype)


def parameter_count(net: StyleNet) -> int:
    return sum(p.numel() for p in net.parameters())


def save_checkpoint(net: StyleNet, path) -> None:
    """Self-describing checkpoint: architecture id, seed, and tensors."""
    torch.save(
        {
            "architecture_id": net.architecture_id,
            "seed": net.seed,
            "base_channels": net.base_channels,
            "state_dict": net.state_dict(),
        },
        path,
    )


def load_checkpoint(path) -> StyleNet:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("architecture_id") != ARCHITECTURE_ID:
        raise InvalidInputError(
            f"checkpoint architecture '{blob.get('architecture_id')}' != '{ARCHITECTURE_ID}'"
        )
    net = StyleNet(blob["seed"], base_channels=blob["base_channels"])
    net.load_state_dict(blob["state_dict"])
    return net
