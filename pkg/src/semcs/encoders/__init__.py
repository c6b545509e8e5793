"""Adapters around the four frozen networks used by the transfer pipeline.

Every adapter is a pure function of its input once constructed: weights are
frozen, there is no dropout, and repeat calls on the same input return
identical results. Public methods take/return numpy arrays; the ``*_t``
tensor methods are the differentiable paths the optimization uses
(gradients flow through the image encoder into the style network, never
into the encoder weights).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from ..errors import ConfigurationError, InvalidInputError
from ..image_io import to_tensor, validate_image
from . import nets, weights
from .weights import BUNDLED_IDS, EXTERNAL_FILES, load_torchscript, weights_dir

MIN_IMAGE_SIDE = 64
_NORM_MEAN = 0.5
_NORM_STD = 0.5


@dataclass(frozen=True)
class Embedding:
    """Unit-norm vector in the joint image/text space."""

    values: np.ndarray
    modality: str  # "image" | "text"

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class DenseFeatureMap:
    """Per-patch feature rows from the dense extractor."""

    grid_h: int
    grid_w: int
    dim: int
    features: np.ndarray  # (grid_h * grid_w, dim)
    source_image_shape: tuple[int, int]
    normalized: bool = True


@dataclass(frozen=True)
class ContentFeatureSet:
    """Named feature tensors from the perceptual network's content layers."""

    layers: tuple[tuple[str, np.ndarray], ...]

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.layers)


def _normalize_pixels(t: torch.Tensor) -> torch.Tensor:
    return (t - _NORM_MEAN) / _NORM_STD


def _unit(v: torch.Tensor) -> torch.Tensor:
    return v / v.norm().clamp_min(1e-12)


def _snap(side: int, scale: float, patch: int) -> int:
    return max(patch, int(round(side * scale / patch)) * patch)


class DenseFeatureExtractor:
    """Adapter for the dense (per-patch) feature network.

    Long sides above ``cap`` are scaled down before patching so the
    affinity graph stays tractable; the grid is always the resized image
    dims integer-divided by the patch stride.
    """

    def __init__(self, encoder_id: str = "tiny-vit-p8", dtype=torch.float32,
                 weights_path=None, cap: int = 256):
        self.encoder_id = encoder_id
        self.dtype = dtype
        self.cap = cap
        if encoder_id == "tiny-vit-p8":
            net = nets.PatchTransformer(patch_size=8)
            weights.synthesize_weights(net, encoder_id)
            self._net = net.to(dtype)
            self.patch_size = 8
            self._external = None
        elif encoder_id in EXTERNAL_FILES:
            self._external = load_torchscript(encoder_id, weights_path)
            self._net = None
            self.patch_size = 8  # only snaps the resize; the grid comes from the module's output
        else:
            raise ConfigurationError(f"unknown dense extractor id '{encoder_id}'")

    def extract(self, image: np.ndarray) -> DenseFeatureMap:
        validate_image(image, min_side=MIN_IMAGE_SIDE)
        h, w = image.shape[:2]
        scale = min(1.0, self.cap / max(h, w))
        th, tw = _snap(h, scale, 8), _snap(w, scale, 8)
        t = to_tensor(image, self.dtype)
        if (th, tw) != (h, w):
            t = torch.nn.functional.interpolate(t, size=(th, tw), mode="bilinear",
                                                align_corners=False)
        with torch.no_grad():
            if self._external is not None:
                grid = self._external(t)  # (1, D, gh, gw)
                gh, gw = int(grid.shape[2]), int(grid.shape[3])
                rows = grid.flatten(2).transpose(1, 2)[0]
            else:
                rows = self._net(_normalize_pixels(t))[0]  # (N, dim)
                gh, gw = th // self.patch_size, tw // self.patch_size
        rows = rows / rows.norm(dim=1, keepdim=True).clamp_min(1e-12)
        feats = rows.cpu().numpy().astype(np.float64)
        if gh * gw < 4:
            raise InvalidInputError(
                f"feature grid {gh}x{gw} too small; segmentation needs >= 4 patches"
            )
        return DenseFeatureMap(grid_h=gh, grid_w=gw, dim=feats.shape[1],
                               features=feats, source_image_shape=(h, w))


class ImageTextEncoder:
    """Adapter for the joint image/text encoder pair.

    Exposes the final pooled, projected, unit-normalized embedding of each
    tower. ``embed_image_t`` keeps autograd alive for the loss path.
    """

    def __init__(self, encoder_id: str = "tiny-dual-64", dtype=torch.float32,
                 weights_path=None):
        self.encoder_id = encoder_id
        self.dtype = dtype
        if encoder_id == "tiny-dual-64":
            net = nets.DualEncoder()
            weights.synthesize_weights(net, encoder_id)
            self._net = net.to(dtype)
            self._external = None
            self.input_size = net.image_tower.input_size
            self.embed_dim = net.embed_dim
        elif encoder_id in EXTERNAL_FILES:
            self._external = load_torchscript(encoder_id, weights_path)
            self._net = None
            self.input_size = 224
            probe = self.embed_text_t("probe")
            self.embed_dim = int(probe.shape[0])
        else:
            raise ConfigurationError(f"unknown joint encoder id '{encoder_id}'")

    # -- differentiable tensor paths -------------------------------------

    def embed_image_t(self, t: torch.Tensor) -> torch.Tensor:
        """(1, 3, H, W) tensor in [0, 1] -> unit-norm (dim,) tensor, grad-capable."""
        if not torch.isfinite(t).all():
            raise InvalidInputError("image contains non-finite pixels")
        t = torch.nn.functional.interpolate(
            t, size=(self.input_size, self.input_size), mode="bilinear",
            align_corners=False)
        if self._external is not None:
            v = self._external.encode_image(t).reshape(-1)
        else:
            v = self._net.encode_image(_normalize_pixels(t)).squeeze(0)
        return _unit(v)

    def embed_text_t(self, text: str) -> torch.Tensor:
        text = text.strip()
        if not text:
            raise InvalidInputError("text must be a nonempty string")
        ids = torch.tensor(nets.stable_token_ids(text), dtype=torch.long)
        with torch.no_grad():
            if self._external is not None:
                v = self._external.encode_text(ids).reshape(-1)
            else:
                v = self._net.encode_text(ids)
        return _unit(v)

    # -- public numpy surface --------------------------------------------

    def encode_image(self, image: np.ndarray) -> Embedding:
        validate_image(image)
        with torch.no_grad():
            v = self.embed_image_t(to_tensor(image, self.dtype))
        return Embedding(values=v.cpu().numpy().astype(np.float64), modality="image")

    def encode_text(self, text: str) -> Embedding:
        v = self.embed_text_t(text)
        return Embedding(values=v.cpu().numpy().astype(np.float64), modality="text")


class ContentFeatureExtractor:
    """Adapter for the perceptual pyramid used by the content loss.

    The configured layer set is fixed at construction; ``features_t`` is the
    differentiable path.
    """

    DEFAULT_LAYERS = ("stage2", "stage3")

    def __init__(self, encoder_id: str = "tiny-pyramid", dtype=torch.float32,
                 layers: Sequence[str] | None = None, weights_path=None):
        self.encoder_id = encoder_id
        self.dtype = dtype
        self.layers = tuple(layers) if layers is not None else self.DEFAULT_LAYERS
        if encoder_id == "tiny-pyramid":
            net = nets.ConvFeaturePyramid()
            weights.synthesize_weights(net, encoder_id)
            self._net = net.to(dtype)
            self._external = None
            unknown = set(self.layers) - set(nets.ConvFeaturePyramid.STAGE_CHANNELS)
            if unknown:
                raise ConfigurationError(f"unknown content layers {sorted(unknown)}")
        elif encoder_id in EXTERNAL_FILES:
            self._external = load_torchscript(encoder_id, weights_path)
            self._net = None
        else:
            raise ConfigurationError(f"unknown content extractor id '{encoder_id}'")

    def features_t(self, t: torch.Tensor) -> list[tuple[str, torch.Tensor]]:
        if not torch.isfinite(t).all():
            raise InvalidInputError("image contains non-finite pixels")
        if self._external is not None:
            outs = self._external(t)
            return [(f"layer{i}", f) for i, f in enumerate(outs)]
        stages = self._net(_normalize_pixels(t))
        return [(name, stages[name]) for name in self.layers]

    def extract(self, image: np.ndarray) -> ContentFeatureSet:
        validate_image(image, min_side=8)
        with torch.no_grad():
            feats = self.features_t(to_tensor(image, self.dtype))
        return ContentFeatureSet(
            layers=tuple((name, f.cpu().numpy().astype(np.float64)) for name, f in feats)
        )


@dataclass
class Encoders:
    """The frozen encoder set one transfer run works with."""

    dense: DenseFeatureExtractor
    joint: ImageTextEncoder
    content: ContentFeatureExtractor

    def describe(self) -> dict:
        return {
            "dense_id": self.dense.encoder_id,
            "joint_id": self.joint.encoder_id,
            "content_id": self.content.encoder_id,
            "joint_embedding": "final pooled projection, unit-normalized",
            "content_layers": list(self.content.layers),
        }


def load_encoders(dense_id: str = "tiny-vit-p8", joint_id: str = "tiny-dual-64",
                  content_id: str = "tiny-pyramid", dtype=torch.float32,
                  weights_path=None) -> Encoders:
    return Encoders(
        dense=DenseFeatureExtractor(dense_id, dtype=dtype, weights_path=weights_path),
        joint=ImageTextEncoder(joint_id, dtype=dtype, weights_path=weights_path),
        content=ContentFeatureExtractor(content_id, dtype=dtype, weights_path=weights_path),
    )


__all__ = [
    "Embedding",
    "DenseFeatureMap",
    "ContentFeatureSet",
    "DenseFeatureExtractor",
    "ImageTextEncoder",
    "ContentFeatureExtractor",
    "Encoders",
    "load_encoders",
    "BUNDLED_IDS",
    "EXTERNAL_FILES",
    "weights_dir",
]
