"""The training objective: directional, content and smoothness terms.

Foreground and background each get a directional term: one minus the
cosine between the displacement of the (masked) output embedding from the
content embedding and the displacement of the style-text embedding from
the source-text embedding. Masked-out pixels are zeroed before encoding
(literal Hadamard product; filling them from the content image would be
the other defensible convention). A feature-space content term and a
total-variation term regularize the output.

All functions return torch scalars so gradients can flow to the style
network; wrap with ``float()`` for plain numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import torch

from .encoders import Encoders
from .errors import InvalidInputError, NumericError
from .image_io import to_tensor
from .spectral import SaliencyMask

DEFAULT_SOURCE_TEXT = "Photo"
_DIRECTION_EPS = 1e-8

ImageLike = Union[np.ndarray, torch.Tensor]


@dataclass(frozen=True)
class LossWeights:
    """Coefficients on the background, content, and smoothness terms.

    The foreground directional term always has coefficient 1; the default
    content weight keeps the directional-to-content gradient ratio of the
    baseline per-image regime (500:150) under that normalization.
    """

    lambda_bg: float = 1.0
    lambda_content: float = 0.3
    lambda_tv: float = 2e-3

    def __post_init__(self):
        for name in ("lambda_bg", "lambda_content", "lambda_tv"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term objective values plus the weighted total.

    Fields hold torch scalars on the differentiable path and plain floats
    after :meth:`floats`.
    """

    fglob: object
    bglob: object
    content: object
    tv: object
    total: object
    weights: LossWeights

    @classmethod
    def compose(cls, fglob, bglob, content, tv, weights: LossWeights) -> "LossBreakdown":
        total = (
            fglob
            + weights.lambda_bg * bglob
            + weights.lambda_content * content
            + weights.lambda_tv * tv
        )
        return cls(fglob=fglob, bglob=bglob, content=content, tv=tv,
                   total=total, weights=weights)

    def floats(self) -> "LossBreakdown":
        """Plain-float copy; the total is recomposed from the float terms."""
        return LossBreakdown.compose(
            _scalar(self.fglob), _scalar(self.bglob), _scalar(self.content),
            _scalar(self.tv), self.weights,
        )

    def record(self, step: int) -> dict:
        f = self.floats()
        return {"step": step, "fglob": f.fglob, "bglob": f.bglob,
                "content": f.content, "tv": f.tv, "total": f.total}


def _scalar(v) -> float:
    if isinstance(v, torch.Tensor):
        return float(v.detach())
    return float(v)


def _image_t(image: ImageLike, dtype) -> torch.Tensor:
    if isinstance(image, torch.Tensor):
        if image.dim() == 3:
            image = image.unsqueeze(0)
        return image
    return to_tensor(np.asarray(image), dtype)


def _mask_t(mask, like: torch.Tensor) -> torch.Tensor:
    values = mask.values if isinstance(mask, SaliencyMask) else np.asarray(mask)
    uniq = np.unique(values)
    if not np.isin(uniq, (0, 1)).all():
        raise InvalidInputError("mask must be strictly binary (entries in {0, 1})")
    cov = float(values.mean())
    if not (0.0 < cov < 1.0):
        raise InvalidInputError(f"mask coverage {cov} is degenerate; need 0 < coverage < 1")
    t = torch.from_numpy(values.astype(np.float64)).to(like.dtype)
    return t.unsqueeze(0).unsqueeze(0)


def _vec_t(v) -> torch.Tensor:
    if isinstance(v, torch.Tensor):
        return v
    return torch.from_numpy(np.asarray(v, dtype=np.float64))


def text_direction(t_style: str, t_src: str, enc: Encoders) -> torch.Tensor:
    """Embedding displacement of the style text away from the source text."""
    return enc.joint.embed_text_t(t_style) - enc.joint.embed_text_t(t_src)


def image_direction(i_part: ImageLike, i_c: ImageLike, enc: Encoders) -> torch.Tensor:
    """Embedding displacement of a (masked) image away from the content image."""
    part_t = _image_t(i_part, enc.joint.dtype)
    c_t = _image_t(i_c, enc.joint.dtype)
    if part_t.shape != c_t.shape:
        raise InvalidInputError(
            f"image shape mismatch: {tuple(part_t.shape)} vs {tuple(c_t.shape)}"
        )
    return enc.joint.embed_image_t(part_t) - enc.joint.embed_image_t(c_t)


def directional_loss(d_img, d_txt) -> torch.Tensor:
    """1 - cos(d_img, d_txt); defined as 1 when either direction vanishes."""
    d_img, d_txt = _vec_t(d_img), _vec_t(d_txt)
    if not (torch.isfinite(d_img).all() and torch.isfinite(d_txt).all()):
        raise NumericError("direction vectors contain non-finite entries")
    if d_img.shape != d_txt.shape:
        raise InvalidInputError(f"direction dims differ: {d_img.shape} vs {d_txt.shape}")
    d_txt = d_txt.to(d_img.dtype)
    ni = d_img.norm()
    nt = d_txt.norm()
    cos = (d_img * d_txt).sum() / (ni.clamp_min(_DIRECTION_EPS) * nt.clamp_min(_DIRECTION_EPS))
    loss = 1.0 - cos.clamp(-1.0, 1.0)
    degenerate = (ni < _DIRECTION_EPS) | (nt < _DIRECTION_EPS)
    return torch.where(degenerate, torch.ones_like(loss), loss)


def global_foreground_loss(i_o: ImageLike, i_c: ImageLike, mask, t_fg: str,
                           enc: Encoders, t_src: str = DEFAULT_SOURCE_TEXT) -> torch.Tensor:
    """Directional loss of the mask-selected output region toward ``t_fg``."""
    o_t = _image_t(i_o, enc.joint.dtype)
    m = _mask_t(mask, o_t)
    d_i = image_direction(m * o_t, i_c, enc)
    d_t = text_direction(t_fg, t_src, enc)
    return directional_loss(d_i, d_t)


def global_background_loss(i_o: ImageLike, i_c: ImageLike, mask, t_bg: str,
                           enc: Encoders, t_src: str = DEFAULT_SOURCE_TEXT) -> torch.Tensor:
    """Directional loss of the complement-mask region toward ``t_bg``."""
    o_t = _image_t(i_o, enc.joint.dtype)
    m = _mask_t(mask, o_t)
    d_i = image_direction((1.0 - m) * o_t, i_c, enc)
    d_t = text_direction(t_bg, t_src, enc)
    return directional_loss(d_i, d_t)


def content_loss(i_o: ImageLike, i_c: ImageLike, enc: Encoders,
                 reference_features=None) -> torch.Tensor:
    """Mean of per-layer MSEs between output and content features."""
    o_t = _image_t(i_o, enc.content.dtype)
    if reference_features is None:
        c_t = _image_t(i_c, enc.content.dtype)
        if o_t.shape != c_t.shape:
            raise InvalidInputError(
                f"image shape mismatch: {tuple(o_t.shape)} vs {tuple(c_t.shape)}"
            )
        with torch.no_grad():
            reference_features = enc.content.features_t(c_t)
    out_features = enc.content.features_t(o_t)
    per_layer = [
        ((f_o - f_c) ** 2).mean()
        for (_, f_o), (_, f_c) in zip(out_features, reference_features)
    ]
    return torch.stack(per_layer).mean()


def tv_loss(image: ImageLike) -> torch.Tensor:
    """Mean squared horizontal plus mean squared vertical neighbor difference."""
    if isinstance(image, torch.Tensor):
        t = image
        if t.dim() == 2:
            t = t.unsqueeze(0).unsqueeze(0)
        elif t.dim() == 3:
            t = t.unsqueeze(0)
    else:
        arr = np.asarray(image, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        t = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
    zero = t.sum() * 0.0
    horiz = ((t[..., :, 1:] - t[..., :, :-1]) ** 2).mean() if t.shape[-1] > 1 else zero
    vert = ((t[..., 1:, :] - t[..., :-1, :]) ** 2).mean() if t.shape[-2] > 1 else zero
    return horiz + vert


def total_loss(i_o: ImageLike, i_c: ImageLike, mask, t_fg: str, t_bg: str,
               weights: LossWeights, enc: Encoders,
               t_src: str = DEFAULT_SOURCE_TEXT) -> LossBreakdown:
    """Weighted objective; differentiable w.r.t. a tensor ``i_o``."""
    if not isinstance(weights, LossWeights):
        weights = LossWeights(*weights)
    fglob = global_foreground_loss(i_o, i_c, mask, t_fg, enc, t_src)
    bglob = global_background_loss(i_o, i_c, mask, t_bg, enc, t_src)
    cont = content_loss(i_o, i_c, enc)
    tv = tv_loss(i_o)
    return LossBreakdown.compose(fglob, bglob, cont, tv.to(fglob.dtype), weights)


class StyleObjective:
    """Cached per-run objective.

    Text directions, the content-image embedding, and the content features
    never change during a run, so they are computed once. ``__call__``
    evaluates the same composition as :func:`total_loss` on each candidate
    output. With ``mask=None`` (global fallback) the foreground term covers
    the whole image and the background term is dropped.
    """

    def __init__(self, i_c: np.ndarray, mask, t_fg: str, t_bg: str,
                 weights: LossWeights, enc: Encoders,
                 t_src: str = DEFAULT_SOURCE_TEXT):
        self.enc = enc
        self.weights = weights
        self.i_c_t = _image_t(i_c, enc.joint.dtype)
        self.mask_t = _mask_t(mask, self.i_c_t) if mask is not None else None
        with torch.no_grad():
            self.embed_c = enc.joint.embed_image_t(self.i_c_t)
            self.content_ref = [
                (name, f.detach()) for name, f in enc.content.features_t(self.i_c_t)
            ]
        self.d_t_fg = text_direction(t_fg, t_src, enc)
        self.d_t_bg = text_direction(t_bg, t_src, enc)

    def __call__(self, i_o_t: torch.Tensor) -> LossBreakdown:
        if self.mask_t is not None:
            d_fg = self.enc.joint.embed_image_t(self.mask_t * i_o_t) - self.embed_c
            d_bg = self.enc.joint.embed_image_t((1.0 - self.mask_t) * i_o_t) - self.embed_c
            fglob = directional_loss(d_fg, self.d_t_fg)
            bglob = directional_loss(d_bg, self.d_t_bg)
        else:
            d_fg = self.enc.joint.embed_image_t(i_o_t) - self.embed_c
            fglob = directional_loss(d_fg, self.d_t_fg)
            bglob = torch.zeros_like(fglob)
        cont = content_loss(i_o_t, None, self.enc, reference_features=self.content_ref)
        tv = tv_loss(i_o_t)
        return LossBreakdown.compose(fglob, bglob, cont, tv.to(fglob.dtype), self.weights)
