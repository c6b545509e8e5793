"""Image loading, saving and validation.

Images cross the public API as float numpy arrays of shape (H, W, 3) with
values in [0, 1]. Conversions to/from torch tensors live here so every
module agrees on the layout.
"""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image

from .errors import InvalidInputError


def load_image(path, size: int | None = None) -> np.ndarray:
    """Read an image file as a float (H, W, 3) array in [0, 1].

    If ``size`` is given the image is resized to size x size (bicubic),
    matching the usual per-image training regime.
    """
    img = Image.open(path).convert("RGB")
    if size is not None:
        img = img.resize((int(size), int(size)), Image.BICUBIC)
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr


def save_image(arr: np.ndarray, path) -> None:
    """Write a (H, W, 3) float array in [0, 1] as an 8-bit RGB file."""
    arr = np.asarray(arr)
    validate_image(arr)
    out = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(out, mode="RGB").save(path)


def save_mask(mask_values: np.ndarray, path) -> None:
    """Write a binary (H, W) mask as an 8-bit grayscale file (0 or 255)."""
    m = np.asarray(mask_values)
    if m.ndim != 2:
        raise InvalidInputError(f"mask must be 2-D, got shape {m.shape}")
    out = (m > 0).astype(np.uint8) * 255
    Image.fromarray(out, mode="L").save(path)


def validate_image(arr: np.ndarray, min_side: int | None = None) -> np.ndarray:
    """Check the (H, W, 3) / [0, 1] contract; returns the array unchanged."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidInputError("image contains non-finite pixels")
    if arr.min() < -1e-6 or arr.max() > 1 + 1e-6:
        raise InvalidInputError(
            f"image values must lie in [0, 1], got range [{arr.min():.4g}, {arr.max():.4g}]"
        )
    if min_side is not None and min(arr.shape[0], arr.shape[1]) < min_side:
        raise InvalidInputError(
            f"image sides must be >= {min_side} px, got {arr.shape[0]}x{arr.shape[1]}"
        )
    return arr


def to_tensor(arr: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(H, W, 3) array in [0, 1] -> (1, 3, H, W) tensor."""
    arr = np.asarray(arr, dtype=np.float64)
    t = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
    return t.to(dtype)


def to_array(t: torch.Tensor) -> np.ndarray:
    """(1, 3, H, W) tensor -> (H, W, 3) float64 array."""
    if t.dim() == 4:
        t = t[0]
    return t.detach().permute(1, 2, 0).cpu().numpy().astype(np.float64)
