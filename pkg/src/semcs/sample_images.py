"""Deterministic procedural test photos.

The regression suite pins values computed on these images, so they are
generated (never loaded) and fully reproducible: numpy's PCG64 streams are
stable across platforms and versions. Each photo is a smooth background
with a single textured elliptical object, i.e. the easiest honest case for
unsupervised salient-object masking.
"""

from __future__ import annotations

import numpy as np
import scipy.ndimage


def object_photo_with_mask(size: int = 256, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """A single-object photo plus its ground-truth object mask (bool (H, W))."""
    rng = np.random.default_rng(seed)
    h = w = int(size)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    # Smooth sky-like background: gradient plus one low-frequency wave.
    base = np.array([0.55, 0.65, 0.80]) + rng.uniform(-0.1, 0.1, size=3)
    img = np.empty((h, w, 3), dtype=np.float64)
    grad = 0.25 * (yy / h)[..., None]
    wave = 0.05 * np.sin(2 * np.pi * (xx / w + rng.uniform(0, 1)))[..., None]
    img[:] = base[None, None, :] - grad + wave

    # Textured ellipse, off-center, with a hue far from the background.
    cy = h * rng.uniform(0.35, 0.6)
    cx = w * rng.uniform(0.35, 0.65)
    ry = h * rng.uniform(0.16, 0.24)
    rx = w * rng.uniform(0.16, 0.26)
    ellipse = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0

    obj_base = np.array([0.70, 0.35, 0.15]) + rng.uniform(-0.08, 0.08, size=3)
    stripes = 0.18 * np.sin(2 * np.pi * (xx + yy) / rng.uniform(6, 10))
    speckle = 0.10 * scipy.ndimage.gaussian_filter(rng.standard_normal((h, w)), 1.0)
    texture = (stripes + speckle)[..., None]
    obj = np.clip(obj_base[None, None, :] + texture, 0.0, 1.0)

    img[ellipse] = obj[ellipse]
    np.clip(img, 0.0, 1.0, out=img)
    return img, ellipse


def object_photo(size: int = 256, seed: int = 0) -> np.ndarray:
    """A single-object photo (see :func:`object_photo_with_mask`)."""
    return object_photo_with_mask(size, seed)[0]


def photo_corpus(n: int = 10, size: int = 128, seed: int = 100) -> list[np.ndarray]:
    """n distinct object photos with seeds ``seed .. seed+n-1``."""
    return [object_photo(size, seed + i) for i in range(n)]


def constant_image(size: int = 128, value: float = 0.5) -> np.ndarray:
    return np.full((size, size, 3), float(value), dtype=np.float64)


def blurred(image: np.ndarray, sigma: float = 3.0) -> np.ndarray:
    """Gaussian-blurred copy; the standard degraded partner for metric tests."""
    out = np.stack(
        [scipy.ndimage.gaussian_filter(image[..., c], sigma) for c in range(3)],
        axis=-1,
    )
    return np.clip(out, 0.0, 1.0)
