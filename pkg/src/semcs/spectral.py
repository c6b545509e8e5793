"""Unsupervised salient-object masking via spectral graph partitioning.

Patch features become a cosine affinity graph; the sign pattern of the
second eigenvector (Fiedler vector) of the symmetric normalized Laplacian
bipartitions the patch grid, and a border-contact rule decides which side
is the salient foreground. Everything here is plain numpy/scipy on CPU.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.ndimage
import scipy.sparse.linalg

from .encoders import DenseFeatureExtractor, DenseFeatureMap
from .errors import DegenerateMaskError, InvalidInputError, NumericError

# Above this order, smallest-k eigenpairs come from Lanczos instead of
# dense LAPACK; dense remains the fallback when Lanczos fails to converge.
_DENSE_EIG_LIMIT = 2048

_DEGREE_EPS = 1e-12
_SYMMETRY_TOL = 1e-8
_UNIFORM_AFFINITY_TOL = 1e-4


@dataclass(frozen=True)
class EigenSystem:
    """Smallest-k eigenpairs of the normalized Laplacian, ascending."""

    eigenvalues: np.ndarray  # (k,)
    eigenvectors: np.ndarray  # (k, n), unit-norm rows

    @property
    def k(self) -> int:
        return int(self.eigenvalues.shape[0])


@dataclass(frozen=True)
class SaliencyMask:
    """Binary foreground map at full image resolution."""

    values: np.ndarray  # (H, W) uint8 in {0, 1}

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def coverage(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class MaskResult:
    mask: SaliencyMask
    fiedler_value: float
    coverage: float
    eigenvalues: np.ndarray


def build_affinity(features: DenseFeatureMap) -> np.ndarray:
    """Cosine affinity matrix of the feature rows, negatives clamped to 0.

    Parameters
    ----------
    features : DenseFeatureMap
        Patch feature rows; normalized or not, rows are L2-normalized here
        so the affinity is scale invariant.

    Returns
    -------
    ndarray (n, n), symmetric, entries in [0, 1].
    """
    rows = np.asarray(features.features, dtype=np.float64)
    n = rows.shape[0]
    if n < 4:
        raise InvalidInputError(f"affinity needs >= 4 feature rows, got {n}")
    if not np.isfinite(rows).all():
        raise InvalidInputError("feature rows contain non-finite entries")
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    rows = rows / np.maximum(norms, 1e-12)
    w = rows @ rows.T
    np.maximum(w, 0.0, out=w)
    w = (w + w.T) / 2.0  # exact symmetry despite BLAS rounding
    return w


def laplacian_eigendecomposition(w: np.ndarray, k: int) -> EigenSystem:
    """Smallest-k eigenpairs of L = I - D^{-1/2} W D^{-1/2}.

    Parameters
    ----------
    w : ndarray (n, n)
        Symmetric nonnegative affinity matrix.
    k : int
        Number of eigenpairs, 2 <= k <= n.

    Notes
    -----
    Zero-degree rows get degree 1e-12 instead of dividing by zero. The
    spectrum of the symmetric normalized Laplacian lies in [0, 2].
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InvalidInputError(f"affinity must be square, got shape {w.shape}")
    n = w.shape[0]
    if not (2 <= k <= n):
        raise InvalidInputError(f"k must satisfy 2 <= k <= {n}, got {k}")
    if not np.isfinite(w).all():
        raise InvalidInputError("affinity contains non-finite entries")
    if w.min() < -1e-8:
        raise InvalidInputError(f"affinity entries must be nonnegative, min {w.min():.3g}")
    asym = np.abs(w - w.T).max()
    if asym > _SYMMETRY_TOL:
        raise InvalidInputError(f"affinity asymmetric beyond tolerance: max |W-W^T| = {asym:.3g}")

    degrees = np.maximum(w.sum(axis=1), _DEGREE_EPS)
    inv_sqrt_d = 1.0 / np.sqrt(degrees)
    m = w * inv_sqrt_d[:, None] * inv_sqrt_d[None, :]
    m = (m + m.T) / 2.0

    if n <= _DENSE_EIG_LIMIT:
        vals, vecs = _dense_smallest(m, k)
    else:
        try:
            # Largest of M <-> smallest of L = I - M; Lanczos is fast there.
            mv, mvec = scipy.sparse.linalg.eigsh(m, k=k, which="LA")
            order = np.argsort(-mv)
            vals, vecs = 1.0 - mv[order], mvec[:, order]
        except (scipy.sparse.linalg.ArpackError, scipy.sparse.linalg.ArpackNoConvergence):
            vals, vecs = _dense_smallest(m, k)

    vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
    return EigenSystem(eigenvalues=vals, eigenvectors=vecs.T.copy())


def _dense_smallest(m: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    n = m.shape[0]
    ident = np.eye(n)
    lap = ident - m
    try:
        vals, vecs = scipy.linalg.eigh(lap, subset_by_index=[0, k - 1])
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(
            f"eigensolver failed on {n}x{n} Laplacian: {exc}",
            diagnostics={"n": n, "k": k},
        ) from exc
    return vals, vecs


def extract_salient_mask(y1: np.ndarray, grid: tuple[int, int],
                         target: tuple[int, int]) -> SaliencyMask:
    """Turn the Fiedler vector into a full-resolution binary mask.

    The vector is reshaped to the patch grid and thresholded at its mean;
    of the two regions, the one whose cells touch the grid border less
    often is the foreground (ties go to the smaller region). The grid mask
    is bilinearly upsampled to ``target`` and re-thresholded at 0.5.
    """
    gh, gw = grid
    y1 = np.asarray(y1, dtype=np.float64).reshape(-1)
    if y1.shape[0] != gh * gw:
        raise InvalidInputError(
            f"eigenvector length {y1.shape[0]} != grid {gh}x{gw} = {gh * gw}"
        )
    if y1.max() - y1.min() < 1e-9:
        raise DegenerateMaskError("eigenvector is constant within 1e-9; no partition")

    field = y1.reshape(gh, gw)
    above = field > field.mean()

    border = np.zeros((gh, gw), dtype=bool)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    above_border = int(np.count_nonzero(above & border))
    below_border = int(np.count_nonzero(~above & border))

    if above_border != below_border:
        fg = above if above_border < below_border else ~above
    else:
        above_area = int(np.count_nonzero(above))
        fg = above if above_area <= y1.shape[0] - above_area else ~above

    h, w = target
    zoomed = scipy.ndimage.zoom(
        fg.astype(np.float64), (h / gh, w / gw), order=1, mode="nearest",
        grid_mode=True,
    )
    values = (zoomed > 0.5).astype(np.uint8)
    return SaliencyMask(values=values)


def compute_mask(image: np.ndarray, extractor: DenseFeatureExtractor,
                 k: int = 5, coverage_bounds: tuple[float, float] = (0.02, 0.98)
                 ) -> MaskResult:
    """Full first phase: features -> affinity -> eigenvectors -> mask.

    Raises DegenerateMaskError when the image has no usable partition:
    uniform affinity (constant-content image), a constant Fiedler vector,
    or coverage outside ``coverage_bounds``.
    """
    fmap = extractor.extract(image)
    w = build_affinity(fmap)
    if w.max() - w.min() < _UNIFORM_AFFINITY_TOL:
        raise DegenerateMaskError(
            "affinity matrix is uniform; no spectral partition exists "
            "(constant-content image?)"
        )
    eig = laplacian_eigendecomposition(w, k=min(k, w.shape[0]))
    mask = extract_salient_mask(
        eig.eigenvectors[1], (fmap.grid_h, fmap.grid_w), fmap.source_image_shape
    )
    lo, hi = coverage_bounds
    if not (lo <= mask.coverage <= hi):
        raise DegenerateMaskError(
            f"mask coverage {mask.coverage:.3f} outside [{lo}, {hi}]"
        )
    return MaskResult(
        mask=mask,
        fiedler_value=float(eig.eigenvalues[1]),
        coverage=mask.coverage,
        eigenvalues=eig.eigenvalues.copy(),
    )
