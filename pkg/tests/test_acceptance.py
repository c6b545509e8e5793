"""Acceptance suite: one test per release criterion, strictest tolerances.

Each test prints a single PASS line (visible with ``pytest -s`` or ``-rA``)
so the whole gate can be read at a glance. The trend comparison at the end
is reported, not gated.
"""

import time

import numpy as np
import pytest
import torch

import semcs
from semcs import sample_images
from semcs.losses import (LossWeights, directional_loss,
                          global_background_loss, global_foreground_loss,
                          text_direction, total_loss, tv_loss, content_loss)
from semcs.pipeline import TransferConfig, run_transfer
from semcs.spectral import (build_affinity, extract_salient_mask,
                            laplacian_eigendecomposition)
from semcs.encoders import DenseFeatureMap
from semcs.evaluation import batch_evaluate, dists_score, nima_score

SMOKE_SEED = 0
SMOKE_ITERS = 200


def _report(name: str, detail: str) -> None:
    print(f"ACCEPTANCE PASS: {name} — {detail}")


def _reference_eig(w: np.ndarray):
    d = np.maximum(w.sum(axis=1), 1e-12)
    lap = np.eye(w.shape[0]) - w / np.sqrt(d)[:, None] / np.sqrt(d)[None, :]
    return np.linalg.eigh((lap + lap.T) / 2)


def test_spectral_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(20):
        n = int(rng.integers(4, 13))
        a = rng.random((n, n))
        w = (a + a.T) / 2
        k = int(rng.integers(2, n + 1))
        eig = laplacian_eigendecomposition(w, k)
        ref_vals, ref_vecs = _reference_eig(w)
        assert np.abs(eig.eigenvalues - ref_vals[:k]).max() < 1e-6
        for i in range(k):
            v, r = eig.eigenvectors[i], ref_vecs[:, i]
            assert min(np.abs(v - r).max(), np.abs(v + r).max()) < 1e-6
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    _report("spectral oracle", f"20 matrices matched dense reference in {elapsed:.2f}s")


def test_laplacian_structure():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n = int(rng.integers(4, 14))
        w = np.abs(rng.standard_normal((n, n)))
        w = (w + w.T) / 2
        eig = laplacian_eigendecomposition(w, min(4, n))
        assert eig.eigenvalues.min() >= -1e-6
        assert eig.eigenvalues.max() <= 2 + 1e-6
        assert eig.eigenvalues[0] <= 1e-6

    w = np.zeros((11, 11))
    w[:5, :5] = 1.0
    w[5:, 5:] = 1.0
    eig = laplacian_eigendecomposition(w, 3)
    assert eig.eigenvalues[1] <= 1e-6
    y1 = eig.eigenvectors[1]
    side = y1 > y1.mean()
    assert side[:5].all() != side[5:].all()
    assert np.ptp(y1[:5]) < 1e-8 and np.ptp(y1[5:]) < 1e-8
    _report("laplacian structure", "spectrum in [0, 2], zero mode, block separation")


def test_mask_algebra(enc):
    rng = np.random.default_rng(11)

    # strictly binary mask from the full pipeline
    photo = sample_images.object_photo(192, seed=4)
    mask_result = semcs.compute_mask(photo, enc.dense)
    assert set(np.unique(mask_result.mask.values)) == {0, 1}

    # partition identity, exact
    x = rng.random((64, 64, 3))
    m = (rng.random((64, 64)) < 0.5).astype(np.float64)[..., None]
    assert np.array_equal(m * x + (1.0 - m) * x, x)

    # mask invariant under positive feature scaling
    fmap = enc.dense.extract(photo)
    for scale in (0.02, 57.0):
        scaled = DenseFeatureMap(grid_h=fmap.grid_h, grid_w=fmap.grid_w, dim=fmap.dim,
                                 features=fmap.features * scale,
                                 source_image_shape=fmap.source_image_shape,
                                 normalized=False)
        pair = []
        for f in (fmap, scaled):
            eig = laplacian_eigendecomposition(build_affinity(f), 2)
            pair.append(extract_salient_mask(eig.eigenvectors[1],
                                             (f.grid_h, f.grid_w),
                                             f.source_image_shape))
        assert np.array_equal(pair[0].values, pair[1].values)

    # fg/bg ignore the other region's pixels, exact equality, 5 random images
    for trial in range(5):
        trial_rng = np.random.default_rng(100 + trial)
        i_c = trial_rng.random((64, 64, 3))
        i_o = trial_rng.random((64, 64, 3))
        mask = (trial_rng.random((64, 64)) < 0.4).astype(np.uint8)
        mask[0, 0], mask[-1, -1] = 1, 0
        fg0 = float(global_foreground_loss(i_o, i_c, mask, "Snowy", enc))
        bg0 = float(global_background_loss(i_o, i_c, mask, "Desert Sand", enc))
        pert_bg = i_o.copy()
        pert_bg[mask == 0] = trial_rng.random(((mask == 0).sum(), 3))
        assert float(global_foreground_loss(pert_bg, i_c, mask, "Snowy", enc)) == fg0
        pert_fg = i_o.copy()
        pert_fg[mask == 1] = trial_rng.random(((mask == 1).sum(), 3))
        assert float(global_background_loss(pert_fg, i_c, mask, "Desert Sand", enc)) == bg0
    _report("mask algebra", "binarity, partition identity, scale invariance, "
                            "region independence all exact")


def test_loss_bounds_and_identities(enc):
    rng = np.random.default_rng(3)
    for _ in range(3):
        i_c = rng.random((48, 48, 3))
        i_o = rng.random((48, 48, 3))
        mask = (rng.random((48, 48)) < 0.5).astype(np.uint8)
        mask[0, 0], mask[-1, -1] = 1, 0
        assert 0.0 <= float(global_foreground_loss(i_o, i_c, mask, "Snowy", enc)) <= 2.0
        assert 0.0 <= float(global_background_loss(i_o, i_c, mask, "Snowy", enc)) <= 2.0

    v = torch.tensor(rng.standard_normal(16))
    u = torch.zeros(16, dtype=torch.float64)
    u[0] = 1.0
    w = torch.zeros(16, dtype=torch.float64)
    w[1] = 1.0
    assert float(directional_loss(v, v)) == pytest.approx(0.0, abs=1e-7)
    assert float(directional_loss(u, w)) == pytest.approx(1.0, abs=1e-7)
    assert float(directional_loss(v, -v)) == pytest.approx(2.0, abs=1e-7)
    base = float(directional_loss(u + w, w))
    assert float(directional_loss(3.7 * (u + w), 0.004 * w)) == pytest.approx(base, abs=1e-9)

    assert float(tv_loss(np.full((9, 7, 3), 0.31))) == 0.0
    photo = sample_images.object_photo(96, seed=1)
    assert float(content_loss(photo, photo, enc)) == 0.0
    _report("loss bounds and identities",
            "directional 0/1/2, scale invariance, tv/content zeros")


def test_gradient_oracle(enc64):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        i_c = rng.random((16, 16, 3))
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[4:12, 5:13] = 1
        x = torch.tensor(rng.random((1, 3, 16, 16)), dtype=torch.float64,
                         requires_grad=True)
        weights = LossWeights()

        def f(t):
            return total_loss(t, i_c, mask, "Snowy", "Desert Sand", weights, enc64).total

        (grad,) = torch.autograd.grad(f(x), x)
        h = 1e-6
        for _ in range(4):
            v = torch.tensor(rng.standard_normal((1, 3, 16, 16)))
            v /= v.norm()
            fd = (float(f((x + h * v).detach()))
                  - float(f((x - h * v).detach()))) / (2 * h)
            analytic = float((grad * v).sum())
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-12)
            worst = max(worst, rel)
            assert rel < 1e-3
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    _report("gradient oracle",
            f"5 seeds, worst relative error {worst:.2e} in {elapsed:.1f}s")


@pytest.fixture(scope="module")
def smoke_photo():
    return sample_images.object_photo(256, seed=0)


def test_end_to_end_smoke(enc, smoke_photo):
    # frozen regression band: initial total was 2.2273 on first pinning run
    start = time.perf_counter()
    cfg = TransferConfig(iterations=SMOKE_ITERS, seed=SMOKE_SEED)
    first = run_transfer(smoke_photo, "Snowy", cfg, encoders=enc)
    second = run_transfer(smoke_photo, "Snowy", cfg, encoders=enc)
    elapsed = time.perf_counter() - start

    h = first.loss_history
    assert len(h) == SMOKE_ITERS
    assert 1.5 <= h[0].total <= 3.0
    assert h[-1].total <= 0.8 * h[0].total
    assert h[-1].fglob < h[0].fglob
    assert first.output.shape == smoke_photo.shape
    assert np.array_equal(first.output, second.output)
    assert elapsed < 45 * 60
    _report("end-to-end smoke",
            f"total {h[0].total:.3f} -> {h[-1].total:.3f} "
            f"(ratio {h[-1].total / h[0].total:.3f}), "
            f"fg {h[0].fglob:.3f} -> {h[-1].fglob:.3f}, bitwise rerun, {elapsed:.0f}s")


def test_double_text_ablation(enc, smoke_photo, tmp_path):
    d_fg = text_direction("Red Rocks", "Photo", enc)
    d_bg = text_direction("Snowy", "Photo", enc)
    cos = float((d_fg @ d_bg) / (d_fg.norm() * d_bg.norm()))
    assert cos < 0.99

    log = tmp_path / "double.jsonl"
    cfg = TransferConfig(iterations=120, seed=SMOKE_SEED, log_path=str(log))
    result = run_transfer(smoke_photo, "Red Rocks || Snowy", cfg, encoders=enc)
    h = result.loss_history
    assert len(h) == 120
    assert log.exists() and len(log.read_text().splitlines()) == 120
    fg_drop = 1.0 - h[-1].fglob / h[0].fglob
    bg_drop = 1.0 - h[-1].bglob / h[0].bglob
    assert fg_drop >= 0.10
    assert bg_drop >= 0.10
    _report("double-text ablation",
            f"text-direction cosine {cos:.3f}; fg -{fg_drop:.0%}, bg -{bg_drop:.0%}")


def test_metric_sanity():
    corpus = sample_images.photo_corpus(10, size=128, seed=100)
    for img in corpus:
        assert dists_score(img, img) <= 1e-4

    rng = np.random.default_rng(5)
    for _ in range(50):
        h = int(rng.integers(32, 96))
        w = int(rng.integers(32, 96))
        assert 1.0 <= nima_score(rng.random((h, w, 3))) <= 10.0

    pairs = [(img, sample_images.blurred(img, 2.0)) for img in corpus]
    report = batch_evaluate(pairs)
    assert report.count == len(report.records) == 10
    assert report.mean_dists == sum(r.dists for r in report.records) / report.count
    assert report.mean_nima == sum(r.nima for r in report.records) / report.count
    _report("metric sanity",
            "self-distance 0, rating range on 50-image fuzz, exact report means")


def test_structure_preservation_trend(enc):
    # Reported, not gated: semantic masking vs mask-free global styling.
    corpus = sample_images.photo_corpus(10, size=128, seed=100)
    texts = ["Snowy", "Desert Sand", "Red Rocks", "Acrylic painting",
             "Watercolor"]
    sem_pairs, glob_pairs = [], []
    for i, img in enumerate(corpus):
        text = texts[i % len(texts)]
        sem_cfg = TransferConfig(iterations=40, seed=i)
        sem = run_transfer(img, text, sem_cfg, encoders=enc)
        glob_cfg = TransferConfig(
            iterations=40, seed=i, global_only=True,
            weights=LossWeights(lambda_bg=0.0),
        )
        glo = run_transfer(img, text, glob_cfg, encoders=enc)
        sem_pairs.append((img, sem.output))
        glob_pairs.append((img, glo.output))
    sem_mean = batch_evaluate(sem_pairs).mean_dists
    glob_mean = batch_evaluate(glob_pairs).mean_dists
    assert np.isfinite(sem_mean) and np.isfinite(glob_mean)
    trend = "holds" if sem_mean >= glob_mean else "does not hold"
    _report("structure-preservation trend (reported, non-gating)",
            f"semantic mean {sem_mean:.4f} vs global mean {glob_mean:.4f}; "
            f"expected ordering {trend}")
