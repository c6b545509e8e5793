import numpy as np
import pytest
import torch

from semcs import sample_images
from semcs.encoders import (ContentFeatureExtractor, DenseFeatureExtractor,
                            ImageTextEncoder)
from semcs.errors import ConfigurationError, InvalidInputError


class TestDenseFeatures:
    def test_grid_arithmetic_224(self, enc):
        fmap = enc.dense.extract(sample_images.object_photo(224, seed=3))
        assert (fmap.grid_h, fmap.grid_w) == (28, 28)
        assert fmap.features.shape == (28 * 28, fmap.dim)

    def test_non_square_grid(self, enc):
        img = sample_images.object_photo(128, seed=1)[:, :96]
        fmap = enc.dense.extract(img)
        assert (fmap.grid_h, fmap.grid_w) == (16, 12)
        assert fmap.source_image_shape == (128, 96)

    def test_repeat_call_bitwise_identical(self, enc, photo128):
        a = enc.dense.extract(photo128)
        b = enc.dense.extract(photo128)
        assert np.array_equal(a.features, b.features)

    def test_rows_unit_norm_and_finite(self, enc, photo128):
        fmap = enc.dense.extract(photo128)
        assert fmap.normalized
        assert np.isfinite(fmap.features).all()
        norms = np.linalg.norm(fmap.features, axis=1)
        assert np.abs(norms - 1.0).max() < 1e-4

    def test_constant_image_feature_collapse(self, enc):
        # frozen regression: observed min pairwise cosine 0.99999995
        fmap = enc.dense.extract(sample_images.constant_image(128, 0.5))
        cos = fmap.features @ fmap.features.T
        assert cos.min() >= 0.99
        assert cos.min() >= 0.9999

    def test_too_small_image_rejected(self, enc):
        with pytest.raises(InvalidInputError):
            enc.dense.extract(np.full((32, 32, 3), 0.3))

    def test_input_not_mutated(self, enc, photo128):
        before = photo128.copy()
        enc.dense.extract(photo128)
        assert np.array_equal(photo128, before)


class TestJointEncoder:
    def test_image_embedding_unit_norm(self, enc, photo128):
        e = enc.joint.encode_image(photo128)
        assert e.modality == "image"
        assert abs(np.linalg.norm(e.values) - 1.0) < 1e-4

    def test_image_self_cosine(self, enc, photo128):
        a = enc.joint.encode_image(photo128)
        b = enc.joint.encode_image(photo128)
        assert abs(float(a.values @ b.values) - 1.0) < 1e-6

    def test_text_determinism_and_norm(self, enc):
        a = enc.joint.encode_text("Snowy")
        b = enc.joint.encode_text("Snowy")
        assert np.array_equal(a.values, b.values)
        assert abs(np.linalg.norm(a.values) - 1.0) < 1e-4
        assert abs(float(a.values @ b.values) - 1.0) < 1e-6

    def test_source_text_encodes(self, enc):
        e = enc.joint.encode_text("Photo")
        assert e.modality == "text"
        assert e.dim == enc.joint.embed_dim

    def test_image_text_dims_match(self, enc, photo128):
        assert enc.joint.encode_image(photo128).dim == enc.joint.encode_text("x").dim

    def test_photo_text_affinity_regression(self, enc):
        # frozen from a one-off evaluation on the bundled photo (seed 10):
        # cos(photo, "a photo") = 0.127599, cos(photo, "random qwxz string") = 0.119735
        img = sample_images.object_photo(256, seed=10)
        e = enc.joint.encode_image(img)
        a = float(e.values @ enc.joint.encode_text("a photo").values)
        b = float(e.values @ enc.joint.encode_text("random qwxz string").values)
        assert a > b
        assert a == pytest.approx(0.127599, abs=2e-3)
        assert b == pytest.approx(0.119735, abs=2e-3)

    def test_empty_text_rejected(self, enc):
        for bad in ("", "   "):
            with pytest.raises(InvalidInputError):
                enc.joint.encode_text(bad)

    def test_nonfinite_pixels_rejected(self, enc):
        img = np.full((64, 64, 3), 0.5)
        img[0, 0, 0] = np.nan
        with pytest.raises(InvalidInputError):
            enc.joint.encode_image(img)

    def test_punctuation_only_text_encodes(self, enc):
        e = enc.joint.encode_text("!!!")
        assert abs(np.linalg.norm(e.values) - 1.0) < 1e-4


class TestContentFeatures:
    def test_layer_set_fixed_and_deterministic(self, enc, photo128):
        a = enc.content.extract(photo128)
        b = enc.content.extract(photo128)
        assert a.names() == b.names() == ("stage2", "stage3")
        for (_, fa), (_, fb) in zip(a.layers, b.layers):
            assert np.array_equal(fa, fb)

    def test_stage_strides_at_256(self, enc, photo256):
        feats = dict(enc.content.extract(photo256).layers)
        assert feats["stage2"].shape[2:] == (128, 128)
        assert feats["stage3"].shape[2:] == (64, 64)

    def test_custom_layer_config(self):
        ext = ContentFeatureExtractor(layers=("stage1", "stage4"))
        feats = ext.extract(sample_images.object_photo(64, 0))
        assert [n for n, _ in feats.layers] == ["stage1", "stage4"]

    def test_unknown_layer_rejected(self):
        with pytest.raises(ConfigurationError):
            ContentFeatureExtractor(layers=("stage9",))


class TestExternalWeights:
    def test_missing_weight_file_names_expected_file(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SEMCS_WEIGHTS_DIR", str(tmp_path))
        with pytest.raises(ConfigurationError) as exc:
            DenseFeatureExtractor("dino-vit-s8")
        assert "dino_vit_s8.ts.pt" in str(exc.value)
        assert str(tmp_path) in str(exc.value)

    def test_unknown_encoder_id(self):
        with pytest.raises(ConfigurationError):
            ImageTextEncoder("no-such-encoder")

    def test_torchscript_dense_extractor_loads(self, tmp_path, monkeypatch):
        class Stub(torch.nn.Module):
            def __init__(self):
                super().__init__()
                self.conv = torch.nn.Conv2d(3, 16, kernel_size=8, stride=8)

            def forward(self, x):
                return self.conv(x)

        monkeypatch.setenv("SEMCS_WEIGHTS_DIR", str(tmp_path))
        scripted = torch.jit.script(Stub())
        scripted.save(str(tmp_path / "dino_vit_s8.ts.pt"))
        ext = DenseFeatureExtractor("dino-vit-s8")
        fmap = ext.extract(sample_images.object_photo(128, 0))
        assert (fmap.grid_h, fmap.grid_w) == (16, 16)
        assert fmap.features.shape == (256, 16)

    def test_torchscript_dual_encoder_loads(self, tmp_path, monkeypatch):
        class Stub(torch.nn.Module):
            def __init__(self):
                super().__init__()
                self.proj = torch.nn.Linear(3, 32)
                self.table = torch.nn.Embedding(4096, 32)

            @torch.jit.export
            def encode_image(self, x: torch.Tensor) -> torch.Tensor:
                return self.proj(x.mean(dim=(2, 3))).reshape(-1)

            @torch.jit.export
            def encode_text(self, ids: torch.Tensor) -> torch.Tensor:
                return self.table(ids).mean(dim=0)

            def forward(self, x: torch.Tensor) -> torch.Tensor:
                return self.encode_image(x)

        monkeypatch.setenv("SEMCS_WEIGHTS_DIR", str(tmp_path))
        torch.jit.script(Stub()).save(str(tmp_path / "clip_vit_b32.ts.pt"))
        enc_ext = ImageTextEncoder("clip-vit-b32")
        img_e = enc_ext.encode_image(sample_images.object_photo(64, 0))
        txt_e = enc_ext.encode_text("Snowy")
        assert img_e.dim == txt_e.dim == 32
        assert abs(np.linalg.norm(img_e.values) - 1.0) < 1e-4
