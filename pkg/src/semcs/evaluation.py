"""Batch quality assessment of stylized outputs.

Two measures: a reference-based structure/texture distance between content
and output (0 = identical, lower = more structure preserved), and a
no-reference 10-bin rating expectation in [1, 10]. Reports carry every
scored record so the means are exactly recomputable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import torch

from .encoders import nets, weights
from .errors import ConfigurationError, InvalidInputError
from .image_io import load_image, to_tensor, validate_image

_STABILITY_C1 = 1e-6
_STABILITY_C2 = 1e-6


class DistsMetric:
    """Structure/texture perceptual distance.

    Per backbone stage (raw pixels plus four conv stages) and channel, a
    texture term compares spatial means and a structure term compares
    spatial covariances; convex per-channel weights combine everything into
    a similarity, and the distance is one minus it. Identical images score
    exactly 0. The distance is clipped into [0, 1]; anticorrelated feature
    pathologies could otherwise push it slightly above 1.
    """

    def __init__(self, backbone_id: str = "tiny-dists", weights_path=None):
        self.backbone_id = backbone_id
        self._external = None
        if backbone_id == "tiny-dists":
            net = nets.ConvFeaturePyramid()
            weights.synthesize_weights(net, backbone_id)
            self._net = net.double()
            channels = [3] + list(nets.ConvFeaturePyramid.STAGE_CHANNELS.values())
            total = sum(channels)
            g = torch.Generator().manual_seed(weights._tensor_seed(f"{backbone_id}:alphabeta"))
            raw = torch.rand(2 * total, generator=g, dtype=torch.float64) + 0.1
            raw = raw / raw.sum()
            self._alpha = raw[:total]
            self._beta = raw[total:]
        elif backbone_id in weights.EXTERNAL_FILES:
            # scripted stage stack with `alpha`/`beta` buffers over its
            # concatenated stage channels
            module = weights.load_torchscript(backbone_id, weights_path)
            self._external = module.double()
            self._alpha = module.alpha.double().reshape(-1)
            self._beta = module.beta.double().reshape(-1)
        else:
            raise ConfigurationError(f"unknown measure backbone '{backbone_id}'")

    def _stages(self, t: torch.Tensor) -> list[torch.Tensor]:
        if self._external is not None:
            return list(self._external(t))
        out = [t]
        feats = self._net((t - 0.5) / 0.5)
        # Softplus keeps channel means nonnegative, as the texture term assumes.
        out.extend(torch.nn.functional.softplus(feats[name]) for name in
                   ("stage1", "stage2", "stage3", "stage4"))
        return out

    def score(self, reference: np.ndarray, candidate: np.ndarray) -> float:
        validate_image(reference)
        validate_image(candidate)
        if reference.shape != candidate.shape:
            raise InvalidInputError(
                f"image shape mismatch: {reference.shape} vs {candidate.shape}"
            )
        with torch.no_grad():
            ref_t = to_tensor(reference, torch.float64)
            cand_t = to_tensor(candidate, torch.float64)
            sims = []
            for fx, fy in zip(self._stages(ref_t), self._stages(cand_t)):
                mu_x = fx.mean(dim=(2, 3)).squeeze(0)
                mu_y = fy.mean(dim=(2, 3)).squeeze(0)
                var_x = fx.var(dim=(2, 3), unbiased=False).squeeze(0)
                var_y = fy.var(dim=(2, 3), unbiased=False).squeeze(0)
                cov = ((fx - fx.mean(dim=(2, 3), keepdim=True))
                       * (fy - fy.mean(dim=(2, 3), keepdim=True))).mean(dim=(2, 3)).squeeze(0)
                texture = (2 * mu_x * mu_y + _STABILITY_C1) / (mu_x**2 + mu_y**2 + _STABILITY_C1)
                structure = (2 * cov + _STABILITY_C2) / (var_x + var_y + _STABILITY_C2)
                sims.append((texture, structure))
            textures = torch.cat([t for t, _ in sims])
            structures = torch.cat([s for _, s in sims])
            similarity = (self._alpha * textures).sum() + (self._beta * structures).sum()
        return float(min(max(1.0 - float(similarity), 0.0), 1.0))


class NimaMetric:
    """No-reference 10-bin rating expectation (aesthetic flavor)."""

    flavor = "aesthetic"

    def __init__(self, backbone_id: str = "tiny-nima", weights_path=None):
        self.backbone_id = backbone_id
        if backbone_id == "tiny-nima":
            net = nets.RatingNet()
            weights.synthesize_weights(net, backbone_id)
            self._net = net
        elif backbone_id in weights.EXTERNAL_FILES:
            self._net = weights.load_torchscript(backbone_id, weights_path)
        else:
            raise ConfigurationError(f"unknown rating backbone '{backbone_id}'")

    def score(self, image: np.ndarray) -> float:
        validate_image(image)
        with torch.no_grad():
            t = to_tensor(image, torch.float32)
            t = torch.nn.functional.interpolate(t, size=(64, 64), mode="bilinear",
                                                align_corners=False)
            probs = self._net((t - 0.5) / 0.5).squeeze(0)
            bins = torch.arange(1, probs.shape[0] + 1, dtype=probs.dtype)
            value = (probs * bins).sum()
        return float(value)


@lru_cache(maxsize=4)
def _default_dists(backbone_id: str = "tiny-dists") -> DistsMetric:
    return DistsMetric(backbone_id)


@lru_cache(maxsize=4)
def _default_nima(backbone_id: str = "tiny-nima") -> NimaMetric:
    return NimaMetric(backbone_id)


def dists_score(reference: np.ndarray, candidate: np.ndarray) -> float:
    return _default_dists().score(reference, candidate)


def nima_score(image: np.ndarray) -> float:
    return _default_nima().score(image)


@dataclass(frozen=True)
class EvalRecord:
    content_path: str
    output_path: str
    dists: float
    nima: float
    condition: str | None = None


@dataclass
class EvalReport:
    records: list[EvalRecord]
    mean_dists: float
    mean_nima: float
    count: int
    header: dict
    errors: list[dict]

    def to_dict(self) -> dict:
        return {
            "header": self.header,
            "records": [asdict(r) for r in self.records],
            "errors": self.errors,
            "mean_dists": self.mean_dists,
            "mean_nima": self.mean_nima,
            "count": self.count,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def read_manifest(path) -> list[tuple[str, str]]:
    """Parse a pairs manifest: one 'content<TAB>output' line per pair."""
    pairs = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        pairs.append(tuple(line.split("\t")))
    if not pairs:
        raise InvalidInputError(f"manifest '{path}' contains no pairs")
    return pairs


def batch_evaluate(pairs, top: int | None = None,
                   dists_metric: DistsMetric | None = None,
                   nima_metric: NimaMetric | None = None) -> EvalReport:
    """Score every pair; unreadable entries become error records.

    With ``top`` set, records are sorted by the no-reference score and only
    the best ``top`` enter the report and its means.
    """
    if not pairs:
        raise InvalidInputError("pairs list is empty")
    dm = dists_metric or _default_dists()
    nm = nima_metric or _default_nima()
    records: list[EvalRecord] = []
    errors: list[dict] = []
    for index, pair in enumerate(pairs):
        if len(pair) < 2:
            errors.append({"pair": [_label(p, index) for p in pair],
                           "error": "manifest line needs 2 tab-separated paths"})
            continue
        content_path, output_path = pair[0], pair[1]
        condition = pair[2] if len(pair) > 2 else None
        try:
            content = _as_image(content_path)
            output = _as_image(output_path)
            rec = EvalRecord(
                content_path=_label(content_path, index),
                output_path=_label(output_path, index),
                dists=dm.score(content, output), nima=nm.score(output),
                condition=condition,
            )
            records.append(rec)
        except Exception as exc:  # per-record failure must not kill the run
            errors.append({"pair": [_label(content_path, index), _label(output_path, index)],
                           "error": f"{type(exc).__name__}: {exc}"})
    if top is not None and top < len(records):
        records = sorted(records, key=lambda r: r.nima, reverse=True)[:top]
    if records:
        mean_dists = sum(r.dists for r in records) / len(records)
        mean_nima = sum(r.nima for r in records) / len(records)
    else:
        mean_dists = float("nan")
        mean_nima = float("nan")
    header = {
        "dists_model": dm.backbone_id,
        "nima_model": f"{nm.backbone_id} ({nm.flavor})",
        "top": top,
    }
    return EvalReport(records=records, mean_dists=mean_dists, mean_nima=mean_nima,
                      count=len(records), header=header, errors=errors)


def _as_image(source) -> np.ndarray:
    if isinstance(source, np.ndarray):
        return source
    return load_image(source)


def _label(source, index: int) -> str:
    if isinstance(source, np.ndarray):
        return f"<in-memory-{index}>"
    return str(source)
