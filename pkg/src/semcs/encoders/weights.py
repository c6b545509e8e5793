"""Weight material for the frozen encoders.

Two sources exist:

* Bundled encoder ids carry no weight files. Their parameters are
  synthesized deterministically from a per-tensor seed derived from the
  encoder id and the parameter name, so every process on every machine
  reconstructs bit-identical frozen networks.
* External encoder ids name a TorchScript file expected under the weights
  directory (``SEMCS_WEIGHTS_DIR`` or an explicit config path). A missing
  file raises :class:`ConfigurationError` naming exactly which file is
  expected where.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import torch
import torch.nn as nn

from ..errors import ConfigurationError

WEIGHTS_DIR_ENV = "SEMCS_WEIGHTS_DIR"

BUNDLED_IDS = {
    "tiny-vit-p8",
    "tiny-dual-64",
    "tiny-pyramid",
    "tiny-nima",
    "tiny-dists",
}

# External ids -> expected TorchScript file names.
EXTERNAL_FILES = {
    "dino-vit-s8": "dino_vit_s8.ts.pt",
    "clip-rn50-softmax3d": "clip_rn50_softmax3d.ts.pt",
    "clip-vit-b32": "clip_vit_b32.ts.pt",
    "vgg19": "vgg19_features.ts.pt",
    "dists-vgg16": "dists_vgg16.ts.pt",
    "nima-inception": "nima_inception.ts.pt",
}


def weights_dir(explicit: str | os.PathLike | None = None) -> Path:
    """Resolve the external-weights directory (explicit path wins over env)."""
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get(WEIGHTS_DIR_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "semcs" / "weights"


def resolve_weight_file(encoder_id: str, explicit_dir=None) -> Path:
    """Path of the weight file an external encoder id requires.

    Raises ConfigurationError naming the expected file if it is absent.
    """
    if encoder_id not in EXTERNAL_FILES:
        raise ConfigurationError(f"unknown external encoder id '{encoder_id}'")
    directory = weights_dir(explicit_dir)
    path = directory / EXTERNAL_FILES[encoder_id]
    if not path.is_file():
        raise ConfigurationError(
            f"encoder '{encoder_id}' needs the weight file '{EXTERNAL_FILES[encoder_id]}' "
            f"in '{directory}' (set {WEIGHTS_DIR_ENV} or pass a weights dir); file not found"
        )
    return path


def load_torchscript(encoder_id: str, explicit_dir=None) -> torch.jit.ScriptModule:
    path = resolve_weight_file(encoder_id, explicit_dir)
    module = torch.jit.load(str(path), map_location="cpu")
    module.eval()
    return module


def _tensor_seed(key: str) -> int:
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % (2**63 - 1)


def synthesize_weights(module: nn.Module, family: str) -> nn.Module:
    """Fill ``module``'s parameters deterministically from ``family``.

    Matrix-shaped tensors get fan-in-scaled normals, norm gains get values
    near 1, biases stay small. The draw for each tensor depends only on
    (family, parameter name), never on iteration order or global RNG state.
    """
    with torch.no_grad():
        for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
            g = torch.Generator().manual_seed(_tensor_seed(f"{family}:{name}"))
            draw = torch.randn(p.shape, generator=g, dtype=torch.float64)
            if p.dim() >= 2:
                fan_in = p[0].numel()
                values = draw / (fan_in**0.5)
            elif name.endswith("weight"):  # norm gains
                values = 1.0 + 0.05 * draw
            else:  # biases and 1-D leftovers
                values = 0.02 * draw
            p.copy_(values.to(p.dtype))
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module
