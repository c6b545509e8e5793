"""End-to-end transfer: text parsing, masking, per-image optimization.

One run owns one fresh style network. The saliency mask is computed once
from the content image and stays fixed; every iteration renders the
current output, evaluates the objective, and takes one adaptive-moment
step. Runs are deterministic for a fixed seed.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import losses
from .encoders import Encoders, load_encoders
from .errors import DegenerateMaskError, InvalidInputError, NumericError
from .image_io import to_array, to_tensor, validate_image
from .losses import LossBreakdown, LossWeights, StyleObjective
from .spectral import MaskResult, SaliencyMask, compute_mask
from .stylenet import StyleNet, init_stylenet

TEXT_DELIMITER = "||"


def parse_style_text(t_sty: str) -> tuple[str, str]:
    """Split a raw style text into (foreground, background) conditions.

    "A || B" styles foreground with A and background with B; a plain
    string drives both.
    """
    if not isinstance(t_sty, str) or not t_sty.strip():
        raise InvalidInputError("style text must be a nonempty string")
    if TEXT_DELIMITER in t_sty:
        left, right = t_sty.split(TEXT_DELIMITER, 1)
        left, right = left.strip(), right.strip()
        if not left or not right:
            raise InvalidInputError(
                f"both sides of '{TEXT_DELIMITER}' must be nonempty in {t_sty!r}"
            )
        return left, right
    t = t_sty.strip()
    return t, t


@dataclass(frozen=True)
class StyleTextCondition:
    raw: str
    t_fg: str
    t_bg: str
    t_src: str = losses.DEFAULT_SOURCE_TEXT

    @classmethod
    def parse(cls, raw: str, t_src: str = losses.DEFAULT_SOURCE_TEXT) -> "StyleTextCondition":
        t_fg, t_bg = parse_style_text(raw)
        return cls(raw=raw.strip(), t_fg=t_fg, t_bg=t_bg, t_src=t_src)

    @property
    def is_double(self) -> bool:
        return self.t_fg != self.t_bg


@dataclass
class TransferConfig:
    iterations: int = 200
    learning_rate: float = 5e-4
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    resolution: int = 512
    dense_id: str = "tiny-vit-p8"
    joint_id: str = "tiny-dual-64"
    content_id: str = "tiny-pyramid"
    force_global: bool = False
    global_only: bool = False  # skip masking entirely; style the whole image
    out_path: str | None = None
    mask_out_path: str | None = None
    log_path: str | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise InvalidInputError(f"iterations must be >= 0, got {self.iterations}")
        if self.learning_rate <= 0:
            raise InvalidInputError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.resolution < 64:
            raise InvalidInputError(f"resolution must be >= 64, got {self.resolution}")
        if not isinstance(self.weights, LossWeights):
            self.weights = LossWeights(*self.weights)


@dataclass
class TransferResult:
    output: np.ndarray  # (H, W, 3) in [0, 1]
    mask: SaliencyMask
    loss_history: list[LossBreakdown]
    config: TransferConfig
    condition: StyleTextCondition
    wall_time: float
    diagnostics: dict


@dataclass
class AdamState:
    """First/second moment estimates for :func:`optimization_step`."""

    step: int
    m: list[torch.Tensor]
    v: list[torch.Tensor]

    @classmethod
    def fresh(cls, params: list[torch.Tensor]) -> "AdamState":
        return cls(step=0,
                   m=[torch.zeros_like(p) for p in params],
                   v=[torch.zeros_like(p) for p in params])


def optimization_step(params: list[torch.Tensor], grads: list[torch.Tensor],
                      lr: float, state: AdamState | None = None,
                      beta1: float = 0.9, beta2: float = 0.999,
                      eps: float = 1e-8) -> AdamState:
    """One adaptive-moment update, applied to ``params`` in place.

    Zero gradients leave parameters untouched (moments stay at rest).
    Returns the advanced state; pass it back on the next call.
    """
    if state is None:
        state = AdamState.fresh(params)
    for g in grads:
        if g is not None and not torch.isfinite(g).all():
            raise NumericError("non-finite gradient in optimization step")
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            if g is None:
                continue
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            p.addcdiv_(m / bc1, (v / bc2).sqrt().add_(eps), value=-lr)
    return state


def run_transfer(image: np.ndarray, condition: StyleTextCondition | str,
                 config: TransferConfig | None = None,
                 encoders: Encoders | None = None) -> TransferResult:
    """Stylize one content image under one text condition.

    The mask comes from the content image alone and is computed exactly
    once. A degenerate mask aborts unless ``config.force_global`` is set,
    in which case the whole image is styled with the foreground text and
    the background term is dropped.
    """
    config = config or TransferConfig()
    if isinstance(condition, str):
        condition = StyleTextCondition.parse(condition)
    validate_image(image, min_side=64)
    if encoders is None:
        encoders = load_encoders(config.dense_id, config.joint_id, config.content_id)

    torch.manual_seed(config.seed)
    start = time.perf_counter()

    global_fallback = False
    if config.global_only:
        global_fallback = True
        mask = SaliencyMask(values=np.ones(image.shape[:2], dtype=np.uint8))
        mask_diag = {"fiedler_value": None, "coverage": 1.0}
    else:
        try:
            mask_result = compute_mask(image, encoders.dense)
            mask = mask_result.mask
            mask_diag = {"fiedler_value": mask_result.fiedler_value,
                         "coverage": mask_result.coverage}
        except DegenerateMaskError:
            if not config.force_global:
                raise
            global_fallback = True
            mask = SaliencyMask(values=np.ones(image.shape[:2], dtype=np.uint8))
            mask_diag = {"fiedler_value": None, "coverage": 1.0}

    weights = config.weights
    if global_fallback:
        weights = LossWeights(lambda_bg=0.0, lambda_content=weights.lambda_content,
                              lambda_tv=weights.lambda_tv)

    objective = StyleObjective(
        image, None if global_fallback else mask,
        condition.t_fg, condition.t_bg, weights, encoders, t_src=condition.t_src,
    )

    net = init_stylenet(config.seed)
    params = [p for _, p in sorted(net.named_parameters(), key=lambda kv: kv[0])]
    for p in params:
        p.requires_grad_(True)
    state = AdamState.fresh(params)

    i_c_t = to_tensor(image, next(net.parameters()).dtype)
    history: list[LossBreakdown] = []
    log_file = open(config.log_path, "w") if config.log_path else None
    last_good = None
    try:
        for step in range(config.iterations):
            i_o_t = net(i_c_t)
            breakdown = objective(i_o_t)
            total = breakdown.total
            if not torch.isfinite(total):
                raise NumericError(
                    f"non-finite total loss at step {step}",
                    diagnostics={"step": step,
                                 "last_good_state": last_good,
                                 "breakdown": {k: float(v) for k, v in
                                               breakdown.record(step).items()}},
                )
            last_good = copy.deepcopy(net.state_dict())
            grads = torch.autograd.grad(total, params)
            state = optimization_step(params, list(grads), config.learning_rate, state)
            history.append(breakdown.floats())
            if log_file is not None:
                log_file.write(json.dumps(breakdown.record(step)) + "\n")
    finally:
        if log_file is not None:
            log_file.close()

    with torch.no_grad():
        output = to_array(net(i_c_t)).clip(0.0, 1.0)
    wall = time.perf_counter() - start

    diagnostics = {
        "architecture_id": net.architecture_id,
        "global_fallback": global_fallback,
        "encoders": encoders.describe(),
        **mask_diag,
    }
    return TransferResult(output=output, mask=mask, loss_history=history,
                          config=config, condition=condition,
                          wall_time=wall, diagnostics=diagnostics)
