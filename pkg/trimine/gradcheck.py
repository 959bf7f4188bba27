"""Central finite-difference checks of the analytic loss and model gradients.

Selections are frozen for the duration of a check: assorted flips are drawn
once, DWS replays the same random stream on every evaluation, and PNCA runs
against fixed, fully defined proxies.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import config
from .core import Metric, Rng
from .loss_manager import loss_and_grad
from .losses.common import Batch, LossKind, LossResult, LossSpec, ProxyState
from .losses.extreme_loss import assorted_draws
from .model import backward, forward, init_params

logger = logging.getLogger(__name__)

_POINT_STREAM = 0
_DRAW_STREAM = 1
_PROXY_STREAM = 2
_LOSS_STREAM = 3
_MODEL_STREAM = 4


@dataclass(frozen=True)
class GradcheckRow:
    loss: str
    max_relative_error: float
    tolerance: float
    target: str = "embeddings"

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(max |a|, max |n|, 1e-12)."""
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def numeric_gradient(f: Callable[[], float], array: np.ndarray, step: float) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``array``, perturbed in place."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = f()
        flat[i] = original - step
        lower = f()
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * step)
    return grad


class _FrozenLoss:
    """A loss with every random or stateful selection pinned."""

    def __init__(self, spec: LossSpec, labels: np.ndarray, dim: int, seed: int):
        self.spec = spec
        self.labels = labels
        self.seed = seed
        root = Rng(seed)
        self.draws = assorted_draws(root.child(_DRAW_STREAM), labels.size) if spec.kind is LossKind.ASSORTED else None
        self.proxy_state = None
        if spec.kind is LossKind.PNCA:
            class_count = int(labels.max()) + 1
            self.proxy_state = ProxyState(
                root.child(_PROXY_STREAM).standard_normal((class_count, dim)), np.ones(class_count, dtype=bool)
            )

    def __call__(self, Y: np.ndarray) -> LossResult:
        return loss_and_grad(
            Batch(Y, self.labels),
            self.spec,
            self.proxy_state,
            rng=Rng(self.seed).child(_LOSS_STREAM),
            draws=self.draws,
        )


def _gradcheck_batch(seed: int, classes: int, per_class: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    labels = np.repeat(np.arange(classes), per_class)
    Y = Rng(seed).child(_POINT_STREAM).standard_normal((labels.size, dim))
    return Y, labels


def check_loss(
    kind: LossKind,
    seed: int = config.DEFAULT_SEED,
    step: float = config.GRADCHECK_STEP,
    tolerance: float = config.GRADCHECK_TOLERANCE,
    metric: Metric = Metric(),
    classes: int = config.GRADCHECK_CLASSES,
    per_class: int = config.GRADCHECK_PER_CLASS,
    dim: int = config.GRADCHECK_DIM,
) -> GradcheckRow:
    """Compare the analytic gradient w.r.t. the batch embeddings with central differences."""
    Y, labels = _gradcheck_batch(seed, classes, per_class, dim)
    loss = _FrozenLoss(LossSpec(kind=kind, metric=metric), labels, dim, seed)
    analytic = loss(Y).grad
    numeric = numeric_gradient(lambda: loss(Y).value, Y, step)
    row = GradcheckRow(kind.value, relative_error(analytic, numeric), tolerance)
    logger.info(f"Gradient check {kind.value}: max relative error {row.max_relative_error:.3e}")
    return row


def check_full_chain(
    kind: LossKind,
    seed: int = config.DEFAULT_SEED,
    step: float = config.GRADCHECK_STEP,
    tolerance: float = config.GRADCHECK_TOLERANCE,
    metric: Metric = Metric(),
    classes: int = config.GRADCHECK_CLASSES,
    per_class: int = config.GRADCHECK_PER_CLASS,
    dim: int = config.GRADCHECK_DIM,
) -> GradcheckRow:
    """Check loss(forward(params, X)) against central differences for every model parameter."""
    X, labels = _gradcheck_batch(seed, classes, per_class, dim)
    params = init_params(dim, Rng(seed).child(_MODEL_STREAM), hidden_widths=(dim,), embedding_dim=dim)
    loss = _FrozenLoss(LossSpec(kind=kind, metric=metric), labels, dim, seed)

    Y, cache = forward(params, X)
    analytic = backward(params, cache, loss(Y).grad)

    def value() -> float:
        return loss(forward(params, X)[0]).value

    worst = 0.0
    for name in params.names():
        numeric = numeric_gradient(value, params.tensors[name], step)
        worst = max(worst, relative_error(analytic[name], numeric))
    row = GradcheckRow(kind.value, worst, tolerance, target="parameters")
    logger.info(f"Full-chain gradient check {kind.value}: max relative error {worst:.3e}")
    return row


def gradcheck_all(
    seed: int = config.DEFAULT_SEED,
    step: float = config.GRADCHECK_STEP,
    tolerance: float = config.GRADCHECK_TOLERANCE,
    metric: Metric = Metric(),
    full_chain: bool = False,
) -> list[GradcheckRow]:
    """One row per loss kind (and a second, full-chain row per kind when requested)."""
    rows = [check_loss(kind, seed, step, tolerance, metric) for kind in LossKind]
    if full_chain:
        rows += [check_full_chain(kind, seed, step, tolerance, metric) for kind in LossKind]
    return rows
