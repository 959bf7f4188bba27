"""Online mining with extreme distances: EPEN, EPHN, HPEN, HPHN (batch hard) and assorted."""

import numpy as np

from ..core import ExtremePolicy, Rng
from ..errors import UsageError
from .base import LossBase
from .common import (
    Batch,
    LossContext,
    LossResult,
    LossSpec,
    PairDistances,
    first_extreme,
    label_masks,
    require_positive_per_anchor,
)


def assorted_draws(rng: Rng, batch_size: int) -> np.ndarray:
    """Independent min/max coin flips per anchor: column 0 positive, column 1 negative."""
    return rng.integers(0, 2, size=(batch_size, 2)).astype(bool)


def loss_extreme(
    B: Batch,
    spec: LossSpec,
    policy: ExtremePolicy,
    rng: Rng | None = None,
    draws: np.ndarray | None = None,
) -> LossResult:
    """One hinge per anchor between its extreme positive and extreme negative.

    Args:
        B: Mini-batch; every class needs at least two members
        spec: Margin and metric
        policy: Extreme case; ASSORTED flips min/max independently per anchor
        rng: Source of the ASSORTED flips (ignored otherwise)
        draws: Frozen ASSORTED flips, b x 2 booleans (True = max), overriding ``rng``

    Returns:
        LossResult: subgradient flows only to the selected anchor, positive and negative
    """
    require_positive_per_anchor(B.labels)
    b = len(B)
    pairs = PairDistances(B.embeddings, spec.metric)
    D = pairs.values
    positive, negative = label_masks(B.labels)

    if policy is ExtremePolicy.ASSORTED:
        if draws is None:
            if rng is None:
                raise UsageError("The assorted loss needs a random seed or frozen draws")
            draws = assorted_draws(rng, b)
        draws = np.asarray(draws, dtype=bool)
        if draws.shape != (b, 2):
            raise UsageError(f"Assorted draws must have shape ({b}, 2), got {draws.shape}")
        farthest_positive, nearest_negative = draws[:, 0], draws[:, 1]
    else:
        farthest_positive = np.full(b, policy.hard_positive)
        nearest_negative = np.full(b, policy.hard_negative)

    chosen_positive = np.where(
        farthest_positive,
        first_extreme(D, positive, largest=True),
        first_extreme(D, positive, largest=False),
    )
    chosen_negative = np.where(
        nearest_negative,
        first_extreme(D, negative, largest=False),
        first_extreme(D, negative, largest=True),
    )

    anchors = np.arange(b)
    hinge = spec.margin + D[anchors, chosen_positive] - D[anchors, chosen_negative]
    active = hinge > 0

    G = np.zeros_like(D)
    np.add.at(G, (anchors[active], chosen_positive[active]), 1.0)
    np.add.at(G, (anchors[active], chosen_negative[active]), -1.0)
    return LossResult(float(hinge[active].sum()), pairs.backward(G), int(active.sum()))


class _ExtremeLoss(LossBase):
    policy: ExtremePolicy

    @property
    def name(self) -> str:
        return self.policy.value

    def compute(self, batch: Batch, spec: LossSpec, context: LossContext) -> LossResult:
        return loss_extreme(batch, spec, self.policy)


class EasiestPositiveEasiestNegativeLoss(_ExtremeLoss):
    policy = ExtremePolicy.EPEN


class EasiestPositiveHardestNegativeLoss(_ExtremeLoss):
    policy = ExtremePolicy.EPHN


class HardestPositiveEasiestNegativeLoss(_ExtremeLoss):
    policy = ExtremePolicy.HPEN


class HardestPositiveHardestNegativeLoss(_ExtremeLoss):
    policy = ExtremePolicy.HPHN


class AssortedLoss(_ExtremeLoss):
    policy = ExtremePolicy.ASSORTED

    @property
    def needs_rng(self) -> bool:
        return True

    def compute(self, batch: Batch, spec: LossSpec, context: LossContext) -> LossResult:
        self.require_rng(context)
        return loss_extreme(batch, spec, self.policy, rng=context.rng, draws=context.draws)
