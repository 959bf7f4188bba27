"""Batch semi-hard: nearest negative that is still farther than the positive."""

import numpy as np

from .base import LossBase
from .common import (
    Batch,
    LossContext,
    LossResult,
    LossSpec,
    PairDistances,
    first_extreme,
    label_masks,
    require_pairs,
)


def semi_hard_negatives(D: np.ndarray, positive: np.ndarray, negative: np.ndarray) -> np.ndarray:
    """Chosen negative for every (anchor, positive) cell.

    When no negative is farther than the positive, the farthest negative is used.
    """
    farther = negative[:, None, :] & (D[:, None, :] > D[:, :, None])
    semi = np.argmin(np.where(farther, D[:, None, :], np.inf), axis=2)
    farthest = first_extreme(D, negative, largest=True)
    return np.where(farther.any(axis=2), semi, farthest[:, None])


def loss_batch_semi_hard(B: Batch, spec: LossSpec) -> LossResult:
    require_pairs(B.labels)
    pairs = PairDistances(B.embeddings, spec.metric)
    D = pairs.values
    positive, negative = label_masks(B.labels)

    chosen = semi_hard_negatives(D, positive, negative)
    hinge = spec.margin + D - np.take_along_axis(D, chosen, axis=1)
    active = positive & (hinge > 0)

    G = active.astype(np.float64)
    anchors, _ = np.nonzero(active)
    np.add.at(G, (anchors, chosen[active]), -1.0)
    return LossResult(float(hinge[active].sum()), pairs.backward(G), int(active.sum()))


class BatchSemiHardLoss(LossBase):
    @property
    def name(self) -> str:
        return "bsh"

    def compute(self, batch: Batch, spec: LossSpec, context: LossContext) -> LossResult:
        return loss_batch_semi_hard(batch, spec)
