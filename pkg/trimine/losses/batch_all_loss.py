"""Batch all: every valid (anchor, positive, negative) hinge in the mini-batch."""

import numpy as np

from .base import LossBase
from .common import Batch, LossContext, LossResult, LossSpec, PairDistances, label_masks, require_pairs


def loss_batch_all(B: Batch, spec: LossSpec) -> LossResult:
    """Sum of [m + D(a, p) - D(a, n)]_+ over all triplets of the batch."""
    require_pairs(B.labels)
    pairs = PairDistances(B.embeddings, spec.metric)
    D = pairs.values
    positive, negative = label_masks(B.labels)

    hinge = spec.margin + D[:, :, None] - D[:, None, :]
    active = positive[:, :, None] & negative[:, None, :] & (hinge > 0)

    # d/dD[a,p] counts the active negatives, d/dD[a,n] minus the active positives.
    G = active.sum(axis=2).astype(np.float64) - active.sum(axis=1)
    return LossResult(float(hinge[active].sum()), pairs.backward(G), int(active.sum()))


class BatchAllLoss(LossBase):
    @property
    def name(self) -> str:
        return "ba"

    def compute(self, batch: Batch, spec: LossSpec, context: LossContext) -> LossResult:
        return loss_batch_all(batch, spec)
