"""Neighbourhood components analysis in softmax form over all negatives of the batch."""

import numpy as np
from scipy.special import logsumexp, softmax

from .base import LossBase
from .common import Batch, LossContext, LossResult, LossSpec, PairDistances, label_masks, require_pairs


def nca_terms(D: np.ndarray, positive: np.ndarray, negative: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and dL/dD of the NCA sum over all ordered (anchor, positive) pairs.

    Each pair contributes D[a, p] + log sum_n exp(-D[a, n]); the positive is
    not part of the normalizer.
    """
    logits = np.where(negative, -D, -np.inf)
    normalizer = logsumexp(logits, axis=1)
    weights = softmax(logits, axis=1)

    anchors, positives = np.nonzero(positive)
    value = np.sum(D[anchors, positives] + normalizer[anchors])

    pair_counts = positive.sum(axis=1).astype(np.float64)
    G = positive.astype(np.float64) - pair_counts[:, None] * weights
    return float(value), G


def loss_nca(B: Batch, spec: LossSpec) -> LossResult:
    require_pairs(B.labels)
    pairs = PairDistances(B.embeddings, spec.metric)
    positive, negative = label_masks(B.labels)
    value, G = nca_terms(pairs.values, positive, negative)
    return LossResult(value, pairs.backward(G))


class NCALoss(LossBase):
    @property
    def name(self) -> str:
        return "nca"

    def compute(self, batch: Batch, spec: LossSpec, context: LossContext) -> LossResult:
        return loss_nca(batch, spec)
