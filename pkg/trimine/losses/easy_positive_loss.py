"""Easy positive: softmax between each anchor's nearest positive and all negatives.

Embeddings are projected onto the unit sphere first; the gradient includes the
normalization Jacobian. Anchors of single-member classes have no positive and
only serve as negatives for others.
"""

import numpy as np
from scipy.special import logsumexp, softmax

from ..core import Metric, unit_rows, unit_rows_backward
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


def _softmax_against_easiest(scores: np.ndarray, easiest: np.ndarray, negative_scores: np.ndarray, negative: np.ndarray, anchors: np.ndarray):
    """-log softmax of the easiest-positive score among it and the negative scores, per anchor."""
    logits = np.where(negative, negative_scores, -np.inf)[anchors]
    logits[np.arange(anchors.size), easiest] = scores[anchors, easiest]
    value = np.sum(logsumexp(logits, axis=1) - scores[anchors, easiest])
    return float(value), softmax(logits, axis=1)


def loss_easy_positive(B: Batch, spec: LossSpec, use_distance_form: bool = False) -> LossResult:
    """EP on inner products, or EP-D on distances when ``use_distance_form``.

    EP-D uses exp(-D) for the easiest positive and for the negatives; with
    ``spec.epd_literal_sign`` the negatives use exp(+D) instead.
    """
    require_pairs(B.labels)
    positive, negative = label_masks(B.labels)
    anchors = np.flatnonzero(positive.any(axis=1))

    if not use_distance_form:
        U, norms = unit_rows(B.embeddings)
        S = U @ U.T
        easiest = first_extreme(S[anchors], positive[anchors], largest=True)
        value, weights = _softmax_against_easiest(S, easiest, S, negative, anchors)
        G_S = np.zeros_like(S)
        G_S[anchors] = weights
        G_S[anchors, easiest] -= 1.0
        grad = unit_rows_backward((G_S + G_S.T) @ U, U, norms)
        return LossResult(value, grad)

    pairs = PairDistances(B.embeddings, Metric(spec.metric.kind, normalize_inputs=True))
    D = pairs.values
    sign = 1.0 if spec.epd_literal_sign else -1.0
    easiest = first_extreme(D[anchors], positive[anchors], largest=False)
    value, weights = _softmax_against_easiest(-D, easiest, sign * D, negative, anchors)
    G_D = np.zeros_like(D)
    G_D[anchors] = sign * np.where(negative[anchors], weights, 0.0)
    G_D[anchors, easiest] = 1.0 - weights[np.arange(anchors.size), easiest]
    return LossResult(value, pairs.backward(G_D))


class EasyPositiveLoss(LossBase):
    @property
    def name(self) -> str:
        return "ep"

    def compute(self, batch: Batch, spec: LossSpec, context: LossContext) -> LossResult:
        return loss_easy_positive(batch, spec, use_distance_form=False)


class EasyPositiveDistanceLoss(LossBase):
    @property
    def name(self) -> str:
        return "epd"

    def compute(self, batch: Batch, spec: LossSpec, context: LossContext) -> LossResult:
        return loss_easy_positive(batch, spec, use_distance_form=True)
