"""Distance weighted sampling.

Negatives are drawn with probability proportional to min(lambda, 1/q(d)), where
q(d) = d^(n-2) (1 - d^2/4)^((n-3)/2) is the density of pairwise distances
between uniform points on the unit sphere in n dimensions. Weights use
distances clamped below at ``dws_dmin``; candidates at clamped distance >= 2
lie outside the support of q and get weight zero. The hinge itself uses the
unclamped distances.
"""

import numpy as np

from ..core import Rng
from ..errors import UsageError
from .base import LossBase
from .common import (
    Batch,
    LossContext,
    LossResult,
    LossSpec,
    PairDistances,
    euclidean_on_sphere,
    label_masks,
    require_pairs,
)


def log_inverse_density(distances: np.ndarray, dim: int) -> np.ndarray:
    """-log q(d) for d in (0, 2); +inf outside the support."""
    inside = (distances > 0) & (distances < 2)
    safe = np.where(inside, distances, 1.0)
    log_q = (dim - 2) * np.log(safe) + ((dim - 3) / 2.0) * np.log(1.0 - 0.25 * safe * safe)
    return np.where(inside, -log_q, np.inf)


def negative_probabilities(D: np.ndarray, negative: np.ndarray, dim: int, spec: LossSpec) -> np.ndarray:
    """Row-stochastic sampling probabilities over negatives (zero rows where nothing is eligible)."""
    clamped = np.maximum(D, spec.dws_dmin)
    eligible = negative & (clamped < 2)
    log_weights = np.minimum(np.log(spec.dws_lambda), log_inverse_density(clamped, dim))
    log_weights = np.where(eligible, log_weights, -np.inf)
    row_max = np.max(log_weights, axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        weights = np.where(eligible, np.exp(log_weights - row_max), 0.0)
    totals = weights.sum(axis=1, keepdims=True)
    return np.divide(weights, totals, out=np.zeros_like(weights), where=totals > 0)


def draw_negative(probabilities: np.ndarray, rng: Rng) -> int:
    """Inverse-CDF draw; zero-probability entries are never returned."""
    cumulative = np.cumsum(probabilities)
    u = rng.random() * cumulative[-1]
    return int(min(np.searchsorted(cumulative, u, side="right"), probabilities.size - 1))


def loss_dws(B: Batch, spec: LossSpec, rng: Rng) -> LossResult:
    """Hinge over every (anchor, positive) pair with a distance-weighted negative."""
    require_pairs(B.labels)
    dim = B.embeddings.shape[1]
    pairs = PairDistances(B.embeddings, euclidean_on_sphere())
    D = pairs.values
    positive, negative = label_masks(B.labels)

    probabilities = negative_probabilities(D, negative, dim, spec)
    anchors, positives = np.nonzero(positive)
    starved = np.unique(anchors[probabilities[anchors].sum(axis=1) == 0])
    if starved.size:
        raise UsageError(
            f"Anchors {starved.tolist()} have no negative with non-zero sampling weight "
            f"(all clamped distances >= 2)"
        )

    negatives = np.array([draw_negative(probabilities[a], rng) for a in anchors], dtype=np.int64)
    hinge = spec.margin + D[anchors, positives] - D[anchors, negatives]
    active = hinge > 0

    G = np.zeros_like(D)
    np.add.at(G, (anchors[active], positives[active]), 1.0)
    np.add.at(G, (anchors[active], negatives[active]), -1.0)
    return LossResult(float(hinge[active].sum()), pairs.backward(G), int(active.sum()))


class DistanceWeightedLoss(LossBase):
    @property
    def name(self) -> str:
        return "dws"

    @property
    def needs_rng(self) -> bool:
        return True

    def compute(self, batch: Batch, spec: LossSpec, context: LossContext) -> LossResult:
        if context.rng is None:
            raise UsageError("Loss 'dws' needs a random seed")
        return loss_dws(batch, spec, context.rng)
