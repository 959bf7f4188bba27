"""Plain triplet hinge over explicit (anchor, positive, negative) rows, used by offline training."""

import numpy as np

from ..errors import UsageError
from .common import LossResult, LossSpec, PairDistances


def loss_triplet_hinge(embeddings: np.ndarray, anchors, positives, negatives, spec: LossSpec) -> LossResult:
    """Sum of [m + D(y_a, y_p) - D(y_a, y_n)]_+ over the given row triples."""
    anchors = np.asarray(anchors, dtype=np.int64)
    positives = np.asarray(positives, dtype=np.int64)
    negatives = np.asarray(negatives, dtype=np.int64)
    if not (anchors.shape == positives.shape == negatives.shape) or anchors.ndim != 1:
        raise UsageError("Anchor, positive and negative index lists must have equal length")
    pairs = PairDistances(np.asarray(embeddings, dtype=np.float64), spec.metric)
    D = pairs.values
    hinge = spec.margin + D[anchors, positives] - D[anchors, negatives]
    active = hinge > 0

    G = np.zeros_like(D)
    np.add.at(G, (anchors[active], positives[active]), 1.0)
    np.add.at(G, (anchors[active], negatives[active]), -1.0)
    return LossResult(float(hinge[active].sum()), pairs.backward(G), int(active.sum()))
