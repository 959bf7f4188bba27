"""Proxy-NCA: NCA against the proxies the batch embeddings are assigned to."""

import logging

import numpy as np

from ..errors import UsageError
from .base import LossBase
from .common import (
    Batch,
    CrossDistances,
    LossContext,
    LossResult,
    LossSpec,
    ProxyState,
    label_masks,
    require_pairs,
)
from .nca_loss import nca_terms

logger = logging.getLogger(__name__)


def class_means(B: Batch) -> dict[int, np.ndarray]:
    return {int(k): B.embeddings[B.labels == k].mean(axis=0) for k in np.unique(B.labels)}


def loss_proxy_nca(B: Batch, spec: LossSpec, state: ProxyState | None = None) -> tuple[LossResult, ProxyState]:
    """Evaluate Proxy-NCA and advance the proxy state.

    Every embedding y is assigned to its nearest proxy Pi(y). Each ordered
    (anchor, positive) pair contributes D(a, Pi(p)) + log sum_n exp(-D(a, Pi(n))).
    Proxies are state, so the gradient reaches the anchors only.

    Args:
        B: Mini-batch
        spec: Metric and proxy momentum
        state: Proxies from earlier batches; None starts from scratch

    Returns:
        tuple: (LossResult, proxies blended toward this batch's class means)
    """
    require_pairs(B.labels)
    dim = B.embeddings.shape[1]
    if state is None:
        state = ProxyState.empty(int(B.labels.max()) + 1, dim)
    if state.proxies.shape[1] != dim:
        raise UsageError(f"Proxies have dimension {state.proxies.shape[1]}, embeddings {dim}")
    if B.labels.max() >= state.class_count:
        raise UsageError(f"Label {int(B.labels.max())} has no proxy slot ({state.class_count} classes)")

    means = class_means(B)
    current = state.with_missing_from(means)
    if current is not state:
        logger.debug(f"Initialized proxies for classes {[k for k in means if not state.defined[k]]}")

    proxy_ids = np.flatnonzero(current.defined)
    cross = CrossDistances(B.embeddings, current.proxies[proxy_ids], spec.metric)
    assigned = np.argmin(cross.values, axis=1)

    # M[a, j] = D(y_a, Pi(y_j))
    M = cross.values[:, assigned]
    positive, negative = label_masks(B.labels)
    value, G_M = nca_terms(M, positive, negative)

    assignment = np.zeros_like(cross.values)
    assignment[np.arange(len(B)), assigned] = 1.0
    G_cross = G_M @ assignment
    result = LossResult(value, cross.backward(G_cross), proxy_state=current.blended(means, spec.proxy_momentum))
    return result, result.proxy_state


class ProxyNCALoss(LossBase):
    @property
    def name(self) -> str:
        return "pnca"

    @property
    def stateful(self) -> bool:
        return True

    def compute(self, batch: Batch, spec: LossSpec, context: LossContext) -> LossResult:
        result, _ = loss_proxy_nca(batch, spec, context.proxy_state)
        return result
