"""Training loops: classifier pretraining, online mining, and offline triplet training.

Every loop copies the parameters it is given and updates the copy batch by
batch, in batch order. Randomness comes from streams derived from the run
seed and keyed by (purpose, epoch[, batch]), so a rerun with the same seed
reproduces the loss history bitwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from . import config
from .core import BatchSpec, EmbeddingSet, Rng
from .errors import NumericError, UsageError
from .loss_manager import loss_and_grad
from .losses.common import Batch, LossKind, LossSpec, ProxyState
from .losses.hinge import loss_triplet_hinge
from .miner import TripletSet, validate_triplets
from .model import Head, ModelParams, backward, forward
from .optim import Optimizer
from .sampler import make_balanced_batches

logger = logging.getLogger(__name__)

# Stream tags for Rng.child
_SHUFFLE_STREAM = 0
_LOSS_STREAM = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = config.EPOCHS
    batch: BatchSpec | None = None  # None picks the mode default
    loss: LossSpec = field(default_factory=LossSpec)
    seed: int = config.DEFAULT_SEED
    classifier_batch_size: int = config.CLASSIFIER_BATCH_SIZE

    def __post_init__(self):
        if self.epochs < 1:
            raise UsageError(f"Epochs must be at least 1, got {self.epochs}")
        if self.classifier_batch_size < 1:
            raise UsageError(f"Classifier batch size must be positive, got {self.classifier_batch_size}")

    def online_batch(self, class_count: int) -> BatchSpec:
        return self.batch if self.batch is not None else BatchSpec.online(config.ONLINE_BATCH_SIZE, class_count)

    def offline_batch(self) -> BatchSpec:
        return self.batch if self.batch is not None else BatchSpec.offline(config.OFFLINE_TRIPLETS_PER_BATCH)


@dataclass(frozen=True)
class HistoryEntry:
    epoch: int
    batch: int
    loss: float


@dataclass
class TrainResult:
    params: ModelParams
    history: list[HistoryEntry]
    epoch_accuracy: list[float] = field(default_factory=list)

    def epoch_means(self) -> list[float]:
        """Mean batch loss of every epoch, in epoch order."""
        totals: dict[int, list[float]] = {}
        for entry in self.history:
            totals.setdefault(entry.epoch, []).append(entry.loss)
        return [float(np.mean(totals[e])) for e in sorted(totals)]


def _check_finite(value: float, grads: dict[str, np.ndarray], epoch: int, batch: int):
    if not np.isfinite(value):
        raise NumericError(f"Training diverged: loss is {value} at epoch {epoch}, batch {batch}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"Training diverged: gradient of {name} is not finite at epoch {epoch}, batch {batch}")


def _log_epoch(kind: str, epoch: int, result: TrainResult):
    logger.info(f"{kind} epoch {epoch}: mean loss {result.epoch_means()[-1]:.6g}")


def cross_entropy(scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the scores."""
    n = scores.shape[0]
    rows = np.arange(n)
    value = -float(np.mean(log_softmax(scores, axis=1)[rows, labels]))
    grad = softmax(scores, axis=1)
    grad[rows, labels] -= 1.0
    return value, grad / n


def classifier_accuracy(params: ModelParams, E: EmbeddingSet) -> float:
    scores, _ = forward(params, E.vectors, Head.CLASSIFIER)
    return float(np.mean(np.argmax(scores, axis=1) == E.labels))


def train_classifier(E_raw: EmbeddingSet, params: ModelParams, opt: Optimizer, cfg: TrainConfig) -> TrainResult:
    """Pretrain the trunk and classifier head with softmax cross-entropy on shuffled mini-batches."""
    if not params.has_classifier:
        raise UsageError("Classifier pretraining needs a model with a classifier head")
    if params.class_count != E_raw.class_count:
        raise UsageError(f"Model predicts {params.class_count} classes, dataset has {E_raw.class_count}")
    params = params.copy()
    root = Rng(cfg.seed)
    result = TrainResult(params, [])
    size = cfg.classifier_batch_size

    for epoch in range(cfg.epochs):
        order = root.child(_SHUFFLE_STREAM, epoch).permutation(len(E_raw))
        for j, start in enumerate(range(0, len(order), size)):
            idx = order[start:start + size]
            scores, cache = forward(params, E_raw.vectors[idx], Head.CLASSIFIER)
            value, grad_scores = cross_entropy(scores, E_raw.labels[idx])
            grads = backward(params, cache, grad_scores)
            _check_finite(value, grads, epoch, j)
            opt.step(params.tensors, grads)
            result.history.append(HistoryEntry(epoch, j, value))
        result.epoch_accuracy.append(classifier_accuracy(params, E_raw))
        logger.info(
            f"Classifier epoch {epoch}: mean cross-entropy {result.epoch_means()[-1]:.6g}, "
            f"accuracy {result.epoch_accuracy[-1]:.4f}"
        )
    return result


def train_online(E_raw: EmbeddingSet, params: ModelParams, opt: Optimizer, cfg: TrainConfig) -> TrainResult:
    """Train the embedding head with any online loss on class-balanced batches.

    Proxies (PNCA) are carried from batch to batch across epochs.
    """
    params = params.without_classifier()
    structure = cfg.online_batch(E_raw.class_count)
    root = Rng(cfg.seed)
    proxy_state = ProxyState.empty(E_raw.class_count, params.embedding_dim) if cfg.loss.kind is LossKind.PNCA else None
    result = TrainResult(params, [])

    for epoch in range(cfg.epochs):
        batches = make_balanced_batches(E_raw.labels, structure, root.child(_SHUFFLE_STREAM, epoch))
        for j, idx in enumerate(batches):
            Y, cache = forward(params, E_raw.vectors[idx])
            if not np.all(np.isfinite(Y)):
                raise NumericError(f"Training diverged: non-finite embeddings at epoch {epoch}, batch {j}")
            batch = Batch(Y, E_raw.labels[idx], structure)
            try:
                loss = loss_and_grad(batch, cfg.loss, proxy_state, rng=root.child(_LOSS_STREAM, epoch, j))
            except NumericError as e:
                raise NumericError(f"{e} at epoch {epoch}, batch {j}") from None
            if loss.proxy_state is not None:
                proxy_state = loss.proxy_state
            grads = backward(params, cache, loss.grad)
            _check_finite(loss.value, grads, epoch, j)
            opt.step(params.tensors, grads)
            result.history.append(HistoryEntry(epoch, j, loss.value))
            logger.debug(f"Epoch {epoch} batch {j}: loss {loss.value:.6g}, active {loss.active_triplets}")
        _log_epoch(f"Online {cfg.loss.kind.value}", epoch, result)
    return result


def train_offline(T: TripletSet, E_raw: EmbeddingSet, params: ModelParams, opt: Optimizer, cfg: TrainConfig) -> TrainResult:
    """Train the embedding head on pre-mined triplets with the plain triplet hinge.

    Triplet order is reshuffled every epoch; the last batch of an epoch may
    hold fewer triplets than the others.
    """
    if len(T) == 0:
        raise UsageError("Offline training needs at least one triplet")
    validate_triplets(T, E_raw)
    params = params.without_classifier()
    per_batch = cfg.offline_batch().triplet_count
    anchors, positives, negatives = T.index_arrays()
    root = Rng(cfg.seed)
    result = TrainResult(params, [])

    for epoch in range(cfg.epochs):
        order = root.child(_SHUFFLE_STREAM, epoch).permutation(len(T))
        for j, start in enumerate(range(0, len(order), per_batch)):
            chosen = order[start:start + per_batch]
            t = chosen.size
            rows = np.concatenate([anchors[chosen], positives[chosen], negatives[chosen]])
            Y, cache = forward(params, E_raw.vectors[rows])
            local = np.arange(t)
            loss = loss_triplet_hinge(Y, local, local + t, local + 2 * t, cfg.loss)
            grads = backward(params, cache, loss.grad)
            _check_finite(loss.value, grads, epoch, j)
            opt.step(params.tensors, grads)
            result.history.append(HistoryEntry(epoch, j, loss.value))
            logger.debug(f"Epoch {epoch} batch {j}: loss {loss.value:.6g}, active {loss.active_triplets}")
        _log_epoch("Offline", epoch, result)
    return result
