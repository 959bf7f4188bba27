"""Shared types and gradient helpers for the online mining losses."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .. import config
from ..core import BatchSpec, ExtremePolicy, Metric, MetricKind, Rng, unit_rows, unit_rows_backward
from ..errors import UsageError


class LossKind(str, Enum):
    BA = "ba"
    BSH = "bsh"
    HPHN = "hphn"
    NCA = "nca"
    PNCA = "pnca"
    EP = "ep"
    EP_D = "epd"
    DWS = "dws"
    EPEN = "epen"
    EPHN = "ephn"
    HPEN = "hpen"
    ASSORTED = "assorted"

    @classmethod
    def parse(cls, text: str) -> "LossKind":
        name = text.strip().lower().replace("_", "").replace("-", "")
        if name == "bh":
            return cls.HPHN
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise UsageError(f"Unknown loss '{text}'. Expected one of: {choices}") from None

    @property
    def policy(self) -> ExtremePolicy | None:
        """Extreme-distance policy for the five extreme kinds, else None."""
        try:
            return ExtremePolicy(self.value)
        except ValueError:
            return None


HINGE_KINDS = frozenset(
    {LossKind.BA, LossKind.BSH, LossKind.DWS, LossKind.EPEN, LossKind.EPHN, LossKind.HPEN, LossKind.HPHN, LossKind.ASSORTED}
)


@dataclass(frozen=True)
class LossSpec:
    """Loss choice and hyperparameters.

    ``metric`` is the distance D of the hinge and softmax forms. EP always
    works on inner products of normalized embeddings and DWS always on
    euclidean distances of normalized embeddings.
    """

    kind: LossKind = LossKind(config.DEFAULT_LOSS)
    margin: float = config.MARGIN
    dws_lambda: float = config.DWS_LAMBDA
    dws_dmin: float = config.DWS_DMIN
    proxy_momentum: float = config.PROXY_MOMENTUM
    metric: Metric = Metric()
    epd_literal_sign: bool = config.EPD_LITERAL_SIGN

    def __post_init__(self):
        if not self.margin >= 0:
            raise UsageError(f"Margin must be non-negative, got {self.margin}")
        if not self.dws_lambda > 0:
            raise UsageError(f"DWS lambda must be positive, got {self.dws_lambda}")
        if not self.dws_dmin >= 0:
            raise UsageError(f"DWS minimum distance must be non-negative, got {self.dws_dmin}")
        if not 0 <= self.proxy_momentum < 1:
            raise UsageError(f"Proxy momentum must lie in [0, 1), got {self.proxy_momentum}")


@dataclass(frozen=True)
class Batch:
    """A mini-batch of embeddings with labels.

    When ``structure`` is given, every class present must contribute exactly
    ``structure.per_class`` members.
    """

    embeddings: np.ndarray
    labels: np.ndarray
    structure: BatchSpec | None = None

    def __post_init__(self):
        embeddings = np.asarray(self.embeddings, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if embeddings.ndim != 2 or labels.shape != (embeddings.shape[0],):
            raise UsageError(
                f"Batch needs a b x d embedding matrix and b labels, got {embeddings.shape} and {labels.shape}"
            )
        if not np.all(np.isfinite(embeddings)):
            raise UsageError("Batch embeddings contain non-finite values")
        if self.structure is not None:
            classes, counts = np.unique(labels, return_counts=True)
            uneven = classes[counts != self.structure.per_class]
            if uneven.size:
                raise UsageError(
                    f"Classes {uneven.tolist()} do not have exactly {self.structure.per_class} members in the batch"
                )
            if embeddings.shape[0] != classes.size * self.structure.per_class:
                raise UsageError("Batch size does not match its structure")
        object.__setattr__(self, "embeddings", embeddings)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    def translated(self, offset) -> "Batch":
        return Batch(self.embeddings + np.asarray(offset, dtype=np.float64), self.labels, self.structure)


@dataclass(frozen=True)
class ProxyState:
    """One proxy per class, maintained as momentum-blended batch class means."""

    proxies: np.ndarray
    defined: np.ndarray

    @classmethod
    def empty(cls, class_count: int, dim: int) -> "ProxyState":
        return cls(np.zeros((class_count, dim)), np.zeros(class_count, dtype=bool))

    @property
    def initialized(self) -> bool:
        return bool(self.defined.any())

    @property
    def class_count(self) -> int:
        return self.proxies.shape[0]

    def proxy(self, class_id: int) -> np.ndarray:
        if not self.defined[class_id]:
            raise UsageError(f"No proxy for class {class_id}: it has not appeared in any batch yet")
        return self.proxies[class_id]

    def with_missing_from(self, means: dict[int, np.ndarray]) -> "ProxyState":
        """Define proxies of classes seen for the first time from their batch means."""
        missing = [k for k in means if not self.defined[k]]
        if not missing:
            return self
        proxies = self.proxies.copy()
        defined = self.defined.copy()
        for k in missing:
            proxies[k] = means[k]
            defined[k] = True
        return ProxyState(proxies, defined)

    def blended(self, means: dict[int, np.ndarray], momentum: float) -> "ProxyState":
        proxies = self.proxies.copy()
        defined = self.defined.copy()
        for k, mean in means.items():
            if defined[k]:
                proxies[k] = momentum * proxies[k] + (1.0 - momentum) * mean
            else:
                proxies[k] = mean
                defined[k] = True
        return ProxyState(proxies, defined)


@dataclass(frozen=True)
class LossResult:
    """Scalar loss, its gradient w.r.t. every batch embedding, and bookkeeping."""

    value: float
    grad: np.ndarray
    active_triplets: int = 0
    proxy_state: ProxyState | None = None


@dataclass
class LossContext:
    """Auxiliary inputs some losses need: proxies (PNCA) and randomness (DWS, ASSORTED)."""

    proxy_state: ProxyState | None = None
    rng: Rng | None = None
    draws: np.ndarray | None = None


class PairDistances:
    """All pairwise distances of a batch together with their backward pass."""

    def __init__(self, Y: np.ndarray, metric: Metric):
        self.metric = metric
        self.norms = None
        if metric.normalize_inputs:
            Y, self.norms = unit_rows(Y)
        self.points = Y
        diff = Y[:, None, :] - Y[None, :, :]
        squared = np.sum(diff * diff, axis=-1)
        self.values = squared if metric.squared else np.sqrt(squared)

    def backward(self, G: np.ndarray) -> np.ndarray:
        """Map dL/dD (b x b, any sparsity) to dL/dY."""
        if not self.metric.squared:
            with np.errstate(divide="ignore", invalid="ignore"):
                G = np.where(self.values > 0, G / (2.0 * self.values), 0.0)
        S = G + G.T
        grad = 2.0 * (S.sum(axis=1)[:, None] * self.points - S @ self.points)
        if self.norms is not None:
            grad = unit_rows_backward(grad, self.points, self.norms)
        return grad


class CrossDistances:
    """Distances from batch embeddings to fixed reference points (proxies)."""

    def __init__(self, Y: np.ndarray, refs: np.ndarray, metric: Metric):
        self.metric = metric
        self.norms = None
        if metric.normalize_inputs:
            Y, self.norms = unit_rows(Y)
            refs, _ = unit_rows(refs)
        self.points = Y
        self.refs = refs
        diff = Y[:, None, :] - refs[None, :, :]
        squared = np.sum(diff * diff, axis=-1)
        self.values = squared if metric.squared else np.sqrt(squared)

    def backward(self, G: np.ndarray) -> np.ndarray:
        if not self.metric.squared:
            with np.errstate(divide="ignore", invalid="ignore"):
                G = np.where(self.values > 0, G / (2.0 * self.values), 0.0)
        grad = 2.0 * (G.sum(axis=1)[:, None] * self.points - G @ self.refs)
        if self.norms is not None:
            grad = unit_rows_backward(grad, self.points, self.norms)
        return grad


def label_masks(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positive-pair mask (same class, not self) and negative mask (other class)."""
    same = labels[:, None] == labels[None, :]
    positive = same & ~np.eye(labels.shape[0], dtype=bool)
    return positive, ~same


def require_pairs(labels: np.ndarray):
    """At least two classes, and at least one class with two members."""
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise UsageError("A batch needs at least two classes to form negatives")
    if counts.max() < 2:
        raise UsageError("A batch needs a class with at least two members to form positives")


def require_positive_per_anchor(labels: np.ndarray):
    """Every class in the batch has at least two members."""
    require_pairs(labels)
    classes, counts = np.unique(labels, return_counts=True)
    small = classes[counts < 2]
    if small.size:
        raise UsageError(f"Classes {small.tolist()} have fewer than 2 members; their anchors have no positive")


def first_extreme(values: np.ndarray, allowed: np.ndarray, largest: bool) -> np.ndarray:
    """Row-wise arg-extreme over allowed entries; ties go to the lowest index."""
    if largest:
        return np.argmax(np.where(allowed, values, -np.inf), axis=1)
    return np.argmin(np.where(allowed, values, np.inf), axis=1)


def euclidean_on_sphere() -> Metric:
    return Metric(MetricKind.EUCLIDEAN, normalize_inputs=True)
