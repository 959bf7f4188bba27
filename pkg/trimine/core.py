"""Domain types, distance metrics and deterministic randomness shared by every module."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import UsageError


class MetricKind(str, Enum):
    SQUARED_EUCLIDEAN = "squared-euclidean"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class Metric:
    """Distance function D used for mining, losses and evaluation.

    With ``normalize_inputs`` the vectors are projected onto the unit sphere
    first, which bounds squared-euclidean distances to [0, 4] and euclidean
    distances to [0, 2].
    """

    kind: MetricKind = MetricKind.SQUARED_EUCLIDEAN
    normalize_inputs: bool = False

    @classmethod
    def parse(cls, text: str, normalize_inputs: bool = False) -> "Metric":
        try:
            return cls(MetricKind(text.lower()), normalize_inputs)
        except ValueError:
            choices = ", ".join(k.value for k in MetricKind)
            raise UsageError(f"Unknown metric '{text}'. Expected one of: {choices}") from None

    @property
    def squared(self) -> bool:
        return self.kind is MetricKind.SQUARED_EUCLIDEAN


class ExtremePolicy(str, Enum):
    """Pairing of easiest/hardest positive with easiest/hardest negative."""

    EPEN = "epen"
    EPHN = "ephn"
    HPEN = "hpen"
    HPHN = "hphn"
    ASSORTED = "assorted"

    @classmethod
    def parse(cls, text: str) -> "ExtremePolicy":
        name = text.strip().lower()
        if name == "bh":
            return cls.HPHN
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(p.value for p in cls)
            raise UsageError(f"Unknown policy '{text}'. Expected one of: {choices}") from None

    @property
    def hard_positive(self) -> bool:
        """True when the positive is the farthest same-class member."""
        self._require_resolved()
        return self in (ExtremePolicy.HPEN, ExtremePolicy.HPHN)

    @property
    def hard_negative(self) -> bool:
        """True when the negative is the nearest other-class member."""
        self._require_resolved()
        return self in (ExtremePolicy.EPHN, ExtremePolicy.HPHN)

    @classmethod
    def from_flags(cls, hard_positive: bool, hard_negative: bool) -> "ExtremePolicy":
        return _POLICY_BY_FLAGS[(bool(hard_positive), bool(hard_negative))]

    def _require_resolved(self):
        if self is ExtremePolicy.ASSORTED:
            raise UsageError("ASSORTED must be resolved to one of the four extreme cases first")


_POLICY_BY_FLAGS = {
    (False, False): ExtremePolicy.EPEN,
    (False, True): ExtremePolicy.EPHN,
    (True, False): ExtremePolicy.HPEN,
    (True, True): ExtremePolicy.HPHN,
}

# Order used when ASSORTED draws a case by integer
RESOLVED_POLICIES = (ExtremePolicy.EPEN, ExtremePolicy.EPHN, ExtremePolicy.HPEN, ExtremePolicy.HPHN)


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int
    policy: ExtremePolicy


@dataclass(frozen=True)
class BatchSpec:
    """Batch size ``b`` and per-class count ``w``."""

    batch_size: int
    per_class: int

    @classmethod
    def online(cls, batch_size: int, class_count: int) -> "BatchSpec":
        per_class = batch_size // class_count
        if per_class < 2:
            raise UsageError(
                f"Batch size {batch_size} gives {per_class} samples per class for "
                f"{class_count} classes; at least 2 are needed"
            )
        return cls(batch_size, per_class)

    @classmethod
    def offline(cls, triplet_count: int) -> "BatchSpec":
        if triplet_count < 1:
            raise UsageError("An offline batch needs at least one triplet")
        return cls(3 * triplet_count, 1)

    @property
    def triplet_count(self) -> int:
        return self.batch_size // 3


@dataclass(frozen=True)
class EmbeddingSet:
    """N x d float64 vectors with integer labels in [0, class_count).

    Arrays are made read-only on construction.
    """

    vectors: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        labels = np.array(self.labels, copy=True)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise UsageError(f"Embedding vectors must be a non-empty N x d matrix, got shape {vectors.shape}")
        if labels.ndim != 1 or labels.shape[0] != vectors.shape[0]:
            raise UsageError(
                f"Expected {vectors.shape[0]} labels, got an array of shape {labels.shape}"
            )
        if labels.dtype.kind not in "iu":
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise UsageError("Labels must be integers")
        labels = labels.astype(np.int64)
        class_count = int(self.class_count)
        if class_count < 1:
            raise UsageError(f"Class count must be positive, got {class_count}")
        if labels.min() < 0 or labels.max() >= class_count:
            raise UsageError(f"Labels must lie in [0, {class_count})")
        counts = np.bincount(labels, minlength=class_count)
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            raise UsageError(f"Classes without any member: {missing.tolist()}")
        if not np.all(np.isfinite(vectors)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(vectors), axis=1))[0])
            raise UsageError(f"Vector {bad} contains a non-finite value")
        vectors.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_count", class_count)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def subset(self, indices) -> "EmbeddingSet":
        indices = np.asarray(indices, dtype=np.int64)
        return EmbeddingSet(self.vectors[indices], self.labels[indices], self.class_count)

    def with_vectors(self, vectors: np.ndarray) -> "EmbeddingSet":
        """Same labels, new coordinates (e.g. after embedding through a model)."""
        return EmbeddingSet(vectors, self.labels, self.class_count)


class Rng:
    """Deterministic random stream.

    Uses numpy's PCG64 bit generator seeded through ``SeedSequence([seed, *keys])``,
    so identical (seed, keys) give identical sequences on every platform.
    Not thread-safe; give concurrent users their own ``child`` streams.
    """

    def __init__(self, seed: int, keys: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise UsageError(f"Seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.keys = tuple(int(k) for k in keys)
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *self.keys])))

    def child(self, *keys: int) -> "Rng":
        """Independent stream derived from this seed and ``keys``."""
        return Rng(self.seed, self.keys + tuple(keys))

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def random(self, size=None):
        return self.generator.random(size)

    def choice(self, a, size=None, replace=True, p=None):
        return self.generator.choice(a, size=size, replace=replace, p=p)

    def permutation(self, x):
        return self.generator.permutation(x)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def __repr__(self):
        return f"Rng(seed={self.seed}, keys={self.keys})"


def unit_rows(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project the rows of ``X`` onto the unit sphere.

    Returns:
        tuple: (normalized rows, row norms with shape (n, 1))
    """
    norms = np.sqrt(np.sum(X * X, axis=-1, keepdims=True))
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms.ravel() == 0)[0])
        raise UsageError(f"Row {bad} has zero norm; normalization is undefined")
    return X / norms, norms


def unit_rows_backward(grad_unit: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. normalized rows back to the raw rows."""
    radial = np.sum(grad_unit * unit, axis=-1, keepdims=True)
    return (grad_unit - unit * radial) / norms


def squared_row_norms(diff: np.ndarray) -> np.ndarray:
    """Sum of squares along the last axis.

    Shared by ``distance`` and the matrix builders so that both produce
    bit-identical values.
    """
    return np.sum(diff * diff, axis=-1)


def distance(u, v, metric: Metric = Metric()) -> float:
    """Distance between two vectors under ``metric``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or u.shape != v.shape:
        raise UsageError(f"Dimension mismatch: {u.shape} vs {v.shape}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise UsageError("Distance inputs must be finite")
    pair = np.stack([u, v])
    if metric.normalize_inputs:
        pair, _ = unit_rows(pair)
    squared = squared_row_norms(pair[1:2] - pair[0:1])
    if metric.squared:
        return float(squared[0])
    return float(np.sqrt(squared)[0])
