"""Offline triplet mining with extreme distances.

Every instance of the mined set is used once as an anchor. Its positive is
the nearest (easiest) or farthest (hardest) same-class instance and its
negative the farthest (easiest) or nearest (hardest) other-class instance,
ignoring candidates the outlier test excluded for that anchor.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import config
from .core import RESOLVED_POLICIES, EmbeddingSet, ExtremePolicy, Rng, Triplet
from .distance import DistanceMatrix, OutlierMask
from .errors import UsageError

logger = logging.getLogger(__name__)

NO_POSITIVE = "no_positive"
NO_NEGATIVE = "no_negative"


@dataclass(frozen=True)
class SkippedAnchor:
    anchor: int
    reason: str


@dataclass(frozen=True)
class TripletSet:
    """Mined triplets, one per eligible anchor, plus the anchors that were skipped."""

    triplets: tuple[Triplet, ...]
    source_policy: ExtremePolicy
    seed: int = 0
    skipped: tuple[SkippedAnchor, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.triplets)

    def __iter__(self):
        return iter(self.triplets)

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Anchor, positive and negative indices as int64 arrays."""
        if not self.triplets:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), empty.copy()
        table = np.array([(t.anchor, t.positive, t.negative) for t in self.triplets], dtype=np.int64)
        return table[:, 0], table[:, 1], table[:, 2]

    def policy_counts(self) -> dict[str, int]:
        counts = Counter(t.policy.value for t in self.triplets)
        return {p.value: counts.get(p.value, 0) for p in RESOLVED_POLICIES}


@dataclass(frozen=True)
class NegativeFrequencyMatrix:
    """``counts[i, j]``: triplets whose anchor has class i and whose negative has class j."""

    counts: np.ndarray

    @property
    def class_count(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def validate_triplets(T: TripletSet, E: EmbeddingSet, mask: OutlierMask | None = None):
    """Check the label invariants of every triplet against ``E``.

    Raises:
        UsageError: naming the first offending triplet
    """
    n = len(E)
    labels = E.labels
    for row, t in enumerate(T.triplets):
        if t.policy is ExtremePolicy.ASSORTED:
            raise UsageError(f"Triplet {row} has unresolved policy 'assorted'")
        for role, index in (("anchor", t.anchor), ("positive", t.positive), ("negative", t.negative)):
            if not 0 <= index < n:
                raise UsageError(f"Triplet {row}: {role} index {index} out of range for {n} instances")
        if t.anchor == t.positive:
            raise UsageError(f"Triplet {row}: anchor and positive are the same instance ({t.anchor})")
        if labels[t.anchor] != labels[t.positive]:
            raise UsageError(
                f"Triplet {row}: positive {t.positive} has label {labels[t.positive]}, "
                f"anchor {t.anchor} has label {labels[t.anchor]}"
            )
        if labels[t.anchor] == labels[t.negative]:
            raise UsageError(f"Triplet {row}: negative {t.negative} shares the anchor's label {labels[t.anchor]}")
        if mask is not None and (mask.excluded[t.anchor, t.positive] or mask.excluded[t.anchor, t.negative]):
            raise UsageError(f"Triplet {row} uses a candidate excluded by the outlier test")


def _assorted_cases(anchors: np.ndarray, rng: Rng, weights: np.ndarray) -> np.ndarray:
    # One stream per anchor keeps the draws independent of block size and order.
    return np.array([rng.child(int(a)).choice(4, p=weights) for a in anchors], dtype=np.int64)


def _normalize_weights(assorted_weights) -> np.ndarray:
    if assorted_weights is None:
        return np.full(4, 0.25)
    weights = np.asarray(assorted_weights, dtype=np.float64)
    if weights.shape != (4,) or np.any(weights < 0) or not np.isfinite(weights).all() or weights.sum() <= 0:
        raise UsageError("assorted_weights must be four non-negative numbers with a positive sum")
    return weights / weights.sum()


def mine_offline(
    E: EmbeddingSet,
    D: DistanceMatrix,
    mask: OutlierMask | None,
    policy: ExtremePolicy,
    rng: Rng | None = None,
    assorted_weights=None,
    block_rows: int = config.BLOCK_ROWS,
) -> TripletSet:
    """Mine one triplet per anchor from a full distance matrix.

    Args:
        E: Embedded mining set (labels are read from it)
        D: Distance matrix over ``E``
        mask: Outlier exclusions, or None to exclude nothing
        policy: Extreme case, or ASSORTED to draw one of the four per anchor
        rng: Seed source for ASSORTED draws (one derived stream per anchor)
        assorted_weights: Probabilities of EPEN, EPHN, HPEN, HPHN under ASSORTED
        block_rows: Anchors processed per vectorized block

    Returns:
        TripletSet: triplets in anchor order, with the skip report

    Raises:
        UsageError: on mismatched inputs, or when every anchor is skipped
    """
    n = len(E)
    if len(D) != n:
        raise UsageError(f"Distance matrix covers {len(D)} instances, embedding set has {n}")
    if mask is not None and mask.excluded.shape != (n, n):
        raise UsageError(f"Outlier mask shape {mask.excluded.shape} does not match {n} instances")
    if policy is ExtremePolicy.ASSORTED and rng is None:
        raise UsageError("The assorted policy needs a random seed")
    weights = _normalize_weights(assorted_weights)

    labels = E.labels
    values = D.values
    triplets: list[Triplet] = []
    skipped: list[SkippedAnchor] = []

    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        anchors = np.arange(start, stop)
        rows = values[start:stop]
        same = labels[start:stop, None] == labels[None, :]
        allowed = np.ones_like(same) if mask is None else ~mask.excluded[start:stop]
        not_self = anchors[:, None] != np.arange(n)[None, :]

        pos_ok = same & not_self & allowed
        neg_ok = ~same & allowed
        has_pos = pos_ok.any(axis=1)
        has_neg = neg_ok.any(axis=1)

        # argmin/argmax return the first hit, so ties go to the lowest index.
        easiest_pos = np.argmin(np.where(pos_ok, rows, np.inf), axis=1)
        hardest_pos = np.argmax(np.where(pos_ok, rows, -np.inf), axis=1)
        hardest_neg = np.argmin(np.where(neg_ok, rows, np.inf), axis=1)
        easiest_neg = np.argmax(np.where(neg_ok, rows, -np.inf), axis=1)

        if policy is ExtremePolicy.ASSORTED:
            cases = [RESOLVED_POLICIES[k] for k in _assorted_cases(anchors, rng, weights)]
        else:
            cases = [policy] * len(anchors)

        for offset, anchor in enumerate(anchors):
            if not has_pos[offset]:
                skipped.append(SkippedAnchor(int(anchor), NO_POSITIVE))
                continue
            if not has_neg[offset]:
                skipped.append(SkippedAnchor(int(anchor), NO_NEGATIVE))
                continue
            case = cases[offset]
            positive = hardest_pos[offset] if case.hard_positive else easiest_pos[offset]
            negative = hardest_neg[offset] if case.hard_negative else easiest_neg[offset]
            triplets.append(Triplet(int(anchor), int(positive), int(negative), case))

    if not triplets:
        raise UsageError(f"All {n} anchors were skipped; no positive or negative candidates remain")
    if skipped:
        logger.warning(f"Skipped {len(skipped)} of {n} anchors with no eligible positive or negative")
    result = TripletSet(tuple(triplets), policy, rng.seed if rng is not None else 0, tuple(skipped))
    logger.info(f"Mined {len(result)} {policy.value} triplets: {result.policy_counts()}")
    return result


def negative_frequency(T: TripletSet, E: EmbeddingSet) -> NegativeFrequencyMatrix:
    """Count which classes supply negatives for which anchor classes."""
    c = E.class_count
    counts = np.zeros((c, c), dtype=np.int64)
    anchors, _, negatives = T.index_arrays()
    if anchors.size == 0:
        return NegativeFrequencyMatrix(counts)
    n = len(E)
    if anchors.max() >= n or negatives.max() >= n or anchors.min() < 0 or negatives.min() < 0:
        raise UsageError(f"Triplet indices out of range for {n} instances")
    np.add.at(counts, (E.labels[anchors], E.labels[negatives]), 1)
    return NegativeFrequencyMatrix(counts)
