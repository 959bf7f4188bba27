"""Class-balanced mini-batches for online mining."""

import logging

import numpy as np

from .core import BatchSpec, Rng
from .errors import UsageError

logger = logging.getLogger(__name__)


def make_balanced_batches(labels: np.ndarray, spec: BatchSpec, rng: Rng) -> list[np.ndarray]:
    """
    Split one epoch of indices into batches holding ``spec.per_class`` members of every class.

    Each class is shuffled and cut into chunks of w; the number of batches is
    set by the smallest class, and members that cannot fill a complete batch
    are dropped for this epoch.

    Args:
        labels: Integer label per instance
        spec: Batch structure (only ``per_class`` is used)
        rng: Epoch random stream

    Returns:
        list[np.ndarray]: Index batches, rows grouped by class in ascending label order

    Raises:
        UsageError: If some class has fewer than w members
    """
    labels = np.asarray(labels)
    w = spec.per_class
    classes = np.unique(labels)
    members = [np.flatnonzero(labels == k) for k in classes]
    small = [int(k) for k, m in zip(classes, members) if m.size < w]
    if small:
        raise UsageError(f"Classes {small} have fewer than {w} members; cannot fill a balanced batch")

    count = min(m.size // w for m in members)
    shuffled = [rng.permutation(m)[:count * w].reshape(count, w) for m in members]
    batches = [np.concatenate([s[j] for s in shuffled]) for j in range(count)]

    dropped = labels.size - count * w * classes.size
    if dropped:
        logger.warning(f"Dropped {dropped} indices that could not fill a complete batch")
    logger.debug(f"Built {count} batches of {w} x {classes.size}")
    return batches
