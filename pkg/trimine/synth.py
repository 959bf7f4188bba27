"""Synthetic labeled datasets: isotropic Gaussian clusters, one per class."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import config
from .core import EmbeddingSet, Rng
from .errors import UsageError

logger = logging.getLogger(__name__)

_MEANS_STREAM = 0
_SAMPLES_STREAM = 1


@dataclass(frozen=True)
class SynthSpec:
    """Class means (c x d), per-class spreads and member counts."""

    means: np.ndarray
    sigmas: np.ndarray
    counts: np.ndarray
    seed: int = config.DEFAULT_SEED

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        sigmas = np.asarray(self.sigmas, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if means.ndim != 2 or means.shape[0] < 2:
            raise UsageError(f"Need a c x d matrix of at least two class means, got shape {means.shape}")
        c = means.shape[0]
        if sigmas.shape != (c,) or counts.shape != (c,):
            raise UsageError(f"Need {c} sigmas and {c} counts, got {sigmas.shape} and {counts.shape}")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(sigmas)) or np.any(sigmas <= 0):
            raise UsageError("Class means must be finite and sigmas finite and positive")
        if counts.min() < 2:
            raise UsageError(f"Every class needs at least 2 members, got counts {counts.tolist()}")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "counts", counts)

    @property
    def class_count(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def default_synth_spec(
    class_count: int = config.SYNTH_CLASSES,
    per_class: int = config.SYNTH_PER_CLASS,
    dim: int = config.SYNTH_DIM,
    separation: float = config.SYNTH_SEPARATION,
    sigma: float = config.SYNTH_SIGMA,
    wide_classes: int = config.SYNTH_WIDE_CLASSES,
    wide_factor: float = config.SYNTH_WIDE_FACTOR,
    seed: int = config.DEFAULT_SEED,
) -> SynthSpec:
    """Means on random unit directions scaled by ``separation``; the last ``wide_classes`` classes spread wider.

    When ``dim >= class_count`` the directions are orthonormal, so every pair
    of class means lies ``separation * sqrt(2)`` apart.
    """
    if not 0 <= wide_classes <= class_count:
        raise UsageError(f"wide_classes must lie in [0, {class_count}], got {wide_classes}")
    directions = Rng(seed).child(_MEANS_STREAM).standard_normal((class_count, dim))
    if dim >= class_count:
        directions = np.linalg.qr(directions.T)[0].T
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    sigmas = np.full(class_count, float(sigma))
    if wide_classes:
        sigmas[class_count - wide_classes:] *= wide_factor
    return SynthSpec(separation * directions / norms, sigmas, np.full(class_count, per_class), seed)


def gen_synthetic(spec: SynthSpec) -> EmbeddingSet:
    """Draw every class's members from N(mean_k, sigma_k^2 I), classes in label order."""
    rng = Rng(spec.seed).child(_SAMPLES_STREAM)
    vectors = [
        spec.means[k] + spec.sigmas[k] * rng.standard_normal((int(spec.counts[k]), spec.dim))
        for k in range(spec.class_count)
    ]
    labels = np.repeat(np.arange(spec.class_count), spec.counts)
    E = EmbeddingSet(np.vstack(vectors), labels, spec.class_count)
    logger.info(f"Generated {len(E)} points in {spec.dim} dimensions over {spec.class_count} classes")
    return E
