"""Recall@k, nearest-neighbor accuracy and top-k retrieval.

Rankings sort gallery members by ascending distance with a stable sort, so
equal distances are ordered by gallery index. In the default protocol every
query ranks the rest of its own set (itself excluded); with an external
gallery nothing is excluded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import config
from .core import EmbeddingSet, Metric
from .dataio import format_float, write_csv
from .distance import pairwise_between
from .errors import UsageError
from .model import ModelParams, embed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalReport:
    recall_at: dict[int, float]
    nn_accuracy: float
    query_count: int

    def rows(self) -> list[tuple[str, int, float]]:
        """(metric, k, value) rows in rank order, accuracy last."""
        rows = [("recall", k, v) for k, v in sorted(self.recall_at.items())]
        rows.append(("nn_accuracy", 1, self.nn_accuracy))
        return rows


@dataclass(frozen=True)
class RetrievalHit:
    index: int
    label: int
    distance: float


def parse_ranks(text: str) -> tuple[int, ...]:
    """Parse a comma-separated rank list such as ``1,4,8,16``."""
    try:
        ks = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise UsageError(f"Ranks must be comma-separated integers, got '{text}'") from None
    if not ks or min(ks) < 1:
        raise UsageError(f"Ranks must be positive integers, got '{text}'")
    return ks


def _ranked(D: np.ndarray, limit: int) -> np.ndarray:
    return np.argsort(D, axis=1, kind="stable")[:, :limit]


def recall_at_k(
    E: EmbeddingSet,
    ks=config.RECALL_RANKS,
    metric: Metric = Metric(),
    gallery: EmbeddingSet | None = None,
    block_rows: int = config.BLOCK_ROWS,
) -> EvalReport:
    """Fraction of queries with a same-class member among their k nearest gallery members.

    Args:
        E: Queries (and the gallery, minus each query itself, when ``gallery`` is None)
        ks: Ranks to report
        metric: Distance used for ranking
        gallery: External gallery; when given no member is excluded

    Raises:
        UsageError: If some k exceeds the gallery size available to a query
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] < 1:
        raise UsageError(f"Ranks must be positive integers, got {ks}")
    target = E if gallery is None else gallery
    available = len(E) - 1 if gallery is None else len(gallery)
    if ks[-1] > available:
        raise UsageError(f"Rank {ks[-1]} exceeds the {available} gallery members available per query")
    if gallery is not None and gallery.dim != E.dim:
        raise UsageError(f"Dimension mismatch: queries have d={E.dim}, gallery has d={gallery.dim}")

    limit = ks[-1]
    first_hit = np.empty(len(E), dtype=np.float64)
    for start in range(0, len(E), block_rows):
        stop = min(start + block_rows, len(E))
        D = pairwise_between(E.vectors[start:stop], target.vectors, metric)
        if gallery is None:
            rows = np.arange(stop - start)
            D[rows, rows + start] = np.inf
        order = _ranked(D, limit)
        hits = target.labels[order] == E.labels[start:stop, None]
        first_hit[start:stop] = np.where(hits.any(axis=1), np.argmax(hits, axis=1), np.inf)

    recall_at = {k: float(np.mean(first_hit < k)) for k in ks}
    report = EvalReport(recall_at, float(np.mean(first_hit == 0)), len(E))
    logger.info(f"Evaluated {len(E)} queries: {recall_at}")
    return report


def retrieve_topk(E_gallery: EmbeddingSet, query_vector, k: int = config.RETRIEVAL_TOP, metric: Metric = Metric()) -> list[RetrievalHit]:
    """The k gallery members nearest to ``query_vector``, nearest first."""
    if not 1 <= k <= len(E_gallery):
        raise UsageError(f"k must lie in [1, {len(E_gallery)}], got {k}")
    query = np.asarray(query_vector, dtype=np.float64)
    if query.shape != (E_gallery.dim,):
        raise UsageError(f"Query must be a vector of length {E_gallery.dim}, got shape {query.shape}")
    D = pairwise_between(query[None, :], E_gallery.vectors, metric)
    order = _ranked(D, k)[0]
    return [RetrievalHit(int(j), int(E_gallery.labels[j]), float(D[0, j])) for j in order]


def evaluate_model(
    params: ModelParams,
    dataset: EmbeddingSet,
    ks=config.RECALL_RANKS,
    metric: Metric = Metric(),
    gallery: EmbeddingSet | None = None,
) -> EvalReport:
    """Embed ``dataset`` (and ``gallery``) through ``params`` and evaluate."""
    embedded = dataset.with_vectors(embed(params, dataset.vectors))
    embedded_gallery = None if gallery is None else gallery.with_vectors(embed(params, gallery.vectors))
    return recall_at_k(embedded, ks, metric, embedded_gallery)


def save_eval_reports(reports: dict[str, EvalReport], path):
    """Write ``split,metric,k,value`` rows, one block per evaluated split."""
    rows = ([split, m, k, format_float(v)] for split, report in reports.items() for m, k, v in report.rows())
    write_csv(path, ["split", "metric", "k", "value"], rows)
