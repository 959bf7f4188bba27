"""Dataset, triplet and matrix file formats, and the X1 / X2 / test split.

The format is chosen from the file extension: ``.csv`` files are text, every
other extension uses the binary layout. Binary numbers are little-endian.

    TMDS  dataset   magic, version u32, N u64, d u32, c u32,
                    N x d float64 row-major, N x u32 labels
    TMTS  triplets  magic, version u32, count u64, seed u64, source policy u32,
                    count x (anchor, positive, negative, policy) u32
    TMMX  matrix    magic, version u32, rows u64, cols u64, rows x cols float64

CSV numbers are written with 17 significant digits so float64 values survive
a round trip.
"""

from __future__ import annotations

import csv
import logging
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import config
from .core import RESOLVED_POLICIES, EmbeddingSet, ExtremePolicy, Rng, Triplet
from .errors import FormatError, UsageError
from .miner import NegativeFrequencyMatrix, SkippedAnchor, TripletSet, validate_triplets

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DATASET_MAGIC = b"TMDS"
TRIPLETS_MAGIC = b"TMTS"
MATRIX_MAGIC = b"TMMX"

_DATASET_HEADER = struct.Struct("<4sIQII")
_TRIPLETS_HEADER = struct.Struct("<4sIQQI")
_MATRIX_HEADER = struct.Struct("<4sIQQ")

# Policy codes in the binary triplet format
_POLICY_CODES = {p: i for i, p in enumerate(RESOLVED_POLICIES + (ExtremePolicy.ASSORTED,))}
_POLICY_BY_CODE = {i: p for p, i in _POLICY_CODES.items()}


def is_csv(path) -> bool:
    return os.path.splitext(str(path))[1].lower() == ".csv"


def format_float(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# Binary helpers
# ---------------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except FileNotFoundError:
        raise UsageError(f"File not found: {path}") from None


def read_header(data: bytes, layout: struct.Struct, magic: bytes, path) -> tuple:
    """Unpack and check a binary header (magic and version)."""
    if len(data) < layout.size:
        raise FormatError(
            f"{path}: truncated header, expected {layout.size} bytes, found {len(data)}", offset=len(data)
        )
    fields = layout.unpack_from(data, 0)
    if fields[0] != magic:
        raise FormatError(f"{path}: bad magic {fields[0]!r}, expected {magic!r}", offset=0)
    if fields[1] != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {fields[1]}, expected {FORMAT_VERSION}", offset=4)
    return fields


def check_payload(data: bytes, offset: int, expected: int, path):
    actual = len(data) - offset
    if actual != expected:
        raise FormatError(
            f"{path}: payload length mismatch, expected {expected} bytes, found {actual}",
            offset=offset + min(actual, expected),
        )


def _write_bytes(path, chunks):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        for chunk in chunks:
            f.write(chunk)


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------

def read_csv(path) -> list[list[str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            return list(csv.reader(f))
    except FileNotFoundError:
        raise UsageError(f"File not found: {path}") from None


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _parse(value: str, kind, path, line: int):
    try:
        return kind(value)
    except ValueError:
        raise FormatError(f"{path}: cannot parse '{value}' as {kind.__name__}", line=line) from None


def _require_header(rows, expected_prefix: list[str], path):
    if not rows:
        raise FormatError(f"{path}: empty file, expected a header row", line=1)
    header = rows[0]
    if header[:len(expected_prefix)] != expected_prefix:
        raise FormatError(f"{path}: header {header} does not start with {expected_prefix}", line=1)
    return header


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

def save_dataset(E: EmbeddingSet, path):
    """Write an embedding set (binary TMDS, or CSV ``label,f0..f{d-1}``)."""
    if is_csv(path):
        header = ["label"] + [f"f{j}" for j in range(E.dim)]
        rows = ([str(int(label))] + [format_float(x) for x in vector]
                for label, vector in zip(E.labels, E.vectors))
        write_csv(path, header, rows)
    else:
        n, d = E.vectors.shape
        _write_bytes(path, [
            _DATASET_HEADER.pack(DATASET_MAGIC, FORMAT_VERSION, n, d, E.class_count),
            E.vectors.astype("<f8").tobytes(order="C"),
            E.labels.astype("<u4").tobytes(),
        ])
    logger.info(f"Saved dataset of {len(E)} x {E.dim} ({E.class_count} classes) to {path}")


def load_dataset(path, class_count: int | None = None) -> EmbeddingSet:
    """Read and validate an embedding set.

    CSV files carry no class count; it defaults to the largest label + 1.
    """
    if is_csv(path):
        return _load_dataset_csv(path, class_count)
    data = _read_bytes(path)
    _, _, n, d, c = read_header(data, _DATASET_HEADER, DATASET_MAGIC, path)
    for name, value, field_offset in (("N", n, 8), ("d", d, 16), ("c", c, 20)):
        if value == 0:
            raise FormatError(f"{path}: header declares {name} = 0", offset=field_offset)
    offset = _DATASET_HEADER.size
    check_payload(data, offset, n * d * 8 + n * 4, path)
    vectors = np.frombuffer(data, dtype="<f8", count=n * d, offset=offset).reshape(n, d)
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=offset + n * d * 8)
    if n and labels.max() >= c:
        bad = int(np.flatnonzero(labels >= c)[0])
        raise FormatError(f"{path}: label {int(labels[bad])} is not below class count {c}",
                          offset=offset + n * d * 8 + 4 * bad)
    return EmbeddingSet(vectors.astype(np.float64), labels.astype(np.int64), c if class_count is None else class_count)


def _load_dataset_csv(path, class_count):
    rows = read_csv(path)
    header = _require_header(rows, ["label"], path)
    d = len(header) - 1
    if d < 1 or header[1:] != [f"f{j}" for j in range(d)]:
        raise FormatError(f"{path}: expected feature columns f0..f{{d-1}}", line=1)
    labels, vectors = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != d + 1:
            raise FormatError(f"{path}: expected {d + 1} fields, found {len(row)}", line=line)
        labels.append(_parse(row[0], int, path, line))
        vectors.append([_parse(x, float, path, line) for x in row[1:]])
    if not labels:
        raise FormatError(f"{path}: no data rows", line=2)
    c = class_count if class_count is not None else max(labels) + 1
    return EmbeddingSet(np.array(vectors, dtype=np.float64), np.array(labels, dtype=np.int64), c)


# ---------------------------------------------------------------------------
# Triplets
# ---------------------------------------------------------------------------

def save_triplets(T: TripletSet, path):
    """Write a triplet set (binary TMTS, or CSV ``anchor,positive,negative,policy``)."""
    if is_csv(path):
        rows = ([t.anchor, t.positive, t.negative, t.policy.value] for t in T.triplets)
        write_csv(path, ["anchor", "positive", "negative", "policy"], rows)
    else:
        table = np.array(
            [(t.anchor, t.positive, t.negative, _POLICY_CODES[t.policy]) for t in T.triplets],
            dtype="<u4",
        ).reshape(-1, 4)
        _write_bytes(path, [
            _TRIPLETS_HEADER.pack(TRIPLETS_MAGIC, FORMAT_VERSION, len(T), T.seed, _POLICY_CODES[T.source_policy]),
            table.tobytes(order="C"),
        ])
    logger.info(f"Saved {len(T)} triplets to {path}")


def load_triplets(path, E: EmbeddingSet | None = None) -> TripletSet:
    """Read a triplet set; when ``E`` is given every triplet is validated against its labels.

    CSV files do not record the mining seed or source policy; the policy is
    the common policy of all rows, or assorted when they differ.
    """
    if is_csv(path):
        T = _load_triplets_csv(path)
    else:
        data = _read_bytes(path)
        _, _, count, seed, source = read_header(data, _TRIPLETS_HEADER, TRIPLETS_MAGIC, path)
        offset = _TRIPLETS_HEADER.size
        check_payload(data, offset, count * 16, path)
        table = np.frombuffer(data, dtype="<u4", count=count * 4, offset=offset).reshape(count, 4)
        codes = set(_POLICY_BY_CODE)
        if source not in codes:
            raise FormatError(f"{path}: unknown source policy code {source}", offset=offset - 4)
        triplets = []
        for row, (a, p, n, code) in enumerate(table.tolist()):
            if code not in codes:
                raise FormatError(f"{path}: unknown policy code {code}", offset=offset + 16 * row + 12)
            triplets.append(Triplet(a, p, n, _POLICY_BY_CODE[code]))
        T = TripletSet(tuple(triplets), _POLICY_BY_CODE[source], seed)
    if E is not None:
        validate_triplets(T, E)
    return T


def _load_triplets_csv(path) -> TripletSet:
    rows = read_csv(path)
    _require_header(rows, ["anchor", "positive", "negative", "policy"], path)
    triplets = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise FormatError(f"{path}: expected 4 fields, found {len(row)}", line=line)
        a, p, n = (_parse(x, int, path, line) for x in row[:3])
        try:
            policy = ExtremePolicy.parse(row[3])
        except UsageError as e:
            raise FormatError(f"{path}: {e}", line=line) from None
        triplets.append(Triplet(a, p, n, policy))
    policies = {t.policy for t in triplets}
    source = policies.pop() if len(policies) == 1 else ExtremePolicy.ASSORTED
    return TripletSet(tuple(triplets), source)


def save_skip_report(skipped: tuple[SkippedAnchor, ...], path):
    write_csv(path, ["anchor", "reason"], ([s.anchor, s.reason] for s in skipped))


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------

def save_matrix(values: np.ndarray, path, corner: str = "index"):
    """Write a 2-D matrix (binary TMMX, or CSV with id header row and id column)."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise UsageError(f"Expected a 2-D matrix, got shape {values.shape}")
    if is_csv(path):
        fmt = str if values.dtype.kind in "iu" else format_float
        header = [corner] + [str(j) for j in range(values.shape[1])]
        rows = ([str(i)] + [fmt(x) for x in row] for i, row in enumerate(values.tolist()))
        write_csv(path, header, rows)
    else:
        rows, cols = values.shape
        _write_bytes(path, [
            _MATRIX_HEADER.pack(MATRIX_MAGIC, FORMAT_VERSION, rows, cols),
            values.astype("<f8").tobytes(order="C"),
        ])


def load_matrix(path) -> np.ndarray:
    if is_csv(path):
        rows = read_csv(path)
        if not rows:
            raise FormatError(f"{path}: empty file, expected a header row", line=1)
        cols = len(rows[0]) - 1
        if rows[0][1:] != [str(j) for j in range(cols)]:
            raise FormatError(f"{path}: header must list column ids 0..{cols - 1}", line=1)
        values = []
        for line, row in enumerate(rows[1:], start=2):
            if len(row) != cols + 1 or row[0] != str(line - 2):
                raise FormatError(f"{path}: expected row id {line - 2} followed by {cols} values", line=line)
            values.append([_parse(x, float, path, line) for x in row[1:]])
        return np.array(values, dtype=np.float64).reshape(len(values), cols)
    data = _read_bytes(path)
    _, _, rows, cols = read_header(data, _MATRIX_HEADER, MATRIX_MAGIC, path)
    offset = _MATRIX_HEADER.size
    check_payload(data, offset, rows * cols * 8, path)
    return np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols).copy()


def save_negative_frequency(F: NegativeFrequencyMatrix, path):
    save_matrix(F.counts, path, corner="class")


def load_negative_frequency(path) -> NegativeFrequencyMatrix:
    values = load_matrix(path)
    return NegativeFrequencyMatrix(values.astype(np.int64))


def save_history(history, path):
    """Write a learning curve as CSV ``epoch,batch,loss``."""
    write_csv(path, ["epoch", "batch", "loss"], ([h.epoch, h.batch, format_float(h.loss)] for h in history))


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Fractions for X1 (feature space), X2 (mining) and the test set."""

    fractions: tuple[float, float, float] = config.SPLIT_FRACTIONS
    seed: int = config.DEFAULT_SEED
    stratified: bool = True

    def __post_init__(self):
        fractions = tuple(float(f) for f in self.fractions)
        if len(fractions) != 3 or any(not 0 < f < 1 for f in fractions):
            raise UsageError(f"Split fractions must be three numbers in (0, 1), got {self.fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise UsageError(f"Split fractions must sum to 1, got {sum(fractions)}")
        object.__setattr__(self, "fractions", fractions)


@dataclass(frozen=True)
class SplitResult:
    parts: tuple[EmbeddingSet, EmbeddingSet, EmbeddingSet]
    indices: tuple[np.ndarray, np.ndarray, np.ndarray]


PART_NAMES = ("x1", "x2", "test")


def _part_sizes(n: int, fractions) -> tuple[int, int, int]:
    n1 = int(np.floor(fractions[0] * n + 0.5))
    n2 = int(np.floor(fractions[1] * n + 0.5))
    return n1, n2, n - n1 - n2


def split(E: EmbeddingSet, spec: SplitSpec = SplitSpec(), rng: Rng | None = None) -> SplitResult:
    """Partition ``E`` into disjoint X1, X2 and test sets.

    Raises:
        UsageError: naming the first class that would keep fewer than 2 members in some part
    """
    rng = rng if rng is not None else Rng(spec.seed)
    labels = E.labels
    parts: list[list[np.ndarray]] = [[], [], []]
    if spec.stratified:
        for k in range(E.class_count):
            members = rng.permutation(np.flatnonzero(labels == k))
            sizes = _part_sizes(members.size, spec.fractions)
            if min(sizes) < 2:
                raise UsageError(
                    f"Class {k} has {members.size} members; a stratified split needs at least 2 per part "
                    f"(would get {sizes})"
                )
            bounds = np.cumsum((0,) + sizes)
            for j in range(3):
                parts[j].append(members[bounds[j]:bounds[j + 1]])
    else:
        order = rng.permutation(len(E))
        bounds = np.cumsum((0,) + _part_sizes(len(E), spec.fractions))
        for j in range(3):
            parts[j].append(order[bounds[j]:bounds[j + 1]])

    indices = tuple(np.sort(np.concatenate(p)) for p in parts)
    for name, idx in zip(PART_NAMES, indices):
        counts = np.bincount(labels[idx], minlength=E.class_count)
        if counts.min() < 2:
            k = int(np.argmin(counts))
            raise UsageError(f"Class {k} would keep only {counts[k]} member(s) in part {name}")
    result = SplitResult(tuple(E.subset(idx) for idx in indices), indices)
    logger.info(f"Split {len(E)} instances into {[len(p) for p in result.parts]}")
    return result
