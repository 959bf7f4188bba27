"""Feed-forward embedding model with an optional classifier head.

The trunk maps d_in inputs through tanh hidden layers to an affine
embedding layer. The classifier head is an affine c x k map on top of the
embedding; its input is the one-to-last representation used as the feature
space for offline mining.

Parameters live in a flat dict of named arrays (``layer0.weight``,
``layer0.bias``, ..., ``classifier.weight``, ``classifier.bias``) so that
optimizers and gradient checks can walk them uniformly. Weights are stored
out x in and applied as ``X @ W.T + b``.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import config
from .core import Rng
from .dataio import FORMAT_VERSION, check_payload, read_header
from .errors import FormatError, UsageError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"TMMP"
# magic, version, affine layer count, classifier flag
_CHECKPOINT_HEADER = struct.Struct("<4sIII")
_LAYER_DIMS = struct.Struct("<II")

CLASSIFIER = "classifier"


class Head(str, Enum):
    EMBEDDING = "embedding"
    CLASSIFIER = "classifier"


@dataclass
class ModelParams:
    """Named weight and bias arrays of the trunk and the optional classifier head.

    ``layer_sizes`` is (d_in, hidden..., k); ``class_count`` is 0 when there
    is no classifier head.
    """

    tensors: dict[str, np.ndarray]
    layer_sizes: tuple[int, ...]
    class_count: int = 0

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise UsageError(f"Layer sizes need an input and an output width, got {self.layer_sizes}")
        expected = dict(_expected_shapes(self.layer_sizes, self.class_count))
        if set(expected) != set(self.tensors):
            raise UsageError(f"Parameter names {sorted(self.tensors)} do not match {sorted(expected)}")
        for name, shape in expected.items():
            array = self.tensors[name]
            if array.shape != shape:
                raise UsageError(f"Parameter {name} has shape {array.shape}, expected {shape}")
            if not np.all(np.isfinite(array)):
                raise UsageError(f"Parameter {name} contains non-finite values")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def embedding_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def trunk_depth(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def has_classifier(self) -> bool:
        return self.class_count > 0

    def names(self) -> list[str]:
        return [name for name, _ in _expected_shapes(self.layer_sizes, self.class_count)]

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()}, self.layer_sizes, self.class_count)

    def without_classifier(self) -> "ModelParams":
        tensors = {k: v.copy() for k, v in self.tensors.items() if not k.startswith(CLASSIFIER)}
        return ModelParams(tensors, self.layer_sizes, 0)


def _expected_shapes(layer_sizes, class_count):
    for i in range(len(layer_sizes) - 1):
        yield f"layer{i}.weight", (layer_sizes[i + 1], layer_sizes[i])
        yield f"layer{i}.bias", (layer_sizes[i + 1],)
    if class_count > 0:
        yield f"{CLASSIFIER}.weight", (class_count, layer_sizes[-1])
        yield f"{CLASSIFIER}.bias", (class_count,)


def init_params(
    input_dim: int,
    rng: Rng,
    hidden_widths: tuple[int, ...] = config.HIDDEN_WIDTHS,
    embedding_dim: int = config.EMBEDDING_DIM,
    class_count: int = 0,
) -> ModelParams:
    """Fresh parameters: weights ~ N(0, 1/fan_in), biases zero."""
    layer_sizes = (int(input_dim), *(int(h) for h in hidden_widths), int(embedding_dim))
    tensors = {}
    for name, shape in _expected_shapes(layer_sizes, class_count):
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.standard_normal(shape) / np.sqrt(shape[1])
    return ModelParams(tensors, layer_sizes, class_count)


@dataclass
class ForwardCache:
    """Layer inputs and tanh outputs kept for backpropagation."""

    inputs: list[np.ndarray]
    activations: list[np.ndarray | None]
    head: Head


def forward(params: ModelParams, X: np.ndarray, head: Head | str = Head.EMBEDDING) -> tuple[np.ndarray, ForwardCache]:
    """Run the model on the rows of ``X``.

    Returns:
        tuple: (n x k embeddings or n x c class scores, cache for ``backward``)
    """
    head = Head(head)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise UsageError(f"Model expects n x {params.input_dim} inputs, got shape {X.shape}")
    if head is Head.CLASSIFIER and not params.has_classifier:
        raise UsageError("Model has no classifier head")

    inputs, activations = [], []
    H = X
    depth = params.trunk_depth
    for i in range(depth):
        inputs.append(H)
        Z = H @ params.tensors[f"layer{i}.weight"].T + params.tensors[f"layer{i}.bias"]
        if i < depth - 1:
            H = np.tanh(Z)
            activations.append(H)
        else:
            H = Z
            activations.append(None)
    if head is Head.CLASSIFIER:
        inputs.append(H)
        H = H @ params.tensors[f"{CLASSIFIER}.weight"].T + params.tensors[f"{CLASSIFIER}.bias"]
    return H, ForwardCache(inputs, activations, head)


def backward(params: ModelParams, cache: ForwardCache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every named parameter, given dL/d(output).

    Parameters the forward pass did not touch (the classifier head under the
    embedding head) get zero gradients.
    """
    grads = {name: np.zeros_like(array) for name, array in params.tensors.items()}
    G = np.asarray(grad_out, dtype=np.float64)
    inputs = list(cache.inputs)

    if cache.head is Head.CLASSIFIER:
        H = inputs.pop()
        grads[f"{CLASSIFIER}.weight"] = G.T @ H
        grads[f"{CLASSIFIER}.bias"] = G.sum(axis=0)
        G = G @ params.tensors[f"{CLASSIFIER}.weight"]

    for i in reversed(range(params.trunk_depth)):
        H = inputs[i]
        if cache.activations[i] is not None:
            A = cache.activations[i]
            G = G * (1.0 - A * A)
        grads[f"layer{i}.weight"] = G.T @ H
        grads[f"layer{i}.bias"] = G.sum(axis=0)
        if i > 0:
            G = G @ params.tensors[f"layer{i}.weight"]
    return grads


def embed(params: ModelParams, X: np.ndarray) -> np.ndarray:
    """Embedding-head output (the one-to-last layer of a classifier)."""
    Y, _ = forward(params, X, Head.EMBEDDING)
    return Y


def save_checkpoint(params: ModelParams, path):
    """Write parameters as TMMP: header, per-layer (rows, cols), then weights and biases as float64."""
    sizes = params.layer_sizes
    layers = [(f"layer{i}", sizes[i + 1], sizes[i]) for i in range(params.trunk_depth)]
    if params.has_classifier:
        layers.append((CLASSIFIER, params.class_count, sizes[-1]))
    chunks = [_CHECKPOINT_HEADER.pack(CHECKPOINT_MAGIC, FORMAT_VERSION, len(layers), int(params.has_classifier))]
    chunks += [_LAYER_DIMS.pack(rows, cols) for _, rows, cols in layers]
    for prefix, _, _ in layers:
        chunks.append(params.tensors[f"{prefix}.weight"].astype("<f8").tobytes(order="C"))
        chunks.append(params.tensors[f"{prefix}.bias"].astype("<f8").tobytes())
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        for chunk in chunks:
            f.write(chunk)
    logger.info(f"Saved model {sizes} (classes={params.class_count}) to {path}")


def load_checkpoint(path) -> ModelParams:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        raise UsageError(f"Checkpoint not found: {path}") from None
    _, _, layer_count, has_classifier = read_header(data, _CHECKPOINT_HEADER, CHECKPOINT_MAGIC, path)
    if has_classifier not in (0, 1) or layer_count < 1 + has_classifier:
        raise FormatError(f"{path}: inconsistent layer count {layer_count} / classifier flag {has_classifier}",
                          offset=8)
    offset = _CHECKPOINT_HEADER.size
    dims_end = offset + layer_count * _LAYER_DIMS.size
    if len(data) < dims_end:
        raise FormatError(f"{path}: truncated layer table, expected {dims_end} bytes, found {len(data)}",
                          offset=len(data))
    dims = [_LAYER_DIMS.unpack_from(data, offset + j * _LAYER_DIMS.size) for j in range(layer_count)]
    trunk = dims[:layer_count - has_classifier]
    for j in range(1, len(trunk)):
        if trunk[j][1] != trunk[j - 1][0]:
            raise FormatError(f"{path}: layer {j} expects {trunk[j][1]} inputs, previous layer has {trunk[j - 1][0]}",
                              offset=offset + j * _LAYER_DIMS.size)
    if has_classifier and dims[-1][1] != trunk[-1][0]:
        raise FormatError(f"{path}: classifier width does not match the embedding width",
                          offset=dims_end - _LAYER_DIMS.size)
    check_payload(data, dims_end, sum(rows * cols * 8 + rows * 8 for rows, cols in dims), path)

    names = [f"layer{j}" for j in range(len(trunk))] + ([CLASSIFIER] if has_classifier else [])
    tensors = {}
    position = dims_end
    for prefix, (rows, cols) in zip(names, dims):
        tensors[f"{prefix}.weight"] = np.frombuffer(data, "<f8", rows * cols, position).reshape(rows, cols).copy()
        position += rows * cols * 8
        tensors[f"{prefix}.bias"] = np.frombuffer(data, "<f8", rows, position).copy()
        position += rows * 8
    layer_sizes = (trunk[0][1], *(rows for rows, _ in trunk))
    return ModelParams(tensors, layer_sizes, dims[-1][0] if has_classifier else 0)
