"""Gradient-descent optimizers over named parameter arrays."""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from . import config
from .errors import UsageError


class Optimizer(ABC):
    """Updates a dict of named arrays in place from a matching dict of gradients."""

    def __init__(self, lr: float):
        if not lr >= 0:
            raise UsageError(f"Learning rate must be non-negative, got {lr}")
        self.lr = float(lr)

    @property
    @abstractmethod
    def name(self) -> str:
        pass

    @abstractmethod
    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        pass


class SGD(Optimizer):
    @property
    def name(self) -> str:
        return "sgd"

    def step(self, params, grads):
        if self.lr == 0:
            return
        for k in params:
            params[k] -= self.lr * grads[k]


class Adam(Optimizer):
    """Adaptive moment estimation with bias-corrected first and second moments."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        super().__init__(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    @property
    def name(self) -> str:
        return "adam"

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t

        for k in params:
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            elif self.m[k].shape != params[k].shape:
                raise UsageError(f"Optimizer state for {k} has shape {self.m[k].shape}, parameter has {params[k].shape}")

            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * (g * g)

            # lr = 0 must leave parameters bitwise unchanged
            if self.lr == 0:
                continue
            denom = np.sqrt(self.v[k] / bc2) + self.epsilon
            params[k] -= (self.lr / bc1) * self.m[k] / denom


OPTIMIZERS = {"sgd": SGD, "adam": Adam}


def create_optimizer(name: str = config.OPTIMIZER, lr: float = config.LEARNING_RATE) -> Optimizer:
    optimizer_class = OPTIMIZERS.get(name.lower())
    if optimizer_class is None:
        raise UsageError(f"Unknown optimizer '{name}'. Expected one of: {', '.join(OPTIMIZERS)}")
    return optimizer_class(lr)
