"""Loss plugin discovery and dispatch for trimine."""

import importlib
import inspect
import logging
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import Rng
from .errors import NumericError, UsageError
from .losses.base import LossBase
from .losses.common import Batch, LossContext, LossKind, LossResult, LossSpec, ProxyState

logger = logging.getLogger(__name__)


class LossManager:
    """
    Discovers, loads, and manages the available loss functions.

    Every module matching ``losses/*_loss.py`` is imported and each concrete
    ``LossBase`` subclass it defines is registered under its ``name``.
    """

    def __init__(self):
        """Initialize the loss manager and discover available losses."""
        self._losses: dict[str, type[LossBase]] = {}
        self._discover_losses()

    def _discover_losses(self):
        losses_dir = Path(__file__).parent / "losses"
        for file_path in sorted(losses_dir.glob("*_loss.py")):
            module_name = file_path.stem
            try:
                module = importlib.import_module(f".losses.{module_name}", package="trimine")
            except Exception as e:
                logger.error(f"Failed to load loss module {module_name}: {e}", exc_info=True)
                continue
            for name, obj in inspect.getmembers(module, inspect.isclass):
                if (issubclass(obj, LossBase) and
                        not inspect.isabstract(obj) and
                        not name.startswith("_") and
                        obj.__module__ == module.__name__):
                    loss_name = obj().name
                    self._losses[loss_name] = obj
                    logger.debug(f"Discovered loss: {loss_name} ({module_name})")

    def get_available_loss_names(self) -> list[str]:
        """
        Get the registered loss names in the canonical kind order.

        Returns:
            list[str]: Names of every discovered loss
        """
        order = [k.value for k in LossKind]
        return sorted(self._losses, key=lambda n: order.index(n) if n in order else len(order))

    def create_loss(self, name: str) -> LossBase:
        """
        Create an instance of the named loss.

        Args:
            name: Loss name, e.g. 'ba' or 'assorted'

        Returns:
            LossBase: Loss instance

        Raises:
            UsageError: If no loss with that name was discovered
        """
        loss_class = self._losses.get(name)
        if loss_class is None:
            available = ", ".join(self.get_available_loss_names())
            raise UsageError(f"Loss '{name}' not found. Available: {available}")
        return loss_class()


@lru_cache(maxsize=1)
def get_loss_manager() -> LossManager:
    return LossManager()


def loss_and_grad(
    batch: Batch,
    spec: LossSpec,
    proxy_state: ProxyState | None = None,
    rng: Rng | None = None,
    draws: np.ndarray | None = None,
) -> LossResult:
    """
    Evaluate any of the twelve losses on a batch.

    Args:
        batch: Mini-batch of embeddings
        spec: Loss choice and hyperparameters
        proxy_state: Proxies carried across batches (PNCA)
        rng: Random stream (DWS, assorted)
        draws: Frozen assorted min/max flips, overriding ``rng``

    Returns:
        LossResult: value and gradient; ``proxy_state`` is set for PNCA

    Raises:
        NumericError: If the value or gradient is not finite
    """
    loss = get_loss_manager().create_loss(spec.kind.value)
    result = loss.compute(batch, spec, LossContext(proxy_state=proxy_state, rng=rng, draws=draws))
    if not np.isfinite(result.value) or not np.all(np.isfinite(result.grad)):
        raise NumericError(f"Loss '{loss.name}' produced a non-finite value or gradient")
    return result
