"""Abstract base class for online mining losses."""

from abc import ABC, abstractmethod

from ..errors import UsageError
from .common import Batch, LossContext, LossResult, LossSpec


class LossBase(ABC):
    """
    Abstract base class for all online mining losses.

    This class defines the interface every loss plugin must implement to be
    discovered by the loss manager and dispatched by ``loss_and_grad``.
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """
        Get the unique identifier for this loss.

        Returns:
            str: Loss name as used on the command line (e.g., 'ba', 'ephn')
        """
        pass

    @property
    def needs_rng(self) -> bool:
        """
        Whether the loss consumes random draws.

        Returns:
            bool: True for losses that sample (DWS) or draw extremes (assorted)
        """
        return False

    @property
    def stateful(self) -> bool:
        """
        Whether the loss carries state between batches.

        Returns:
            bool: True when ``compute`` returns an updated proxy state
        """
        return False

    @abstractmethod
    def compute(self, batch: Batch, spec: LossSpec, context: LossContext) -> LossResult:
        """
        Evaluate the loss and its gradient w.r.t. every embedding in the batch.

        Args:
            batch: Embeddings and labels of the mini-batch
            spec: Loss hyperparameters
            context: Proxy state and random stream, when the loss needs them

        Returns:
            LossResult: value, gradient, and bookkeeping

        Raises:
            UsageError: If the batch cannot support the loss
        """
        pass

    def require_rng(self, context: LossContext):
        if context.rng is None and context.draws is None:
            raise UsageError(f"Loss '{self.name}' needs a random seed")
