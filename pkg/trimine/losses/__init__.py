"""Online mining losses, one plugin module per family."""

from .base import LossBase
from .common import Batch, LossContext, LossKind, LossResult, LossSpec, ProxyState

__all__ = ['LossBase', 'Batch', 'LossContext', 'LossKind', 'LossResult', 'LossSpec', 'ProxyState']
