"""A small numpy neural-network toolkit: autograd tensors, dense layers, losses, Adam."""

from prozd.nn.layers import MLP, LayerShapeError, Linear
from prozd.nn.losses import cross_entropy, cross_entropy_loss, loss, mse, mse_loss
from prozd.nn.params import (
    Adam,
    AdamConfig,
    CheckpointError,
    NonFiniteGradientError,
    Parameters,
    load_checkpoint,
    save_checkpoint,
)
from prozd.nn.tensor import Tensor

__all__ = [
    "Adam",
    "AdamConfig",
    "CheckpointError",
    "LayerShapeError",
    "Linear",
    "MLP",
    "NonFiniteGradientError",
    "Parameters",
    "Tensor",
    "cross_entropy",
    "cross_entropy_loss",
    "load_checkpoint",
    "loss",
    "mse",
    "mse_loss",
    "save_checkpoint",
]
