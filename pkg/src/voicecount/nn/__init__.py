"""Minimal dense-tensor network engine with reverse-mode gradients."""

from .layers import (
    BLSTM,
    Conv2d,
    Dense,
    Dropout,
    Layer,
    LeakyReLU,
    MaxPool2d,
    Parameter,
    Reshape,
    TimeMean,
    xavier_init,
)
from .loss import mse_loss, mse_with_grad
from .network import Network
from .optim import Adam

__all__ = [
    "BLSTM",
    "Conv2d",
    "Dense",
    "Dropout",
    "Layer",
    "LeakyReLU",
    "MaxPool2d",
    "Parameter",
    "Reshape",
    "TimeMean",
    "xavier_init",
    "mse_loss",
    "mse_with_grad",
    "Network",
    "Adam",
]
