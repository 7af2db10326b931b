"""Minimal float64 CNN engine: layers, losses, SGD, gradient checking, checkpoints."""

from unlearnkit.nn.checkpoint import load_checkpoint, save_checkpoint
from unlearnkit.nn.gradcheck import grad_check
from unlearnkit.nn.layers import Conv2d, Flatten, Linear, MaxPool2d, Param, ReLU
from unlearnkit.nn.losses import (
    cross_entropy,
    distill_kl,
    kl_divergence,
    log_softmax_with_temperature,
    softmax_with_temperature,
    total_loss,
)
from unlearnkit.nn.network import (
    Network,
    blank_like,
    build_model,
    build_reference_model,
    clone_params,
    init_random,
)
from unlearnkit.nn.optim import SGD, sgd_step

__all__ = [
    "Conv2d",
    "Flatten",
    "Linear",
    "MaxPool2d",
    "Network",
    "Param",
    "ReLU",
    "SGD",
    "blank_like",
    "build_model",
    "build_reference_model",
    "clone_params",
    "cross_entropy",
    "distill_kl",
    "grad_check",
    "init_random",
    "kl_divergence",
    "load_checkpoint",
    "log_softmax_with_temperature",
    "save_checkpoint",
    "sgd_step",
    "softmax_with_temperature",
    "total_loss",
]
