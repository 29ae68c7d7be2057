"""From-scratch differentiable layers, losses, optimizers and gradient checks."""

from .checkpoint import load_checkpoint, load_sidecar, save_checkpoint
from .gradcheck import grad_check
from .layers import (GRU, Conv2d, Flatten, Layer, Linear, MaxPool2x2,
                     Normalize, ReLU, Reshape, Softmax, Tanh, Tensor,
                     Upsample2x, xavier_init)
from .losses import (LossSpec, inverse_freq_weights, loss_ce, loss_gaussian_ce,
                     loss_mse, loss_weighted_ce, softmax)
from .model import LAYER_KINDS, LayerSpec, Model
from .optim import SGD, Adam, make_optimizer

__all__ = [
    "GRU", "Conv2d", "Flatten", "Layer", "Linear", "MaxPool2x2", "Normalize",
    "ReLU", "Reshape", "Softmax", "Tanh", "Tensor", "Upsample2x", "xavier_init",
    "LossSpec", "inverse_freq_weights", "loss_ce", "loss_gaussian_ce",
    "loss_mse", "loss_weighted_ce", "softmax",
    "LAYER_KINDS", "LayerSpec", "Model",
    "SGD", "Adam", "make_optimizer",
    "grad_check", "save_checkpoint", "load_checkpoint", "load_sidecar",
]
