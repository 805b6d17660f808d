"""Minimal NCHW tensor numerics with reverse-mode differentiation."""
from .core import Tensor, concat, flatten, record_kinks, replay_kinks
from .gradcheck import GradReport, grad_check
from .ops import (BatchNormState, activation, batch_norm2d, conv2d, conv_output_size,
                  cross_entropy_with_grad, dense, depthwise_conv2d, layer_norm_spatial,
                  maxpool2d, relu, sigmoid, sigmoid_array, softmax_cross_entropy)
from .optim import SGD, Adam, Optimizer, backward_and_step, make_optimizer
from .params import ROLES, ParameterSet, load_tensors, save_tensors

__all__ = [
    "Tensor", "concat", "flatten", "record_kinks", "replay_kinks", "GradReport", "grad_check",
    "BatchNormState", "activation", "batch_norm2d", "conv2d", "conv_output_size",
    "cross_entropy_with_grad", "dense", "depthwise_conv2d", "layer_norm_spatial",
    "maxpool2d", "relu", "sigmoid", "sigmoid_array", "softmax_cross_entropy",
    "SGD", "Adam", "Optimizer", "backward_and_step", "make_optimizer",
    "ROLES", "ParameterSet", "load_tensors", "save_tensors",
]
