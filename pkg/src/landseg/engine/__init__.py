"""Minimal reverse-mode autodiff over numpy arrays."""
from .functional import (add, avgpool2d, batchnorm2d, concat_channels, conv2d, dropout, maxpool2d, mean_all,
                         mul, neg, relu, sigmoid, stable_sigmoid, sum_all, upsample2x)
from .gradcheck import grad_check, make_rng
from .optim import Adam, AdamState, LrSchedule, adam_step
from .tensor import DimensionError, ParameterError, Tensor, build_tape

__all__ = [
    "Adam", "AdamState", "DimensionError", "LrSchedule", "ParameterError", "Tensor", "adam_step", "add",
    "avgpool2d", "batchnorm2d", "build_tape", "concat_channels", "conv2d", "dropout", "grad_check",
    "make_rng", "maxpool2d", "mean_all", "mul", "neg", "relu", "sigmoid", "stable_sigmoid", "sum_all",
    "upsample2x",
]
