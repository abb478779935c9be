from .gradcheck import grad_check
from .ops import (
    ShapeError,
    activation,
    add,
    bce_with_logits,
    concat_channels,
    conv2d,
    conv_transpose2d,
    dense,
    exp,
    flatten,
    global_avg_pool,
    log_sigmoid,
    mean,
    mul,
    relu,
    reshape,
    scale,
    shift,
    square,
    sub,
)
from .ops import sum as tsum
from .rng import Rng, sample_standard_normal
from .tensor import Graph, Tensor, backward, no_grad, parameter

__all__ = [
    "Graph", "Rng", "ShapeError", "Tensor", "activation", "add", "backward", "bce_with_logits",
    "concat_channels", "conv2d", "conv_transpose2d", "dense", "exp", "flatten", "global_avg_pool",
    "grad_check", "log_sigmoid", "mean", "mul", "no_grad", "parameter", "relu", "reshape", "sample_standard_normal",
    "scale", "shift", "square", "sub", "tsum",
]
