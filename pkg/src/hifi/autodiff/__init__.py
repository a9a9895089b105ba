"""Minimal reverse-mode autodiff over numpy float64 arrays."""

from .graph import Graph, Node
from .ops import (
    add,
    class_weighted_sum,
    conv2d,
    crop,
    eltwise_sum,
    maxpool2,
    mul,
    relu,
    softmax_channels,
    sum_all,
    upsample_bilinear,
    weighted_nll,
)
from .optim import SgdState, sgd_step
from .tensor import Tensor, backward

__all__ = [
    "Graph", "Node", "Tensor", "backward", "SgdState", "sgd_step",
    "add", "class_weighted_sum", "conv2d", "crop", "eltwise_sum", "maxpool2", "mul",
    "relu", "softmax_channels", "sum_all", "upsample_bilinear", "weighted_nll",
]
