"""Minimal float64 array math with reverse-mode differentiation."""

from .diffarray import (
    DiffArray,
    Node,
    add,
    as_diff,
    backward,
    div,
    getitem,
    matmul,
    mul,
    neg,
    no_grad,
    power,
    reduce_mean,
    reduce_sum,
    reshape,
    sub,
    swapaxes,
)
from .gradcheck import finite_diff_check
from .kernels import (
    MASK_VALUE,
    AttentionWeights,
    broadcast_to,
    concat,
    exp,
    gelu,
    l2_norm,
    layer_norm,
    linear,
    log,
    log_softmax,
    masked_attention,
    normalize,
    sigmoid,
    softmax,
    tanh,
)
from .rng import Rng

__all__ = [
    "DiffArray",
    "Node",
    "add",
    "as_diff",
    "div",
    "getitem",
    "matmul",
    "mul",
    "neg",
    "power",
    "reduce_mean",
    "reduce_sum",
    "reshape",
    "sub",
    "swapaxes",
    "backward",
    "no_grad",
    "finite_diff_check",
    "MASK_VALUE",
    "AttentionWeights",
    "broadcast_to",
    "concat",
    "exp",
    "gelu",
    "l2_norm",
    "layer_norm",
    "linear",
    "log",
    "log_softmax",
    "masked_attention",
    "normalize",
    "sigmoid",
    "softmax",
    "tanh",
    "Rng",
]
