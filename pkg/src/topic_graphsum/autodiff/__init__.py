"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from . import ops
from .gradcheck import finite_difference_check, gradcheck, relative_error
from .ops import (
    add,
    clip_min,
    concat,
    embedding,
    exp,
    expand_dims,
    getitem,
    leaky_relu,
    log,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
)
from .ops import sum as reduce_sum
from .optim import AdamState, adam_step, gaussian_reparameterize, make_rng
from .tensor import Node, Tape, Tensor, as_tensor, backward, current_tape, no_grad

__all__ = [
    "AdamState",
    "Node",
    "Tape",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "clip_min",
    "concat",
    "current_tape",
    "embedding",
    "exp",
    "expand_dims",
    "finite_difference_check",
    "gaussian_reparameterize",
    "getitem",
    "gradcheck",
    "leaky_relu",
    "log",
    "make_rng",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "ops",
    "reduce_sum",
    "relative_error",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "stack",
    "sub",
    "swapaxes",
    "tanh",
    "transpose",
]
