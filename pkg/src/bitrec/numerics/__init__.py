"""Minimal deterministic numeric kernel: tensors, autodiff, parameter store."""

from .gradcheck import grad_check, sample_coords
from .store import ParameterStore, normal_init, xavier_uniform
from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    add,
    broadcast_to,
    concat,
    cosine_similarity,
    div,
    dropout,
    exp,
    gather_rows,
    gelu,
    grad_enabled,
    layer_norm,
    linear,
    log,
    logsumexp,
    masked_softmax,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    reshape,
    sigmoid,
    slice_,
    sub,
    sum_,
    swapaxes,
    take_flat,
    tanh,
    transpose,
)

__all__ = [
    "DEFAULT_DTYPE",
    "ParameterStore",
    "Tensor",
    "add",
    "broadcast_to",
    "concat",
    "cosine_similarity",
    "div",
    "dropout",
    "exp",
    "gather_rows",
    "gelu",
    "grad_check",
    "grad_enabled",
    "layer_norm",
    "linear",
    "log",
    "logsumexp",
    "masked_softmax",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "normal_init",
    "power",
    "reshape",
    "sample_coords",
    "sigmoid",
    "slice_",
    "sub",
    "sum_",
    "swapaxes",
    "take_flat",
    "tanh",
    "transpose",
    "xavier_uniform",
]
