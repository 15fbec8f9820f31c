"""Minimal float64 autodiff kernel, Adam, gradient checking and checkpoints."""
from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    cross_entropy,
    exp,
    gelu,
    getitem,
    grad_enabled,
    hinge,
    l2_norm,
    layer_norm,
    linear,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    scale,
    segment_softmax,
    segment_sum,
    softmax,
    sqrt,
    stack,
    swap_last,
    take,
    transpose,
    tsum,
)
from .optim import ParamGroup, adam_step, lr_schedule
from .gradcheck import grad_check, grad_check_tensors
from .checkpoint import CheckpointError, load_arrays, save_arrays

__all__ = [
    "Tensor", "add", "as_tensor", "concat", "cross_entropy", "exp", "gelu", "getitem",
    "grad_enabled", "hinge", "l2_norm", "layer_norm", "linear", "log", "log_softmax",
    "matmul", "mean", "mul", "no_grad", "relu", "reshape", "scale", "segment_softmax",
    "segment_sum", "softmax", "sqrt", "stack", "swap_last", "take", "transpose", "tsum",
    "ParamGroup", "adam_step", "lr_schedule", "grad_check", "grad_check_tensors",
    "CheckpointError", "load_arrays", "save_arrays",
]
