"""Minimal dense-tensor numerical core with reverse-mode differentiation."""

from .adam import AdamState, adam_step
from .gradcheck import GradCheckReport, finite_difference_check
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    backward,
    clip,
    concat,
    dropout,
    exp,
    fully_masked_row_count,
    gather,
    layer_norm,
    linear,
    log,
    matmul,
    multiply,
    primitive_forward,
    primitive_names,
    relu,
    reset_fully_masked_row_count,
    reshape,
    set_finite_checks,
    sigmoid,
    slice_axis,
    softmax,
    softplus,
    square,
    sub,
    tanh,
    tile,
    tmean,
    transpose,
    tsum,
)

__all__ = [
    "AdamState",
    "GradCheckReport",
    "Tape",
    "Tensor",
    "active_tape",
    "adam_step",
    "add",
    "backward",
    "clip",
    "concat",
    "dropout",
    "exp",
    "finite_difference_check",
    "fully_masked_row_count",
    "gather",
    "layer_norm",
    "linear",
    "log",
    "matmul",
    "multiply",
    "primitive_forward",
    "primitive_names",
    "relu",
    "reset_fully_masked_row_count",
    "reshape",
    "set_finite_checks",
    "sigmoid",
    "slice_axis",
    "softmax",
    "softplus",
    "square",
    "sub",
    "tanh",
    "tile",
    "tmean",
    "transpose",
    "tsum",
]
