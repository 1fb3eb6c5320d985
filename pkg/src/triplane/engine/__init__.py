"""Minimal dense tensor engine with reverse-mode differentiation."""

from .tensor import (
    Arena,
    EngineError,
    NumericError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    active_tape,
    alloc,
    alloc_count,
    arena_scope,
    check_mode,
    default_dtype,
    flop_count,
    precision,
    reset_counters,
    set_check_finite,
    set_precision,
)
from .ops import (
    add,
    add_rowvec,
    avg_reduce_axis,
    bce_with_logits_mean,
    broadcast_along_axis,
    channel_scale,
    concat,
    layernorm,
    linear,
    matmul,
    mean_all,
    mul,
    narrow,
    negate,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    sub,
    sum_all,
    transpose2d,
)
from .conv import conv2d, conv3d
from .resize import avg_pool, trilinear_resize
from .gradcheck import GradCheckReport, grad_check

__all__ = [name for name in dir() if not name.startswith("_")]
