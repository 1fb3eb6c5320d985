"""Floating-point operation counting rules.

Single source of truth for how much arithmetic each primitive costs.  The
runtime counter in the engine and the analytic model builder both charge
work through these helpers, so the two totals are comparable by
construction; what the analytic side cannot see is *which* shapes actually
execute, which is exactly what the runtime counter cross-checks.

Conventions (FLOPs, not multiply-adds):
  * one multiply-add = 2 FLOPs
  * elementwise add/sub/mul/scale/negate/relu = 1 FLOP per element
  * sigmoid = 4 FLOPs per element (exp, add, div, negate)
  * mean over an axis = one add per input element plus one scale per output
  * softmax = 8 FLOPs per element (max-shift, exp, sum, divide)
  * layer norm = 7 FLOPs per element (mean, center, square, variance,
    normalize, gain, bias)
  * linear resampling = 3 FLOPs per produced element per interpolated axis
  * bias addition is charged separately from the multiply-accumulate core
"""

from math import prod


def ewise_flops(n: int) -> int:
    return n


def sigmoid_flops(n: int) -> int:
    return 4 * n


def softmax_flops(n: int) -> int:
    return 8 * n


def layernorm_flops(n: int) -> int:
    return 7 * n


def matmul_flops(m: int, k: int, n: int) -> int:
    return 2 * m * k * n


def linear_flops(rows: int, d_in: int, d_out: int, bias: bool = True) -> int:
    total = 2 * rows * d_in * d_out
    if bias:
        total += rows * d_out
    return total


def conv_flops(c_in: int, c_out: int, kernel_volume: int, out_positions: int,
               bias: bool = True) -> int:
    """Cost of a dense cross-correlation with `out_positions` spatial outputs."""
    total = 2 * kernel_volume * c_in * c_out * out_positions
    if bias:
        total += c_out * out_positions
    return total


def mean_reduce_flops(n_in: int, n_out: int) -> int:
    return n_in + n_out


def block_pool_flops(n_in: int, n_out: int) -> int:
    # same accumulation pattern as a mean reduction
    return n_in + n_out


def resize_flops(channels: int, in_dims, out_dims) -> int:
    """Separable linear resampling, one axis at a time (x, then y, then z).

    Axes whose size already matches are passed through untouched.
    """
    dims = list(in_dims)
    total = 0
    for axis, target in enumerate(out_dims):
        if dims[axis] == target:
            continue
        dims[axis] = target
        total += 3 * channels * prod(dims)
    return total


def conv_out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - kernel
    if span < 0 or span % stride != 0:
        raise ValueError(
            f"non-integral conv output: size={size} kernel={kernel} "
            f"stride={stride} pad={pad}")
    return span // stride + 1
