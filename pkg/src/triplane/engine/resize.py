"""Trilinear volume resampling and block average pooling.

Resampling uses half-pixel centers (align-corners-false) and interpolates
one axis at a time; at the borders the fractional weights are left
unclamped, i.e. the two edge cells extrapolate linearly.  That keeps the
map exact on affine fields, so an upsample/downsample round trip of a
linear ramp is lossless.
"""

import numpy as np

from .. import counting
from .tensor import Tensor, ShapeError, alloc, add_flops, check_input, record

# (in_size, out_size) -> (i0, i1, frac, transpose matrix), frac in f64;
# per-dtype casts of frac are cached too so steady-state calls allocate
# nothing outside the buffer pool
_PLAN_CACHE = {}
_FRAC_CACHE = {}


def _axis_plan(in_size: int, out_size: int):
    key = (in_size, out_size)
    plan = _PLAN_CACHE.get(key)
    if plan is not None:
        return plan
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    if in_size == 1:
        i0 = np.zeros(out_size, dtype=np.intp)
        i1 = i0
        frac = np.zeros(out_size, dtype=np.float64)
    else:
        i0 = np.clip(np.floor(src), 0, in_size - 2).astype(np.intp)
        i1 = i0 + 1
        frac = src - i0
    mat = np.zeros((in_size, out_size), dtype=np.float64)
    np.add.at(mat, (i0, np.arange(out_size)), 1.0 - frac)
    np.add.at(mat, (i1, np.arange(out_size)), frac)
    plan = (i0, i1, frac, mat)
    _PLAN_CACHE[key] = plan
    return plan


def _frac_as(in_size, out_size, dtype):
    key = (in_size, out_size, np.dtype(dtype).str)
    cached = _FRAC_CACHE.get(key)
    if cached is None:
        cached = _axis_plan(in_size, out_size)[2].astype(dtype)
        _FRAC_CACHE[key] = cached
    return cached


def _lerp_axis(arr: np.ndarray, axis: int, out_size: int) -> np.ndarray:
    i0, i1, _, _ = _axis_plan(arr.shape[axis], out_size)
    out_shape = arr.shape[:axis] + (out_size,) + arr.shape[axis + 1:]
    lo = alloc(out_shape, arr.dtype)
    hi = alloc(out_shape, arr.dtype)
    np.take(arr, i0, axis=axis, out=lo)
    np.take(arr, i1, axis=axis, out=hi)
    f = _frac_as(arr.shape[axis], out_size, arr.dtype).reshape(
        (1,) * axis + (out_size,) + (1,) * (arr.ndim - axis - 1))
    np.subtract(hi, lo, out=hi)
    np.multiply(hi, f, out=hi)
    np.add(lo, hi, out=lo)
    return lo


def trilinear_resize(x: Tensor, out_dims) -> Tensor:
    """Resample a (C, Dx, Dy, Dz) volume to (C, *out_dims)."""
    out_dims = tuple(int(d) for d in out_dims)
    if x.ndim != 4:
        raise ShapeError(f"trilinear_resize expects (C,Dx,Dy,Dz), got {x.shape}")
    if len(out_dims) != 3 or any(d < 1 for d in out_dims):
        raise ShapeError(f"invalid target dims {out_dims}")
    check_input(x.data)

    data = x.data
    for axis3, target in enumerate(out_dims):
        axis = axis3 + 1
        if data.shape[axis] == target:
            continue
        data = _lerp_axis(data, axis, target)
    add_flops(counting.resize_flops(x.shape[0], x.shape[1:], out_dims))
    out = Tensor(data, dtype=x.dtype)
    in_dims = x.shape[1:]

    def vjp(g):
        # reverse order: each stage's adjoint is the transposed axis map
        for axis3 in (2, 1, 0):
            axis = axis3 + 1
            if in_dims[axis3] == g.shape[axis]:
                continue
            _, _, _, mat = _axis_plan(in_dims[axis3], g.shape[axis])
            g = np.moveaxis(
                np.tensordot(g, mat.astype(g.dtype).T, axes=([axis], [0])),
                -1, axis)
        return (np.ascontiguousarray(g),)

    return record(out, (x,), vjp)


def avg_pool(x: Tensor, factors) -> Tensor:
    """Mean over non-overlapping blocks; each axis size must divide evenly."""
    factors = tuple(int(f) for f in factors)
    if x.ndim != len(factors) + 1:
        raise ShapeError(f"avg_pool: {len(factors)} factors for input {x.shape}")
    if any(f < 1 for f in factors):
        raise ShapeError(f"avg_pool factors must be >= 1, got {factors}")
    spatial = x.shape[1:]
    if any(s % f for s, f in zip(spatial, factors)):
        raise ShapeError(f"avg_pool: {factors} does not divide {spatial}")
    check_input(x.data)
    out_spatial = tuple(s // f for s, f in zip(spatial, factors))
    split = (x.shape[0],)
    for o, f in zip(out_spatial, factors):
        split += (o, f)
    reduced_axes = tuple(range(2, x.ndim * 2 - 1, 2))
    buf = alloc((x.shape[0],) + out_spatial, x.dtype)
    np.mean(x.data.reshape(split), axis=reduced_axes, out=buf)
    add_flops(counting.block_pool_flops(x.size, buf.size))
    out = Tensor(buf, dtype=x.dtype)
    block = int(np.prod(factors))
    in_shape = x.shape

    def vjp(g):
        expanded = g / block
        for axis, f in enumerate(factors):
            expanded = np.repeat(expanded, f, axis=axis + 1)
        return (expanded.reshape(in_shape),)

    return record(out, (x,), vjp)
