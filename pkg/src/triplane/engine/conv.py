"""Dense 2-D and 3-D cross-correlation (no kernel flip), zero padding.

Forward lowers each window to a column matrix and runs one matrix product;
backward rebuilds input gradients with per-offset strided slice adds, so no
scatter indexing is needed.  Odd square kernels only.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .. import counting
from .tensor import Tensor, ShapeError, alloc, add_flops, check_input, record


def _out_size(size, kernel, stride, pad):
    try:
        return counting.conv_out_size(size, kernel, stride, pad)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None


def _validate(x, w, ndim):
    if x.ndim != ndim + 1:
        raise ShapeError(f"conv{ndim}d input must be {ndim + 1}-D, got {x.shape}")
    if w.ndim != ndim + 2:
        raise ShapeError(f"conv{ndim}d weight must be {ndim + 2}-D, got {w.shape}")
    k = w.shape[2]
    if any(s != k for s in w.shape[2:]):
        raise ShapeError(f"conv{ndim}d kernel must be square, got {w.shape}")
    if k % 2 == 0:
        raise ShapeError(f"conv{ndim}d kernel size must be odd, got {k}")
    if x.shape[0] != w.shape[1]:
        raise ShapeError(
            f"conv{ndim}d channel mismatch: input {x.shape[0]} vs weight {w.shape[1]}")
    return k


def _pad_input(x_data, pad, spatial):
    if pad == 0:
        return x_data
    c = x_data.shape[0]
    padded_shape = (c,) + tuple(s + 2 * pad for s in spatial)
    padded = alloc(padded_shape, x_data.dtype)
    padded.fill(0.0)
    center = (slice(None),) + tuple(slice(pad, pad + s) for s in spatial)
    padded[center] = x_data
    return padded


def _conv_nd(x: Tensor, w: Tensor, b, stride: int, pad: int, ndim: int) -> Tensor:
    k = _validate(x, w, ndim)
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"conv bias shape {b.shape} != ({w.shape[0]},)")
    check_input(x.data, w.data, *([b.data] if b is not None else []))

    c_in = x.shape[0]
    c_out = w.shape[0]
    spatial = x.shape[1:]
    out_spatial = tuple(_out_size(s, k, stride, pad) for s in spatial)
    n_out = int(np.prod(out_spatial))
    padded = _pad_input(x.data, pad, spatial)

    if k == 1 and stride == 1:
        cols = padded.reshape(c_in, n_out)
    else:
        st = padded.strides
        win_shape = (c_in,) + (k,) * ndim + out_spatial
        win_strides = (st[0],) + st[1:] + tuple(s * stride for s in st[1:])
        windows = as_strided(padded, shape=win_shape, strides=win_strides)
        cols = alloc((c_in * k ** ndim, n_out), x.dtype)
        np.copyto(cols.reshape(win_shape), windows)

    w2 = w.data.reshape(c_out, c_in * k ** ndim)
    out2 = alloc((c_out, n_out), x.dtype)
    np.matmul(w2, cols, out=out2)
    if b is not None:
        out2 += b.data[:, None]
    add_flops(counting.conv_flops(c_in, c_out, k ** ndim, n_out, bias=b is not None))
    out = Tensor(out2.reshape((c_out,) + out_spatial), dtype=x.dtype)

    def vjp(g):
        g2 = g.reshape(c_out, n_out)
        grad_w = (g2 @ cols.T).reshape(w.shape)
        grad_b = g2.sum(axis=1) if b is not None else None
        gcols = (w2.T @ g2).reshape((c_in,) + (k,) * ndim + out_spatial)
        grad_padded = np.zeros(padded.shape, dtype=g.dtype)
        for offset in np.ndindex(*(k,) * ndim):
            sl = (slice(None),) + tuple(
                slice(o, o + stride * d, stride)
                for o, d in zip(offset, out_spatial))
            grad_padded[sl] += gcols[(slice(None),) + offset]
        if pad:
            center = (slice(None),) + tuple(slice(pad, pad + s) for s in spatial)
            grad_x = grad_padded[center].copy()
        else:
            grad_x = grad_padded
        if b is not None:
            return grad_x, grad_w, grad_b
        return grad_x, grad_w

    inputs = (x, w) if b is None else (x, w, b)
    return record(out, inputs, vjp)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlate (C_in,H,W) with (C_out,C_in,k,k) weights."""
    return _conv_nd(x, w, b, stride, pad, ndim=2)


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlate (C_in,D,H,W) with (C_out,C_in,k,k,k) weights."""
    return _conv_nd(x, w, b, stride, pad, ndim=3)
