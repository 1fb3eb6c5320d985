"""Differentiable primitives over `Tensor`.

Binary elementwise ops require equal shapes; the only implicit broadcast is
a scalar (0-d or size-1) operand.  Anything axis-shaped is spelled out as a
dedicated op (`broadcast_along_axis`, `add_rowvec`, `channel_scale`) so the
lifting arithmetic stays explicit.
"""

import numpy as np

from .. import counting
from .tensor import (
    Tensor, ShapeError, alloc, add_flops, check_input, record,
)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_scalar(t: Tensor) -> bool:
    return t.size == 1


def _binary_check(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    """Collapse a gradient onto a scalar operand's shape."""
    if g.shape == tuple(shape):
        return g
    return np.sum(g).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_check(a, b, "add")
    check_input(a.data, b.data)
    out_shape = a.shape if a.size >= b.size else b.shape
    buf = alloc(out_shape, a.dtype)
    np.add(a.data, b.data, out=buf)
    add_flops(counting.ewise_flops(buf.size))
    out = Tensor(buf, dtype=buf.dtype)
    return record(out, (a, b),
                  lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_check(a, b, "sub")
    check_input(a.data, b.data)
    out_shape = a.shape if a.size >= b.size else b.shape
    buf = alloc(out_shape, a.dtype)
    np.subtract(a.data, b.data, out=buf)
    add_flops(counting.ewise_flops(buf.size))
    out = Tensor(buf, dtype=buf.dtype)
    return record(out, (a, b),
                  lambda g: (_reduce_to(g, a.shape), -_reduce_to(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_check(a, b, "mul")
    check_input(a.data, b.data)
    out_shape = a.shape if a.size >= b.size else b.shape
    buf = alloc(out_shape, a.dtype)
    np.multiply(a.data, b.data, out=buf)
    add_flops(counting.ewise_flops(buf.size))
    out = Tensor(buf, dtype=buf.dtype)
    ad, bd = a.data, b.data
    return record(out, (a, b),
                  lambda g: (_reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)))


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply by a python scalar (not a learnable value)."""
    check_input(a.data)
    s = float(s)
    buf = alloc(a.shape, a.dtype)
    np.multiply(a.data, s, out=buf)
    add_flops(counting.ewise_flops(buf.size))
    out = Tensor(buf, dtype=buf.dtype)
    return record(out, (a,), lambda g: (g * s,))


def negate(a: Tensor) -> Tensor:
    check_input(a.data)
    buf = alloc(a.shape, a.dtype)
    np.negative(a.data, out=buf)
    add_flops(counting.ewise_flops(buf.size))
    out = Tensor(buf, dtype=buf.dtype)
    return record(out, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    check_input(a.data)
    buf = alloc(a.shape, a.dtype)
    np.maximum(a.data, 0.0, out=buf)
    add_flops(counting.ewise_flops(buf.size))
    out = Tensor(buf, dtype=buf.dtype)
    mask = a.data > 0
    return record(out, (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    check_input(a.data)
    buf = alloc(a.shape, a.dtype)
    # stable two-sided form
    np.negative(np.abs(a.data), out=buf)
    np.exp(buf, out=buf)
    pos = a.data >= 0
    np.divide(1.0, 1.0 + buf, out=buf, where=pos)
    neg = ~pos
    if neg.any():
        e = np.exp(a.data[neg])
        buf[neg] = e / (1.0 + e)
    add_flops(counting.sigmoid_flops(buf.size))
    out = Tensor(buf, dtype=buf.dtype)
    y = buf
    return record(out, (a,), lambda g: (g * y * (1.0 - y),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product; backward is g·bᵀ and aᵀ·g."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    check_input(a.data, b.data)
    m, k = a.shape
    n = b.shape[1]
    buf = alloc((m, n), a.dtype)
    np.matmul(a.data, b.data, out=buf)
    add_flops(counting.matmul_flops(m, k, n))
    out = Tensor(buf, dtype=buf.dtype)
    ad, bd = a.data, b.data
    return record(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Rows of `x` through an affine map: x @ w + b."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: incompatible shapes {x.shape} @ {w.shape}")
    check_input(x.data, w.data)
    rows, d_in = x.shape
    d_out = w.shape[1]
    buf = alloc((rows, d_out), x.dtype)
    np.matmul(x.data, w.data, out=buf)
    if b is not None:
        if b.shape != (d_out,):
            raise ShapeError(f"linear bias shape {b.shape} != ({d_out},)")
        buf += b.data
    add_flops(counting.linear_flops(rows, d_in, d_out, bias=b is not None))
    out = Tensor(buf, dtype=buf.dtype)
    xd, wd = x.data, w.data
    if b is None:
        return record(out, (x, w), lambda g: (g @ wd.T, xd.T @ g))
    return record(out, (x, w, b), lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0)))


def add_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """Add a vector to every row of a 2-D tensor."""
    if x.ndim != 2 or v.shape != (x.shape[1],):
        raise ShapeError(f"add_rowvec: {x.shape} + {v.shape}")
    check_input(x.data, v.data)
    buf = alloc(x.shape, x.dtype)
    np.add(x.data, v.data, out=buf)
    add_flops(counting.ewise_flops(buf.size))
    out = Tensor(buf, dtype=buf.dtype)
    return record(out, (x, v), lambda g: (g, g.sum(axis=0)))


def channel_scale(x: Tensor, s: Tensor) -> Tensor:
    """Scale a channel-major tensor by one weight per leading channel."""
    if s.ndim != 1 or x.shape[0] != s.shape[0]:
        raise ShapeError(f"channel_scale: {x.shape} by {s.shape}")
    check_input(x.data, s.data)
    s_col = s.data.reshape((-1,) + (1,) * (x.ndim - 1))
    buf = alloc(x.shape, x.dtype)
    np.multiply(x.data, s_col, out=buf)
    add_flops(counting.ewise_flops(buf.size))
    out = Tensor(buf, dtype=buf.dtype)
    xd = x.data
    axes = tuple(range(1, x.ndim))
    return record(out, (x, s),
                  lambda g: (g * s_col, (g * xd).sum(axis=axes)))


def avg_reduce_axis(x: Tensor, axis: int) -> Tensor:
    """Arithmetic mean over one axis; backward spreads the gradient evenly."""
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"avg_reduce_axis: axis {axis} invalid for shape {x.shape}")
    axis = axis % x.ndim
    check_input(x.data)
    d = x.shape[axis]
    out_shape = x.shape[:axis] + x.shape[axis + 1:]
    buf = alloc(out_shape, x.dtype)
    np.mean(x.data, axis=axis, out=buf)
    add_flops(counting.mean_reduce_flops(x.size, buf.size))
    out = Tensor(buf, dtype=buf.dtype)

    def vjp(g):
        spread = np.expand_dims(g / d, axis)
        return (np.broadcast_to(spread, x.shape),)

    return record(out, (x,), vjp)


def broadcast_along_axis(f: Tensor, axis: int, size: int) -> Tensor:
    """Insert an axis of length `size` whose every slice equals `f`.

    The forward result is a zero-copy view; backward sums over the new axis.
    """
    if not 0 <= axis <= f.ndim:
        raise ShapeError(f"broadcast_along_axis: axis {axis} invalid for shape {f.shape}")
    if size < 1:
        raise ShapeError(f"broadcast_along_axis: size must be >= 1, got {size}")
    check_input(f.data)
    view = np.broadcast_to(np.expand_dims(f.data, axis),
                           f.shape[:axis] + (size,) + f.shape[axis:])
    out = Tensor(view, dtype=f.dtype)
    return record(out, (f,), lambda g: (g.sum(axis=axis),))


def sum_all(x: Tensor) -> Tensor:
    check_input(x.data)
    out = Tensor(np.sum(x.data).reshape(()), dtype=x.dtype)
    add_flops(counting.ewise_flops(x.size))
    shape = x.shape
    return record(out, (x,), lambda g: (np.broadcast_to(g, shape),))


def mean_all(x: Tensor) -> Tensor:
    check_input(x.data)
    out = Tensor(np.mean(x.data).reshape(()), dtype=x.dtype)
    add_flops(counting.mean_reduce_flops(x.size, 1))
    shape, n = x.shape, x.size
    return record(out, (x,), lambda g: (np.broadcast_to(g / n, shape),))


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = Tensor(x.data.reshape(shape), dtype=x.dtype)
    orig = x.shape
    return record(out, (x,), lambda g: (g.reshape(orig),))


def transpose2d(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose2d expects 2-D, got {x.shape}")
    out = Tensor(x.data.T, dtype=x.dtype)
    return record(out, (x,), lambda g: (g.T,))


def narrow(x: Tensor, axis: int, start: int, size: int) -> Tensor:
    """Contiguous slice along one axis (zero-copy view)."""
    if not 0 <= axis < x.ndim or start < 0 or start + size > x.shape[axis]:
        raise ShapeError(f"narrow: [{start}:{start + size}) on axis {axis} of {x.shape}")
    index = (slice(None),) * axis + (slice(start, start + size),)
    out = Tensor(x.data[index], dtype=x.dtype)

    def vjp(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return record(out, (x,), vjp)


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of nothing")
    check_input(*[t.data for t in tensors])
    out_shape = list(tensors[0].shape)
    out_shape[axis] = sum(t.shape[axis] for t in tensors)
    buf = alloc(tuple(out_shape), tensors[0].dtype)
    np.concatenate([t.data for t in tensors], axis=axis, out=buf)
    out = Tensor(buf, dtype=buf.dtype)
    sizes = [t.shape[axis] for t in tensors]

    def vjp(g):
        grads, offset = [], 0
        for s in sizes:
            index = (slice(None),) * axis + (slice(offset, offset + s),)
            grads.append(g[index])
            offset += s
        return tuple(grads)

    return record(out, tuple(tensors), vjp)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along `axis`; rows sum to one."""
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {x.shape}")
    check_input(x.data)
    red_shape = list(x.shape)
    red_shape[axis] = 1
    red = alloc(tuple(red_shape), x.dtype)
    np.max(x.data, axis=axis, out=red, keepdims=True)
    buf = alloc(x.shape, x.dtype)
    np.subtract(x.data, red, out=buf)
    np.exp(buf, out=buf)
    np.sum(buf, axis=axis, out=red, keepdims=True)
    buf /= red
    add_flops(counting.softmax_flops(x.size))
    out = Tensor(buf, dtype=buf.dtype)
    y = buf

    def vjp(g):
        inner = np.sum(g * y, axis=axis, keepdims=True)
        return (y * (g - inner),)

    return record(out, (x,), vjp)


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layernorm: gain/bias must be ({d},)")
    if eps <= 0:
        raise ValueError("layernorm eps must be positive")
    check_input(x.data, gain.data, bias.data)
    red_shape = x.shape[:-1] + (1,)
    mean = alloc(red_shape, x.dtype)
    np.mean(x.data, axis=-1, out=mean, keepdims=True)
    xhat = alloc(x.shape, x.dtype)
    np.subtract(x.data, mean, out=xhat)
    sq = alloc(x.shape, x.dtype)
    np.multiply(xhat, xhat, out=sq)
    inv_std = alloc(red_shape, x.dtype)
    np.mean(sq, axis=-1, out=inv_std, keepdims=True)
    inv_std += eps
    np.sqrt(inv_std, out=inv_std)
    np.divide(1.0, inv_std, out=inv_std)
    xhat *= inv_std
    buf = alloc(x.shape, x.dtype)
    np.multiply(xhat, gain.data, out=buf)
    buf += bias.data
    add_flops(counting.layernorm_flops(x.size))
    out = Tensor(buf, dtype=buf.dtype)
    gd = gain.data

    def vjp(g):
        axes_lead = tuple(range(x.ndim - 1))
        g_gain = (g * xhat).sum(axis=axes_lead)
        g_bias = g.sum(axis=axes_lead)
        gh = g * gd
        # d/dx of (x - mean) * inv_std
        gx = inv_std * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return (gx, g_gain, g_bias)

    return record(out, (x, gain, bias), vjp)


# ---------------------------------------------------------------------------
# Fused, numerically stable training losses.

def bce_with_logits_mean(logits: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross-entropy over all elements, from raw logits."""
    if logits.shape != target.shape:
        raise ShapeError(f"bce: {logits.shape} vs {target.shape}")
    check_input(logits.data, target.data)
    z, t = logits.data, target.data
    loss = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out = Tensor(np.mean(loss).reshape(()), dtype=logits.dtype)
    add_flops(8 * z.size)
    n = z.size

    def vjp(g):
        sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)),
                       np.exp(z) / (1.0 + np.exp(z)))
        return (g * (sig - t) / n, None)

    return record(out, (logits, target), vjp)


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Cross-entropy of a 1-D logit vector against an integer class label."""
    if logits.ndim != 1:
        raise ShapeError(f"softmax_cross_entropy expects 1-D logits, got {logits.shape}")
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    check_input(logits.data)
    z = logits.data
    m = z.max()
    lse = m + np.log(np.sum(np.exp(z - m)))
    out = Tensor(np.asarray(lse - z[label]).reshape(()), dtype=logits.dtype)
    add_flops(8 * z.size)

    def vjp(g):
        p = np.exp(z - lse)
        p[label] -= 1.0
        return (g * p,)

    return record(out, (logits,), vjp)
