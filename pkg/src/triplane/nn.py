"""Parameter-holding layers over the engine ops.

Layers are plain objects exposing `__call__` and `param_items()`; models
assemble them into flat, insertion-ordered parameter dictionaries whose
names double as the checkpoint schema.
"""

import numpy as np

from . import engine as E
from .engine import Tensor


def he_normal(rng, shape, fan_in):
    std = np.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def xavier_normal(rng, shape, fan_in, fan_out):
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def zeros_param(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def ones_param(shape):
    return Tensor(np.ones(shape), requires_grad=True)


class Conv2dLayer:
    """Same-padding by default; fixed stride 1 inside model stacks."""

    def __init__(self, rng, c_in, c_out, kernel, pad=None, bias=True):
        self.kernel = kernel
        self.pad = kernel // 2 if pad is None else pad
        self.w = he_normal(rng, (c_out, c_in, kernel, kernel),
                           fan_in=c_in * kernel * kernel)
        self.b = zeros_param((c_out,)) if bias else None

    def __call__(self, x):
        return E.conv2d(x, self.w, self.b, stride=1, pad=self.pad)

    def param_items(self):
        yield "w", self.w
        if self.b is not None:
            yield "b", self.b


class Conv3dLayer:
    def __init__(self, rng, c_in, c_out, kernel, pad=None, bias=True):
        self.kernel = kernel
        self.pad = kernel // 2 if pad is None else pad
        self.w = he_normal(rng, (c_out, c_in, kernel, kernel, kernel),
                           fan_in=c_in * kernel ** 3)
        self.b = zeros_param((c_out,)) if bias else None

    def __call__(self, x):
        return E.conv3d(x, self.w, self.b, stride=1, pad=self.pad)

    def param_items(self):
        yield "w", self.w
        if self.b is not None:
            yield "b", self.b


class LinearLayer:
    def __init__(self, rng, d_in, d_out, bias=True, zero_init=False):
        if zero_init:
            self.w = zeros_param((d_in, d_out))
        else:
            self.w = xavier_normal(rng, (d_in, d_out), d_in, d_out)
        self.b = zeros_param((d_out,)) if bias else None

    def __call__(self, x):
        return E.linear(x, self.w, self.b)

    def param_items(self):
        yield "w", self.w
        if self.b is not None:
            yield "b", self.b


class LayerNormLayer:
    def __init__(self, dim, eps=1e-5):
        self.gain = ones_param((dim,))
        self.bias = zeros_param((dim,))
        self.eps = eps

    def __call__(self, x):
        return E.layernorm(x, self.gain, self.bias, eps=self.eps)

    def param_items(self):
        yield "gain", self.gain
        yield "bias", self.bias


def collect_params(prefix, obj):
    """Flatten a layer (or list of layers) into (dotted-name, tensor) pairs."""
    if isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from collect_params(f"{prefix}.{i}", item)
    elif isinstance(obj, Tensor):
        yield prefix, obj
    else:
        for name, tensor in obj.param_items():
            yield f"{prefix}.{name}", tensor
