"""Low-resolution volumetric branch and stream fusion.

The branch downsamples the input volume, runs a compact 3D conv stack for
coarse global context, and upsamples the result back to full resolution.
Fusion is element-wise summation of the lifted and volumetric streams
followed by a 1x1x1 channel mixer; summation keeps the channel depth flat.
"""

import math

from . import engine as E
from .engine import ShapeError, Tensor
from .backbone import VoxelGrid
from .nn import Conv3dLayer, collect_params


def downsample(v, ratio: float):
    """Shrink each axis by `ratio`: block averaging when 1/ratio is an
    integral divisor of every axis, trilinear resampling otherwise."""
    data = v.data if isinstance(v, VoxelGrid) else v
    if not 0.0 < ratio <= 1.0:
        raise ShapeError(f"downsample ratio must be in (0,1], got {ratio}")
    if ratio == 1.0:
        return v
    dims = data.shape[1:]
    target = tuple(math.ceil(ratio * d) for d in dims)
    if any(t < 1 for t in target):
        raise ShapeError(f"ratio {ratio} collapses dims {dims}")
    inv = 1.0 / ratio
    if inv == int(inv) and all(d % int(inv) == 0 for d in dims):
        out = E.avg_pool(data, (int(inv),) * 3)
    else:
        out = E.trilinear_resize(data, target)
    return VoxelGrid(out) if isinstance(v, VoxelGrid) else out


class VolumeEncoder:
    """Compact 3D conv stack, same padding, relu between layers."""

    def __init__(self, rng, c_in, hidden, c_out, layers=3, kernel=3):
        widths = [c_in] + [hidden] * (layers - 1) + [c_out]
        self.convs = [Conv3dLayer(rng, widths[i], widths[i + 1], kernel)
                      for i in range(layers)]

    def __call__(self, v) -> Tensor:
        out = v.data if isinstance(v, VoxelGrid) else v
        for i, conv in enumerate(self.convs):
            out = conv(out)
            if i < len(self.convs) - 1:
                out = E.relu(out)
        return out

    def param_items(self):
        yield from collect_params("convs", self.convs)


def upsample_to(g: Tensor, dims) -> Tensor:
    """Trilinear resize back to the working resolution (identity if equal)."""
    if g.shape[1:] == tuple(dims):
        return g
    return E.trilinear_resize(g, dims)


def fuse(t_prime: Tensor, g: Tensor, mixer_and_head) -> Tensor:
    """Element-wise sum of the two streams, then the channel mixer + head."""
    if t_prime.shape != g.shape:
        raise ShapeError(f"fuse: {t_prime.shape} vs {g.shape}")
    return mixer_and_head(E.add(t_prime, g))
