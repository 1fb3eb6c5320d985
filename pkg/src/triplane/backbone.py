"""Tri-plane backbone: orthogonal mean projections, per-plane 2D encoders,
and interpolation-free broadcast-summation lifting.

Volumes are channel-major `(C, Dx, Dy, Dz)`.  Plane index convention is
canonical remaining-axes order: the x-plane is indexed `(y, z)`, the
y-plane `(x, z)`, the z-plane `(x, y)`.  Lifting reconstructs

    T(c, i, j, k) = w_x * F_x(c, j, k) + w_y * F_y(c, i, k) + w_z * F_z(c, i, j)

with one broadcast and two adds per plane - no point queries, no
interpolation.
"""

from dataclasses import dataclass

import numpy as np

from . import engine as E
from .engine import ShapeError, Tensor
from .nn import Conv2dLayer, collect_params

AXIS_X, AXIS_Y, AXIS_Z = 1, 2, 3


@dataclass
class VoxelGrid:
    """Channel-major voxel volume with explicit axis sizes."""

    data: Tensor

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ShapeError(f"VoxelGrid expects (C,Dx,Dy,Dz), got {self.data.shape}")
        if any(d < 1 for d in self.data.shape):
            raise ShapeError(f"degenerate volume {self.data.shape}")

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def dims(self):
        return self.data.shape[1:]

    @classmethod
    def from_array(cls, arr, dtype=None):
        arr = np.asarray(arr)
        if arr.ndim == 3:
            arr = arr[None]
        return cls(Tensor(arr, dtype=dtype))


def project_planes(v: VoxelGrid):
    """Mean-project a volume along each primary axis.

    Returns (P_x, P_y, P_z) with shapes (C,Dy,Dz), (C,Dx,Dz), (C,Dx,Dy).
    """
    data = v.data if isinstance(v, VoxelGrid) else v
    return tuple(E.avg_reduce_axis(data, axis) for axis in (AXIS_X, AXIS_Y, AXIS_Z))


@dataclass
class TriPlaneSet:
    """Three plane feature maps plus their learnable blend weights.

    `lambdas` is shape (3,) for scalar blending or (3, C') per channel.
    """

    f_x: Tensor
    f_y: Tensor
    f_z: Tensor

    lambdas: Tensor

    def __post_init__(self):
        cs = {self.f_x.shape[0], self.f_y.shape[0], self.f_z.shape[0]}
        if len(cs) != 1:
            raise ShapeError(f"plane channel counts differ: "
                             f"{self.f_x.shape[0]}/{self.f_y.shape[0]}/{self.f_z.shape[0]}")
        if self.lambdas.shape not in ((3,), (3, self.f_x.shape[0])):
            raise ShapeError(f"lambdas must be (3,) or (3,C'), got {self.lambdas.shape}")

    @property
    def channels(self):
        return self.f_x.shape[0]

    def volume_dims(self):
        dx = self.f_y.shape[1]
        dy = self.f_x.shape[1]
        dz = self.f_x.shape[2]
        if self.f_y.shape[2] != dz or self.f_z.shape[1:] != (dx, dy):
            raise ShapeError("plane shapes are not consistent with one volume")
        return (dx, dy, dz)


class PlaneEncoder:
    """Small same-padding 2D conv stack, relu between layers."""

    def __init__(self, rng, c_in, hidden, c_out, layers=3, kernel=3):
        widths = [c_in] + [hidden] * (layers - 1) + [c_out]
        self.convs = [Conv2dLayer(rng, widths[i], widths[i + 1], kernel)
                      for i in range(layers)]

    def __call__(self, plane: Tensor) -> Tensor:
        out = plane
        for i, conv in enumerate(self.convs):
            out = conv(out)
            if i < len(self.convs) - 1:
                out = E.relu(out)
        return out

    def param_items(self):
        yield from collect_params("convs", self.convs)


def encode_planes(planes, encoders) -> list:
    """Run each projection through its encoder; one shared encoder is allowed."""
    if len(planes) != 3:
        raise ShapeError("expected three planes")
    if not isinstance(encoders, (list, tuple)):
        encoders = [encoders] * 3
    feats = [enc(p) for enc, p in zip(encoders, planes)]
    if len({f.shape[0] for f in feats}) != 1:
        raise ShapeError("encoders produced differing channel counts")
    return feats


def lift_and_fuse(t: TriPlaneSet, dims=None) -> Tensor:
    """Broadcast each plane along its missing axis and blend.

    One-step reconstruction of the feature volume; differentiable in the
    plane features and in the blend weights.
    """
    dx, dy, dz = t.volume_dims()
    if dims is not None and tuple(dims) != (dx, dy, dz):
        raise ShapeError(f"plane dims imply {(dx, dy, dz)}, caller expects {tuple(dims)}")
    lifted_x = E.broadcast_along_axis(t.f_x, AXIS_X, dx)
    lifted_y = E.broadcast_along_axis(t.f_y, AXIS_Y, dy)
    lifted_z = E.broadcast_along_axis(t.f_z, AXIS_Z, dz)
    parts = []
    for idx, lifted in enumerate((lifted_x, lifted_y, lifted_z)):
        w = E.narrow(t.lambdas, 0, idx, 1)
        if t.lambdas.ndim == 1:
            parts.append(E.mul(lifted, w))
        else:
            parts.append(E.channel_scale(lifted, E.reshape(w, (t.channels,))))
    return E.add(E.add(parts[0], parts[1]), parts[2])


class TriPlaneBackbone:
    """project -> encode -> lift, the plane-only feature extractor."""

    def __init__(self, rng, c_in, feat_channels, plane_cfg, per_channel_lambda=False):
        if plane_cfg.shared:
            shared = PlaneEncoder(rng, c_in, plane_cfg.hidden, feat_channels,
                                  plane_cfg.layers, plane_cfg.kernel)
            self.encoders = [shared, shared, shared]
            self._unique_encoders = [shared]
        else:
            self.encoders = [PlaneEncoder(rng, c_in, plane_cfg.hidden, feat_channels,
                                          plane_cfg.layers, plane_cfg.kernel)
                             for _ in range(3)]
            self._unique_encoders = self.encoders
        shape = (3, feat_channels) if per_channel_lambda else (3,)
        self.lambdas = Tensor(np.full(shape, 1.0 / 3.0), requires_grad=True)

    def __call__(self, v) -> Tensor:
        planes = project_planes(v)
        feats = encode_planes(planes, self.encoders)
        tri = TriPlaneSet(*feats, lambdas=self.lambdas)
        return lift_and_fuse(tri)

    def param_items(self):
        names = ["plane_x", "plane_y", "plane_z"][:len(self._unique_encoders)]
        if len(self._unique_encoders) == 1:
            names = ["plane_shared"]
        for name, enc in zip(names, self._unique_encoders):
            yield from collect_params(name, enc)
        yield "lift.lambdas", self.lambdas
