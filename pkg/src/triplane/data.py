"""Synthetic procedural shape volumes.

Four solid primitives (sphere, box, torus, cone) with randomized pose,
scale, and thickness, rasterized from analytic signed distances on a
voxel-center grid over the world cube [-1, 1]^3.  Occupancy is a clamped
linear ramp of the negative distance, one voxel wide, so values live in
[0, 1] with a soft boundary shell.

The completion task input is produced by `occlude`, which removes a
contiguous axis-aligned region covering a requested fraction of the
occupied voxels.
"""

from dataclasses import dataclass

import numpy as np

from .backbone import VoxelGrid
from .engine import Tensor
from .errors import ConfigError, DataError

CLASS_NAMES = ("sphere", "box", "torus", "cone")
OCCUPANCY_THRESHOLD = 0.5
MIN_FILL = 0.01


@dataclass
class ShapeSample:
    volume: VoxelGrid            # network input (occluded for completion)
    label: int
    target: VoxelGrid | None = None   # full shape, completion only

    @property
    def class_name(self):
        return CLASS_NAMES[self.label]


def _voxel_centers(dims):
    axes = [(np.arange(d) + 0.5) / d * 2.0 - 1.0 for d in dims]
    return np.meshgrid(*axes, indexing="ij")


def _rotation_matrix(rng):
    # uniform random rotation from a normalized quaternion
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _sdf_sphere(p, radius):
    return np.sqrt((p ** 2).sum(axis=0)) - radius


def _sdf_box(p, half_extents):
    q = np.abs(p) - half_extents.reshape(3, 1, 1, 1)
    outside = np.sqrt((np.maximum(q, 0.0) ** 2).sum(axis=0))
    inside = np.minimum(q.max(axis=0), 0.0)
    return outside + inside


def _sdf_torus(p, major, minor):
    ring = np.sqrt(p[0] ** 2 + p[1] ** 2) - major
    return np.sqrt(ring ** 2 + p[2] ** 2) - minor


def _sdf_cone(p, height, base_radius):
    # solid capped cone, apex up, base at z = -height/2
    z = p[2] + height / 2.0
    r = np.sqrt(p[0] ** 2 + p[1] ** 2)
    slope_r = base_radius * np.clip(1.0 - z / height, 0.0, 1.0)
    side = r - slope_r
    caps = np.maximum(-z, z - height)
    return np.maximum(side, caps)


def _shape_sdf(rng, label, coords):
    rot = _rotation_matrix(rng)
    center = rng.uniform(-0.15, 0.15, size=3)
    p = np.stack(coords, axis=0)
    p = p - center.reshape(3, 1, 1, 1)
    p = np.einsum("ab,bxyz->axyz", rot.T, p)
    if label == 0:
        return _sdf_sphere(p, radius=rng.uniform(0.38, 0.6))
    if label == 1:
        return _sdf_box(p, half_extents=rng.uniform(0.25, 0.55, size=3))
    if label == 2:
        return _sdf_torus(p, major=rng.uniform(0.35, 0.55),
                          minor=rng.uniform(0.10, 0.22))
    if label == 3:
        return _sdf_cone(p, height=rng.uniform(0.7, 1.1),
                         base_radius=rng.uniform(0.3, 0.55))
    raise ConfigError(f"unknown class id {label}")


def make_shape(seed, label, dims) -> np.ndarray:
    """One occupancy volume (1, Dx, Dy, Dz), float32, deterministic per seed."""
    coords = _voxel_centers(dims)
    edge = 2.0 / min(dims)  # one voxel in world units
    rng = np.random.default_rng(seed)
    for _ in range(16):
        sdf = _shape_sdf(rng, label, coords)
        occ = np.clip(0.5 - sdf / edge, 0.0, 1.0).astype(np.float32)
        fill = float((occ > OCCUPANCY_THRESHOLD).mean())
        if fill >= MIN_FILL:
            return occ[None]
    raise DataError(f"could not draw a non-empty class-{label} shape for seed {seed}")


def occlude(v: VoxelGrid, fraction: float, seed) -> VoxelGrid:
    """Zero a contiguous axis-aligned region holding ~`fraction` of the
    occupied voxels: full slabs off one end of a random axis, with the
    boundary slab trimmed along a second axis to land near the target."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"occlusion fraction must lie in (0,1), got {fraction}")
    occ = np.asarray(v.data.data)
    mask = occ[0] > OCCUPANCY_THRESHOLD
    total = int(mask.sum())
    if total == 0:
        raise DataError("cannot occlude an empty volume")
    rng = np.random.default_rng(seed)
    axis = int(rng.integers(0, 3))
    from_high = bool(rng.integers(0, 2))
    target = fraction * total

    counts = mask.sum(axis=tuple(a for a in range(3) if a != axis))
    if from_high:
        counts = counts[::-1]
    cum = np.concatenate([[0], np.cumsum(counts)])
    n_full = int(np.searchsorted(cum, target, side="right")) - 1
    n_full = min(max(n_full, 0), len(counts) - 1)
    removed = float(cum[n_full])

    keep = np.ones_like(mask)
    size = mask.shape[axis]

    def slab(index):
        real = size - 1 - index if from_high else index
        return tuple(real if a == axis else slice(None) for a in range(3))

    for s in range(n_full):
        keep[slab(s)] = False

    # trim the boundary slab along the next axis until the target is met
    deficit = target - removed
    if deficit > 0 and n_full < size:
        boundary = slab(n_full)
        second = (axis + 1) % 3
        second_in_slab = second if second < axis else second - 1
        slab_mask = mask[boundary]
        line = slab_mask.sum(axis=tuple(a for a in range(2)
                                        if a != second_in_slab))
        cut = int(np.searchsorted(np.cumsum(line), deficit, side="left")) + 1
        cut = min(cut, line.size)
        trim = [slice(None), slice(None)]
        trim[second_in_slab] = slice(0, cut)
        region = keep[boundary]
        region[tuple(trim)] = False
        keep[boundary] = region

    out = occ * keep[None]
    return VoxelGrid(Tensor(out, dtype=occ.dtype))


def gen_shapes(seed, count, dims, task="classify", occlusion=0.4,
               classes=CLASS_NAMES) -> list:
    """Deterministic, class-balanced list of `ShapeSample`s."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 16 for d in dims):
        raise ConfigError(f"dataset dims must be at least 16 per axis, got {dims}")
    if count < 1:
        raise ConfigError("count must be positive")
    if task not in ("classify", "complete"):
        raise ConfigError(f"unknown task {task!r}")
    samples = []
    for i in range(count):
        label = i % len(classes)
        full = make_shape([seed, i], label, dims)
        grid = VoxelGrid(Tensor(full))
        if task == "complete":
            occluded = occlude(grid, occlusion, seed=[seed, i, 1])
            samples.append(ShapeSample(volume=occluded, label=label, target=grid))
        else:
            samples.append(ShapeSample(volume=grid, label=label))
    return samples
