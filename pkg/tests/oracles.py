"""Independent brute-force references used to pin expected test values.

Everything here is written the slow, obvious way (explicit loops, direct
formulas) and must stay independent of the library code paths it checks.
"""

import numpy as np


def matmul_loops(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += float(a[i, p]) * float(b[p, j])
            out[i, j] = acc
    return out


def conv2d_loops(x, w, b=None, stride=1, pad=0):
    c_in, h, wd = x.shape
    c_out, c_in2, k, _ = w.shape
    assert c_in == c_in2
    xp = np.zeros((c_in, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    xp[:, pad:pad + h, pad:pad + wd] = x
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((c_out, h_out, w_out), dtype=np.float64)
    for co in range(c_out):
        for i in range(h_out):
            for j in range(w_out):
                acc = 0.0
                for ci in range(c_in):
                    for ki in range(k):
                        for kj in range(k):
                            acc += float(xp[ci, i * stride + ki, j * stride + kj]) \
                                * float(w[co, ci, ki, kj])
                out[co, i, j] = acc + (float(b[co]) if b is not None else 0.0)
    return out


def conv3d_loops(x, w, b=None, stride=1, pad=0):
    c_in, d, h, wd = x.shape
    c_out, c_in2, k, _, _ = w.shape
    assert c_in == c_in2
    xp = np.zeros((c_in, d + 2 * pad, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    xp[:, pad:pad + d, pad:pad + h, pad:pad + wd] = x
    dims_out = [(s + 2 * pad - k) // stride + 1 for s in (d, h, wd)]
    out = np.zeros([c_out] + dims_out, dtype=np.float64)
    for co in range(c_out):
        for i in range(dims_out[0]):
            for j in range(dims_out[1]):
                for l in range(dims_out[2]):
                    acc = 0.0
                    for ci in range(c_in):
                        for ki in range(k):
                            for kj in range(k):
                                for kl in range(k):
                                    acc += float(xp[ci, i * stride + ki,
                                                    j * stride + kj,
                                                    l * stride + kl]) \
                                        * float(w[co, ci, ki, kj, kl])
                    out[co, i, j, l] = acc + (float(b[co]) if b is not None else 0.0)
    return out


def _axis_coords(in_size, out_size):
    src = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    if in_size == 1:
        return np.zeros(out_size, dtype=int), np.zeros(out_size, dtype=int), \
            np.zeros(out_size)
    i0 = np.clip(np.floor(src), 0, in_size - 2).astype(int)
    return i0, i0 + 1, src - i0


def trilinear_points(x, out_dims):
    """Direct 8-corner interpolation at every output voxel."""
    c = x.shape[0]
    in_dims = x.shape[1:]
    plans = [_axis_coords(in_dims[a], out_dims[a]) for a in range(3)]
    out = np.zeros((c,) + tuple(out_dims), dtype=np.float64)
    for i in range(out_dims[0]):
        x0, x1, fx = plans[0][0][i], plans[0][1][i], plans[0][2][i]
        for j in range(out_dims[1]):
            y0, y1, fy = plans[1][0][j], plans[1][1][j], plans[1][2][j]
            for l in range(out_dims[2]):
                z0, z1, fz = plans[2][0][l], plans[2][1][l], plans[2][2][l]
                for ch in range(c):
                    v = 0.0
                    for (xi, wx) in ((x0, 1 - fx), (x1, fx)):
                        for (yi, wy) in ((y0, 1 - fy), (y1, fy)):
                            for (zi, wz) in ((z0, 1 - fz), (z1, fz)):
                                v += wx * wy * wz * float(x[ch, xi, yi, zi])
                    out[ch, i, j, l] = v
    return out


def lift_pointwise(f_x, f_y, f_z, lambdas):
    """Closed-form per-voxel lifted volume, evaluated voxel by voxel."""
    c = f_x.shape[0]
    dx = f_y.shape[1]
    dy = f_x.shape[1]
    dz = f_x.shape[2]
    lx, ly, lz = [float(v) for v in lambdas]
    out = np.zeros((c, dx, dy, dz), dtype=np.float64)
    for ch in range(c):
        for i in range(dx):
            for j in range(dy):
                for k in range(dz):
                    out[ch, i, j, k] = (lx * float(f_x[ch, j, k])
                                        + ly * float(f_y[ch, i, k])
                                        + lz * float(f_z[ch, i, j]))
    return out


def lift_gather(f_x, f_y, f_z, lambdas):
    """Point-query evaluation of the lifted volume: every voxel fetches its
    three plane features by index (the scheme broadcast-summation replaces).
    Independent of the broadcast construction but fast enough for sweeps."""
    c = f_x.shape[0]
    dx, dy, dz = f_y.shape[1], f_x.shape[1], f_x.shape[2]
    ii, jj, kk = np.meshgrid(np.arange(dx), np.arange(dy), np.arange(dz),
                             indexing="ij")
    lam = np.asarray(lambdas, dtype=np.float64)
    out = np.zeros((c, dx, dy, dz), dtype=np.float64)
    for ch in range(c):
        out[ch] = (lam[0] * f_x[ch][jj, kk]
                   + lam[1] * f_y[ch][ii, kk]
                   + lam[2] * f_z[ch][ii, jj])
    return out


def block_mean(x, factors):
    c = x.shape[0]
    out_dims = [s // f for s, f in zip(x.shape[1:], factors)]
    out = np.zeros([c] + out_dims, dtype=np.float64)
    fx, fy, fz = factors
    for ch in range(c):
        for i in range(out_dims[0]):
            for j in range(out_dims[1]):
                for k in range(out_dims[2]):
                    block = x[ch, i * fx:(i + 1) * fx, j * fy:(j + 1) * fy,
                              k * fz:(k + 1) * fz]
                    out[ch, i, j, k] = float(np.mean(block))
    return out


def chamfer_two_sets(points_a, points_b):
    """Symmetric mean of squared nearest-neighbour distances."""
    a = np.asarray(points_a, dtype=np.float64)
    b = np.asarray(points_b, dtype=np.float64)
    d_ab = [min(float(np.sum((p - q) ** 2)) for q in b) for p in a]
    d_ba = [min(float(np.sum((p - q) ** 2)) for q in a) for p in b]
    return 0.5 * (np.mean(d_ab) + np.mean(d_ba))
