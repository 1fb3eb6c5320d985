"""Adaptive positional modulation and its ablation variants.

The volume is summarized into one token per slice per axis; an encoder
turns those tokens into per-axis, per-channel profiles.  Profiles expand
into weight volumes by a separable outer sum,

    W(c, i, j, k) = e_x(c, i) + e_y(c, j) + e_z(c, k),

which are added to the input before projection and to the lifted volume
after reconstruction.  Variants: `none` (identity), fixed `sinusoidal`
features, `coordconv` coordinate channels (pre-projection path only), a
learned `mlp` on normalized coordinates, and the `transformer` encoder
over the concatenated token sequence.  All profile heads start at zero,
so a freshly built modulator is exactly the identity.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import engine as E
from .engine import ShapeError, Tensor
from .errors import ConfigError
from .nn import LayerNormLayer, LinearLayer, collect_params
from .backbone import VoxelGrid


@dataclass
class AxisTokens:
    """One token per slice: shape (D_k, C) per axis."""

    x: Tensor
    y: Tensor
    z: Tensor

    def as_list(self):
        return [self.x, self.y, self.z]


@dataclass
class AxisEmbeddings:
    """Per-axis profiles: `pre` rows are (C, D_k), `post` rows are (C', D_k)."""

    pre: tuple
    post: tuple


def summarize_tokens(v) -> AxisTokens:
    """Mean over the two complementary axes, one sequence per axis."""
    data = v.data if isinstance(v, VoxelGrid) else v
    # reduce the later axis first so the earlier index keeps its position
    t_x = E.avg_reduce_axis(E.avg_reduce_axis(data, 3), 2)   # (C, Dx)
    t_y = E.avg_reduce_axis(E.avg_reduce_axis(data, 3), 1)   # (C, Dy)
    t_z = E.avg_reduce_axis(E.avg_reduce_axis(data, 2), 1)   # (C, Dz)
    return AxisTokens(*(E.transpose2d(t) for t in (t_x, t_y, t_z)))


def normalized_coords(size: int) -> np.ndarray:
    if size == 1:
        return np.zeros(1)
    return np.arange(size) / (size - 1)


def coord_channel_volume(dims) -> np.ndarray:
    """Three channels holding each voxel's normalized x, y, z coordinate."""
    grids = np.meshgrid(*(normalized_coords(d) for d in dims), indexing="ij")
    return np.stack(grids, axis=0)


def build_weight_volume(profiles, dims) -> Tensor:
    """Expand three (C, D_k) profiles into one (C, Dx, Dy, Dz) volume."""
    e_x, e_y, e_z = profiles
    dx, dy, dz = dims
    c = e_x.shape[0]
    expect = ((c, dx), (c, dy), (c, dz))
    got = (e_x.shape, e_y.shape, e_z.shape)
    if got != expect:
        raise ShapeError(f"profile shapes {got} do not match dims {tuple(dims)}")
    vol_x = E.broadcast_along_axis(E.broadcast_along_axis(e_x, 2, dy), 3, dz)
    vol_y = E.broadcast_along_axis(E.broadcast_along_axis(e_y, 1, dx), 3, dz)
    vol_z = E.broadcast_along_axis(E.broadcast_along_axis(e_z, 1, dx), 2, dy)
    return E.add(E.add(vol_x, vol_y), vol_z)


def pre_modulate(v, weight: Tensor):
    data = v.data if isinstance(v, VoxelGrid) else v
    if data.shape != weight.shape:
        raise ShapeError(f"pre_modulate: {data.shape} vs {weight.shape}")
    out = E.add(data, weight)
    return VoxelGrid(out) if isinstance(v, VoxelGrid) else out


def post_modulate(t: Tensor, weight: Tensor) -> Tensor:
    if t.shape != weight.shape:
        raise ShapeError(f"post_modulate: {t.shape} vs {weight.shape}")
    return E.add(t, weight)


class MultiHeadSelfAttention:
    def __init__(self, rng, dim, heads):
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q = LinearLayer(rng, dim, dim)
        self.k = LinearLayer(rng, dim, dim)
        self.v = LinearLayer(rng, dim, dim)
        self.out = LinearLayer(rng, dim, dim)
        self.last_attention = None

    def __call__(self, x: Tensor) -> Tensor:
        q, k, v = self.q(x), self.k(x), self.v(x)
        ctx = []
        attn_probe = []
        for h in range(self.heads):
            lo = h * self.head_dim
            qh = E.narrow(q, 1, lo, self.head_dim)
            kh = E.narrow(k, 1, lo, self.head_dim)
            vh = E.narrow(v, 1, lo, self.head_dim)
            scores = E.scale(E.matmul(qh, E.transpose2d(kh)),
                             1.0 / math.sqrt(self.head_dim))
            attn = E.softmax(scores, axis=-1)
            attn_probe.append(attn.data)
            ctx.append(E.matmul(attn, vh))
        self.last_attention = attn_probe
        return self.out(E.concat(ctx, axis=1))

    def param_items(self):
        for name, layer in (("q", self.q), ("k", self.k),
                            ("v", self.v), ("out", self.out)):
            yield from collect_params(name, layer)


class EncoderLayer:
    """Pre-norm self-attention block with a 2x feed-forward."""

    def __init__(self, rng, dim, heads, ffn_expand=2):
        self.ln1 = LayerNormLayer(dim)
        self.attn = MultiHeadSelfAttention(rng, dim, heads)
        self.ln2 = LayerNormLayer(dim)
        self.ff1 = LinearLayer(rng, dim, ffn_expand * dim)
        self.ff2 = LinearLayer(rng, ffn_expand * dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        x = E.add(x, self.attn(self.ln1(x)))
        return E.add(x, self.ff2(E.relu(self.ff1(self.ln2(x)))))

    def param_items(self):
        for name, part in (("ln1", self.ln1), ("attn", self.attn),
                           ("ln2", self.ln2), ("ff1", self.ff1),
                           ("ff2", self.ff2)):
            yield from collect_params(name, part)


class TransformerModulator:
    """Joint encoder over the Dx+Dy+Dz token sequence, two profile heads."""

    def __init__(self, rng, in_channels, feat_channels, pe_cfg):
        self.cfg = pe_cfg
        dim = pe_cfg.model_dim
        self.token_proj = LinearLayer(rng, in_channels, dim)
        self.axis_embed = Tensor(rng.normal(0.0, 0.02, size=(3, dim)),
                                 requires_grad=True)
        self.pos_embed = Tensor(rng.normal(0.0, 0.02, size=(pe_cfg.max_positions, dim)),
                                requires_grad=True)
        self.layers = [EncoderLayer(rng, dim, pe_cfg.heads, pe_cfg.ffn_expand)
                       for _ in range(pe_cfg.layers)]
        self.final_ln = LayerNormLayer(dim)
        self.head_pre = LinearLayer(rng, dim, in_channels, zero_init=True)
        self.head_post = LinearLayer(rng, dim, feat_channels, zero_init=True)

    def __call__(self, tokens: AxisTokens) -> AxisEmbeddings:
        seqs = []
        lengths = []
        for axis, tok in enumerate(tokens.as_list()):
            d_k = tok.shape[0]
            if d_k > self.cfg.max_positions:
                raise ConfigError(f"axis length {d_k} exceeds configured "
                                  f"max_positions {self.cfg.max_positions}")
            h = self.token_proj(tok)
            axis_row = E.reshape(E.narrow(self.axis_embed, 0, axis, 1),
                                 (self.cfg.model_dim,))
            h = E.add_rowvec(h, axis_row)
            if self.cfg.position_embeddings:
                h = E.add(h, E.narrow(self.pos_embed, 0, 0, d_k))
            seqs.append(h)
            lengths.append(d_k)
        seq = E.concat(seqs, axis=0)
        for layer in self.layers:
            seq = layer(seq)
        seq = self.final_ln(seq)
        pre_seq = self.head_pre(seq)
        post_seq = self.head_post(seq)
        pre, post, offset = [], [], 0
        for d_k in lengths:
            pre.append(E.transpose2d(E.narrow(pre_seq, 0, offset, d_k)))
            post.append(E.transpose2d(E.narrow(post_seq, 0, offset, d_k)))
            offset += d_k
        return AxisEmbeddings(pre=tuple(pre), post=tuple(post))

    def param_items(self):
        yield from collect_params("token_proj", self.token_proj)
        yield "axis_embed", self.axis_embed
        yield "pos_embed", self.pos_embed
        yield from collect_params("layer", self.layers)
        yield from collect_params("final_ln", self.final_ln)
        yield from collect_params("head_pre", self.head_pre)
        yield from collect_params("head_post", self.head_post)


class SinusoidalModulator:
    """Fixed sin/cos coordinate features through learned per-axis heads."""

    def __init__(self, rng, in_channels, feat_channels, pe_cfg, dims):
        del rng  # heads are zero-initialized; nothing random here
        self.freqs = [2.0 ** p for p in range(pe_cfg.frequencies)]
        self.dims = tuple(dims)
        self._features = {}
        width = 2 * pe_cfg.frequencies
        self.heads_pre = [LinearLayer(None, width, in_channels, zero_init=True)
                          for _ in range(3)]
        self.heads_post = [LinearLayer(None, width, feat_channels, zero_init=True)
                           for _ in range(3)]

    def _axis_features(self, size, dtype) -> Tensor:
        key = (size, np.dtype(dtype).str)
        cached = self._features.get(key)
        if cached is None:
            u = normalized_coords(size)
            cols = []
            for f in self.freqs:
                cols.append(np.sin(math.pi * f * u))
                cols.append(np.cos(math.pi * f * u))
            cached = Tensor(np.stack(cols, axis=1), dtype=dtype)
            self._features[key] = cached
        return cached

    def __call__(self, tokens: AxisTokens) -> AxisEmbeddings:
        dtype = tokens.x.dtype
        pre, post = [], []
        for axis, size in enumerate(self.dims):
            feats = self._axis_features(size, dtype)
            pre.append(E.transpose2d(self.heads_pre[axis](feats)))
            post.append(E.transpose2d(self.heads_post[axis](feats)))
        return AxisEmbeddings(pre=tuple(pre), post=tuple(post))

    def param_items(self):
        yield from collect_params("head_pre", self.heads_pre)
        yield from collect_params("head_post", self.heads_post)


class MlpModulator:
    """Shared 2-layer MLP on (normalized coordinate, axis one-hot)."""

    def __init__(self, rng, in_channels, feat_channels, pe_cfg, dims):
        self.dims = tuple(dims)
        self._features = {}
        self.body = LinearLayer(rng, 4, pe_cfg.mlp_hidden)
        self.head_pre = LinearLayer(None, pe_cfg.mlp_hidden, in_channels,
                                    zero_init=True)
        self.head_post = LinearLayer(None, pe_cfg.mlp_hidden, feat_channels,
                                     zero_init=True)

    def _axis_features(self, axis, size, dtype) -> Tensor:
        key = (axis, size, np.dtype(dtype).str)
        cached = self._features.get(key)
        if cached is None:
            feats = np.zeros((size, 4))
            feats[:, 0] = normalized_coords(size)
            feats[:, 1 + axis] = 1.0
            cached = Tensor(feats, dtype=dtype)
            self._features[key] = cached
        return cached

    def __call__(self, tokens: AxisTokens) -> AxisEmbeddings:
        dtype = tokens.x.dtype
        pre, post = [], []
        for axis, size in enumerate(self.dims):
            hidden = E.relu(self.body(self._axis_features(axis, size, dtype)))
            pre.append(E.transpose2d(self.head_pre(hidden)))
            post.append(E.transpose2d(self.head_post(hidden)))
        return AxisEmbeddings(pre=tuple(pre), post=tuple(post))

    def param_items(self):
        yield from collect_params("body", self.body)
        yield from collect_params("head_pre", self.head_pre)
        yield from collect_params("head_post", self.head_post)


def build_modulator(rng, in_channels, feat_channels, pe_cfg, dims):
    """Factory for the embedding-producing variants; returns None for
    `none` and `coordconv` (the latter is handled as extra input channels)."""
    if pe_cfg.mode in ("none", "coordconv"):
        return None
    if pe_cfg.mode == "transformer":
        return TransformerModulator(rng, in_channels, feat_channels, pe_cfg)
    if pe_cfg.mode == "sinusoidal":
        return SinusoidalModulator(rng, in_channels, feat_channels, pe_cfg, dims)
    if pe_cfg.mode == "mlp":
        return MlpModulator(rng, in_channels, feat_channels, pe_cfg, dims)
    raise ConfigError(f"unknown pe mode {pe_cfg.mode!r}")
