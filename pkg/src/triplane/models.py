"""Model assembly for the three comparison variants.

  backbone   plane projections -> 2D encoders -> lifting -> task head
  hybrid     adds positional modulation, the low-resolution volumetric
             stream, and the 1x1x1 channel mixer before the head
  dense3d    full-resolution 3D conv stack, the expensive reference

A hybrid with modulation off, the volumetric branch off, and an identity
mixer executes exactly the backbone graph, so the two produce bitwise
identical outputs - the reduction used by the identity tests.
"""

import numpy as np

from . import engine as E
from .engine import ShapeError, Tensor
from .backbone import TriPlaneBackbone, VoxelGrid
from .config import ModelConfig
from .nn import Conv3dLayer, LinearLayer, collect_params
from .posenc import (
    build_modulator, build_weight_volume, coord_channel_volume,
    post_modulate, pre_modulate, summarize_tokens,
)
from .volumetric import VolumeEncoder, downsample, upsample_to


class DenseHead:
    """1x1x1 conv producing per-voxel logits."""

    def __init__(self, rng, c_in, c_out=1):
        self.conv = Conv3dLayer(rng, c_in, c_out, kernel=1, pad=0)

    def __call__(self, feat: Tensor) -> Tensor:
        return self.conv(feat)

    def param_items(self):
        yield from collect_params("conv", self.conv)


class ClassifyHead:
    """Global average pool over space, then a small two-layer classifier."""

    def __init__(self, rng, c_in, classes):
        self.hidden = 2 * c_in
        self.fc1 = LinearLayer(rng, c_in, self.hidden)
        self.fc2 = LinearLayer(rng, self.hidden, classes)
        self.c_in = c_in

    def __call__(self, feat: Tensor) -> Tensor:
        pooled = feat
        for _ in range(3):
            pooled = E.avg_reduce_axis(pooled, 1)
        hidden = E.relu(self.fc1(E.reshape(pooled, (1, self.c_in))))
        logits = self.fc2(hidden)
        return E.reshape(logits, (logits.shape[1],))

    def param_items(self):
        yield from collect_params("fc1", self.fc1)
        yield from collect_params("fc2", self.fc2)


class Mixer:
    """(layers-1) 1x1x1 convs with relu, feeding the task head."""

    def __init__(self, rng, channels, layers):
        self.convs = [Conv3dLayer(rng, channels, channels, kernel=1, pad=0)
                      for _ in range(max(0, layers - 1))]

    def __call__(self, feat: Tensor) -> Tensor:
        for conv in self.convs:
            feat = E.relu(conv(feat))
        return feat

    def param_items(self):
        yield from collect_params("convs", self.convs)


def _make_head(rng, cfg, c_in):
    if cfg.task == "classify":
        return ClassifyHead(rng, c_in, cfg.classes)
    return DenseHead(rng, c_in, 1)


def _component_rngs(seed):
    """One independent stream per component, in a fixed order.

    Components initialize identically for a given seed whether or not the
    others exist, so ablated variants share weights with the full model.
    """
    names = ("backbone", "pe", "vol", "mixer", "head", "dense")
    return {name: np.random.default_rng([seed, i])
            for i, name in enumerate(names)}


def _check_input(cfg, x: Tensor):
    expect = (cfg.in_channels,) + cfg.dims
    if x.shape != expect:
        raise ShapeError(f"model built for input {expect}, got {x.shape}")


class BackboneModel:
    variant = "backbone"

    def __init__(self, cfg: ModelConfig):
        rngs = _component_rngs(cfg.seed)
        self.cfg = cfg
        self.backbone = TriPlaneBackbone(rngs["backbone"], cfg.in_channels,
                                         cfg.feat_channels, cfg.plane,
                                         cfg.per_channel_lambda)
        self.head = _make_head(rngs["head"], cfg, cfg.feat_channels)

    def forward(self, x: Tensor) -> Tensor:
        _check_input(self.cfg, x)
        return self.head(self.backbone(x))

    __call__ = forward

    def param_items(self):
        yield from collect_params("backbone", self.backbone)
        yield from collect_params("head", self.head)


class HybridModel:
    variant = "hybrid"

    def __init__(self, cfg: ModelConfig):
        rngs = _component_rngs(cfg.seed)
        self.cfg = cfg
        plane_in = cfg.in_channels + (3 if cfg.pe.mode == "coordconv" else 0)
        self.backbone = TriPlaneBackbone(rngs["backbone"], plane_in,
                                         cfg.feat_channels, cfg.plane,
                                         cfg.per_channel_lambda)
        self.modulator = build_modulator(rngs["pe"], cfg.in_channels,
                                         cfg.feat_channels, cfg.pe, cfg.dims)
        self.vol_encoder = None
        if cfg.vol.enabled:
            vol_in = cfg.in_channels
            if cfg.pe.mode == "coordconv" and cfg.vol.use_modulated_input:
                vol_in = plane_in
            self.vol_encoder = VolumeEncoder(rngs["vol"], vol_in, cfg.vol.hidden,
                                             cfg.feat_channels, cfg.vol.layers,
                                             cfg.vol.kernel)
        self.mixer = None
        if not cfg.fusion.identity:
            self.mixer = Mixer(rngs["mixer"], cfg.feat_channels, cfg.fusion.layers)
        self.head = _make_head(rngs["head"], cfg, cfg.feat_channels)
        self._coord_cache = {}

    def _coord_channels(self, dtype) -> Tensor:
        key = np.dtype(dtype).str
        cached = self._coord_cache.get(key)
        if cached is None:
            cached = Tensor(coord_channel_volume(self.cfg.dims), dtype=dtype)
            self._coord_cache[key] = cached
        return cached

    def _prologue(self, x: Tensor):
        """Modulation embeddings and the (possibly modulated) plane input."""
        cfg = self.cfg
        embeddings = None
        if self.modulator is not None:
            embeddings = self.modulator(summarize_tokens(x))
        if cfg.pe.mode == "coordconv":
            plane_input = E.concat([x, self._coord_channels(x.dtype)], axis=0)
        elif embeddings is not None:
            w_pre = build_weight_volume(embeddings.pre, cfg.dims)
            plane_input = pre_modulate(x, w_pre)
        else:
            plane_input = x
        return plane_input, embeddings

    def _lifted_stream(self, plane_input, embeddings) -> Tensor:
        lifted = self.backbone(plane_input)
        if embeddings is not None:
            w_post = build_weight_volume(embeddings.post, self.cfg.dims)
            lifted = post_modulate(lifted, w_post)
        return lifted

    def _volumetric_stream(self, x, plane_input) -> Tensor:
        cfg = self.cfg
        vol_source = plane_input if cfg.vol.use_modulated_input else x
        coarse = downsample(vol_source, cfg.vol.ratio)
        return upsample_to(self.vol_encoder(coarse), cfg.dims)

    def _epilogue(self, fused: Tensor) -> Tensor:
        if self.mixer is not None:
            fused = self.mixer(fused)
        return self.head(fused)

    def forward(self, x: Tensor) -> Tensor:
        _check_input(self.cfg, x)
        plane_input, embeddings = self._prologue(x)
        lifted = self._lifted_stream(plane_input, embeddings)
        if self.vol_encoder is not None:
            fused = E.add(lifted, self._volumetric_stream(x, plane_input))
        else:
            fused = lifted
        return self._epilogue(fused)

    def forward_concurrent(self, x: Tensor, executor) -> Tensor:
        """Forward pass with the 2D and 3D streams on separate workers.

        Inference only (no tape may be active); the streams are pure
        functions of their inputs so joining at the fusion add is safe.
        """
        if E.active_tape() is not None:
            raise E.EngineError("concurrent forward is inference-only")
        _check_input(self.cfg, x)
        if self.vol_encoder is None:
            return self.forward(x)
        plane_input, embeddings = self._prologue(x)
        lifted_f = executor.submit(self._lifted_stream, plane_input, embeddings)
        vol_f = executor.submit(self._volumetric_stream, x, plane_input)
        fused = E.add(lifted_f.result(), vol_f.result())
        return self._epilogue(fused)

    __call__ = forward

    def param_items(self):
        yield from collect_params("backbone", self.backbone)
        if self.modulator is not None:
            yield from collect_params("pe", self.modulator)
        if self.vol_encoder is not None:
            yield from collect_params("vol", self.vol_encoder)
        if self.mixer is not None:
            yield from collect_params("mixer", self.mixer)
        yield from collect_params("head", self.head)


class Dense3dModel:
    """Full-resolution 3D conv stack: the expressive, expensive baseline."""

    variant = "dense3d"

    def __init__(self, cfg: ModelConfig):
        rngs = _component_rngs(cfg.seed)
        self.cfg = cfg
        widths = [cfg.in_channels, *cfg.dense_channels, cfg.feat_channels]
        rng = rngs["dense"]
        self.convs = [Conv3dLayer(rng, widths[i], widths[i + 1], 3)
                      for i in range(len(widths) - 1)]
        self.head = _make_head(rngs["head"], cfg, cfg.feat_channels)

    def forward(self, x: Tensor) -> Tensor:
        _check_input(self.cfg, x)
        out = x
        for i, conv in enumerate(self.convs):
            out = conv(out)
            if i < len(self.convs) - 1:
                out = E.relu(out)
        return self.head(out)

    __call__ = forward

    def param_items(self):
        yield from collect_params("stack", self.convs)
        yield from collect_params("head", self.head)


def build_model(cfg: ModelConfig):
    if cfg.variant == "backbone":
        return BackboneModel(cfg)
    if cfg.variant == "hybrid":
        return HybridModel(cfg)
    return Dense3dModel(cfg)


def param_dict(model) -> dict:
    params = {}
    for name, tensor in model.param_items():
        if name in params:
            raise ValueError(f"duplicate parameter name {name}")
        params[name] = tensor
    return params
