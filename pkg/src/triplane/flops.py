"""Analytic FLOP accounting for every model variant.

`count_model` walks a configuration and prices each pipeline stage with the
shared rules from `counting`; the engine charges the same rules at runtime
from actual array shapes, so `measured_flops` on a built model should agree
with the analytic total to well under a percent - a structural check that
the report covers exactly what executes.
"""

import json
from dataclasses import dataclass
from math import ceil, prod

from . import counting, engine
from .config import ModelConfig
from .errors import ConfigError

PE_STAGES = ("pe_tokens", "pe_encoder")
MODULATION_STAGES = ("modulation_pre", "modulation_post")


def count_conv2d(c_in, c_out, kernel, out_h, out_w, bias=False):
    """2·k²·C_in·C_out·H'·W' multiply-accumulate FLOPs (+ optional bias adds)."""
    return counting.conv_flops(c_in, c_out, kernel * kernel, out_h * out_w, bias)


def count_conv3d(c_in, c_out, kernel, out_d, out_h, out_w, bias=False):
    return counting.conv_flops(c_in, c_out, kernel ** 3, out_d * out_h * out_w, bias)


def count_matmul(m, k, n):
    return counting.matmul_flops(m, k, n)


def count_attention(seq, dim, heads, ffn_expand=2):
    """One pre-norm encoder layer: projections, scores, mixing, feed-forward."""
    total = 2 * counting.layernorm_flops(seq * dim)
    total += 4 * counting.linear_flops(seq, dim, dim)          # q, k, v, out
    head_dim = dim // heads
    per_head = (counting.matmul_flops(seq, head_dim, seq)      # scores
                + counting.ewise_flops(seq * seq)              # scale
                + counting.softmax_flops(seq * seq)
                + counting.matmul_flops(seq, seq, head_dim))   # context
    total += heads * per_head
    total += counting.linear_flops(seq, dim, ffn_expand * dim)
    total += counting.ewise_flops(seq * ffn_expand * dim)      # relu
    total += counting.linear_flops(seq, ffn_expand * dim, dim)
    total += 2 * counting.ewise_flops(seq * dim)               # residual adds
    return total


@dataclass
class FlopsReport:
    label: str
    dims: tuple
    stages: list  # [(stage name, flops)]

    @property
    def total(self) -> int:
        return sum(f for _, f in self.stages)

    def stage(self, name: str) -> int:
        return sum(f for n, f in self.stages if n == name)

    def group(self, names) -> int:
        return sum(self.stage(n) for n in names)

    @property
    def pe_encoder_flops(self) -> int:
        """The encoder itself: the most favorable reading of "PE overhead"."""
        return self.stage("pe_encoder")

    @property
    def pe_path_flops(self) -> int:
        """Everything modulation adds: tokens, encoder, weight volumes."""
        return self.group(PE_STAGES + MODULATION_STAGES)

    def to_dict(self):
        return {
            "label": self.label,
            "dims": list(self.dims),
            "stages": [{"stage": n, "flops": f} for n, f in self.stages],
            "total_flops": self.total,
            "total_gflops": self.total / 1e9,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self):
        width = max([len(n) for n, _ in self.stages] + [5])
        lines = [f"{self.label}  dims={tuple(self.dims)}"]
        for name, f in self.stages:
            lines.append(f"  {name:<{width}}  {f:>14,}")
        lines.append(f"  {'total':<{width}}  {self.total:>14,}"
                     f"  ({self.total / 1e9:.4f} GFLOPs)")
        return "\n".join(lines)


def _token_summary_flops(c, dims):
    dx, dy, dz = dims
    vol = c * dx * dy * dz
    total = 0
    # x tokens: reduce z then y
    total += counting.mean_reduce_flops(vol, c * dx * dy)
    total += counting.mean_reduce_flops(c * dx * dy, c * dx)
    # y tokens: reduce z then x
    total += counting.mean_reduce_flops(vol, c * dx * dy)
    total += counting.mean_reduce_flops(c * dx * dy, c * dy)
    # z tokens: reduce y then x
    total += counting.mean_reduce_flops(vol, c * dx * dz)
    total += counting.mean_reduce_flops(c * dx * dz, c * dz)
    return total


def _pe_encoder_flops(cfg: ModelConfig):
    pe = cfg.pe
    c, c_feat = cfg.in_channels, cfg.feat_channels
    dims = cfg.dims
    seq = sum(dims)
    if pe.mode == "transformer":
        total = counting.linear_flops(seq, c, pe.model_dim)     # token projection
        total += counting.ewise_flops(seq * pe.model_dim)       # axis embedding
        if pe.position_embeddings:
            total += counting.ewise_flops(seq * pe.model_dim)
        total += pe.layers * count_attention(seq, pe.model_dim, pe.heads,
                                             pe.ffn_expand)
        total += counting.layernorm_flops(seq * pe.model_dim)   # final norm
        total += counting.linear_flops(seq, pe.model_dim, c)
        total += counting.linear_flops(seq, pe.model_dim, c_feat)
        return total
    if pe.mode == "sinusoidal":
        width = 2 * pe.frequencies
        return sum(counting.linear_flops(d, width, c)
                   + counting.linear_flops(d, width, c_feat) for d in dims)
    if pe.mode == "mlp":
        total = 0
        for d in dims:
            total += counting.linear_flops(d, 4, pe.mlp_hidden)
            total += counting.ewise_flops(d * pe.mlp_hidden)
            total += counting.linear_flops(d, pe.mlp_hidden, c)
            total += counting.linear_flops(d, pe.mlp_hidden, c_feat)
        return total
    return 0


def _modulation_apply_flops(channels, dims):
    vol = channels * prod(dims)
    # outer-sum build (two adds per voxel) plus the additive application
    return 2 * counting.ewise_flops(vol) + counting.ewise_flops(vol)


def _plane_sizes(dims):
    dx, dy, dz = dims
    return ((dy, dz), (dx, dz), (dx, dy))


def _plane_encoder_flops(cfg: ModelConfig, c_in):
    p = cfg.plane
    widths = [c_in] + [p.hidden] * (p.layers - 1) + [cfg.feat_channels]
    total = 0
    for h, w in _plane_sizes(cfg.dims):
        positions = h * w  # same padding keeps spatial size
        for i in range(p.layers):
            total += counting.conv_flops(widths[i], widths[i + 1],
                                         p.kernel ** 2, positions, bias=True)
            if i < p.layers - 1:
                total += counting.ewise_flops(widths[i + 1] * positions)
    return total


def _projection_flops(c, dims):
    vol = c * prod(dims)
    return sum(counting.mean_reduce_flops(vol, c * h * w)
               for h, w in _plane_sizes(dims))


def _lifting_flops(c_feat, dims):
    vol = c_feat * prod(dims)
    return 3 * counting.ewise_flops(vol) + 2 * counting.ewise_flops(vol)


def _vol_branch_stages(cfg: ModelConfig):
    v = cfg.vol
    c, c_feat = cfg.in_channels, cfg.feat_channels
    dims = cfg.dims
    stages = []
    if v.ratio == 1.0:
        coarse = dims
        stages.append(("vol_downsample", 0))
    else:
        coarse = tuple(ceil(v.ratio * d) for d in dims)
        inv = 1.0 / v.ratio
        if inv == int(inv) and all(d % int(inv) == 0 for d in dims):
            cost = counting.block_pool_flops(c * prod(dims), c * prod(coarse))
        else:
            cost = counting.resize_flops(c, dims, coarse)
        stages.append(("vol_downsample", cost))
    widths = [c] + [v.hidden] * (v.layers - 1) + [c_feat]
    positions = prod(coarse)
    enc = 0
    for i in range(v.layers):
        enc += counting.conv_flops(widths[i], widths[i + 1], v.kernel ** 3,
                                   positions, bias=True)
        if i < v.layers - 1:
            enc += counting.ewise_flops(widths[i + 1] * positions)
    stages.append(("vol_encoder", enc))
    stages.append(("vol_upsample", counting.resize_flops(c_feat, coarse, dims)))
    stages.append(("fusion_add", counting.ewise_flops(c_feat * prod(dims))))
    return stages


def _mixer_flops(cfg: ModelConfig):
    n_convs = max(0, cfg.fusion.layers - 1)
    if cfg.fusion.identity:
        n_convs = 0
    vol = prod(cfg.dims)
    per_conv = counting.conv_flops(cfg.feat_channels, cfg.feat_channels, 1,
                                   vol, bias=True)
    per_conv += counting.ewise_flops(cfg.feat_channels * vol)
    return n_convs * per_conv


def _head_flops(cfg: ModelConfig):
    c_feat = cfg.feat_channels
    dx, dy, dz = cfg.dims
    if cfg.task == "classify":
        hidden = 2 * c_feat
        total = counting.mean_reduce_flops(c_feat * dx * dy * dz, c_feat * dy * dz)
        total += counting.mean_reduce_flops(c_feat * dy * dz, c_feat * dz)
        total += counting.mean_reduce_flops(c_feat * dz, c_feat)
        total += counting.linear_flops(1, c_feat, hidden)
        total += counting.ewise_flops(hidden)
        total += counting.linear_flops(1, hidden, cfg.classes)
        return total
    return counting.conv_flops(c_feat, 1, 1, dx * dy * dz, bias=True)


def count_model(cfg: ModelConfig, label=None) -> FlopsReport:
    """Per-stage forward-pass FLOPs for one configuration."""
    cfg.validate()
    label = label or f"{cfg.variant}/{cfg.task}"
    dims = cfg.dims
    stages = []

    if cfg.variant == "dense3d":
        widths = [cfg.in_channels, *cfg.dense_channels, cfg.feat_channels]
        positions = prod(dims)
        total = 0
        for i in range(len(widths) - 1):
            total += counting.conv_flops(widths[i], widths[i + 1], 27,
                                         positions, bias=True)
            if i < len(widths) - 2:
                total += counting.ewise_flops(widths[i + 1] * positions)
        stages.append(("dense_stack", total))
        stages.append(("head", _head_flops(cfg)))
        return FlopsReport(label, dims, stages)

    hybrid = cfg.variant == "hybrid"
    pe_mode = cfg.pe.mode if hybrid else "none"
    plane_in = cfg.in_channels + (3 if pe_mode == "coordconv" else 0)

    if pe_mode in ("transformer", "sinusoidal", "mlp"):
        stages.append(("pe_tokens", _token_summary_flops(cfg.in_channels, dims)))
        stages.append(("pe_encoder", _pe_encoder_flops(cfg)))
        stages.append(("modulation_pre",
                       _modulation_apply_flops(cfg.in_channels, dims)))
    stages.append(("projection", _projection_flops(plane_in, dims)))
    stages.append(("plane_encoders", _plane_encoder_flops(cfg, plane_in)))
    stages.append(("lifting", _lifting_flops(cfg.feat_channels, dims)))
    if pe_mode in ("transformer", "sinusoidal", "mlp"):
        stages.append(("modulation_post",
                       _modulation_apply_flops(cfg.feat_channels, dims)))
    if hybrid and cfg.vol.enabled:
        stages.extend(_vol_branch_stages(cfg))
    if hybrid:
        stages.append(("fusion_mixer", _mixer_flops(cfg)))
    stages.append(("head", _head_flops(cfg)))
    return FlopsReport(label, dims, [(n, f) for n, f in stages])


def measured_flops(model, x) -> int:
    """Run one forward pass and return the engine's runtime FLOP count."""
    engine.reset_counters()
    model(x)
    return engine.flop_count()


def compare(reports) -> dict:
    """Totals side by side plus all pairwise ratios, cheapest first."""
    ordered = sorted(reports, key=lambda r: r.total)
    rows = [{"label": r.label, "total_flops": r.total,
             "total_gflops": r.total / 1e9} for r in ordered]
    ratios = {}
    for a in ordered:
        for b in ordered:
            if a.label != b.label:
                if b.total == 0:
                    raise ConfigError(f"zero-cost model {b.label} in comparison")
                ratios[f"{a.label}/{b.label}"] = a.total / b.total
    return {"models": rows, "ratios": ratios}


def format_compare(table: dict) -> str:
    width = max(len(r["label"]) for r in table["models"])
    lines = [f"{'model':<{width}}  {'GFLOPs':>12}"]
    for row in table["models"]:
        lines.append(f"{row['label']:<{width}}  {row['total_gflops']:>12.4f}")
    return "\n".join(lines)
