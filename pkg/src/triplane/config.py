"""Model configuration: schema, validation, JSON round-trip.

Parsing is strict - unknown keys are rejected at every level, so a typo in
a config file fails fast instead of silently falling back to a default.
"""

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError

VARIANTS = ("backbone", "hybrid", "dense3d")
TASKS = ("classify", "complete")
PE_MODES = ("none", "sinusoidal", "coordconv", "mlp", "transformer")


@dataclass
class PlaneConfig:
    layers: int = 3
    hidden: int = 16
    kernel: int = 3
    shared: bool = False


@dataclass
class PEConfig:
    mode: str = "none"
    model_dim: int = 32
    layers: int = 2
    heads: int = 8
    ffn_expand: int = 2
    max_positions: int = 512
    frequencies: int = 8
    mlp_hidden: int = 32
    position_embeddings: bool = True


@dataclass
class VolConfig:
    enabled: bool = True
    ratio: float = 0.5
    layers: int = 3
    hidden: int = 8
    kernel: int = 3
    use_modulated_input: bool = False


@dataclass
class FusionConfig:
    layers: int = 2
    identity: bool = False


@dataclass
class ModelConfig:
    variant: str = "hybrid"
    task: str = "complete"
    dims: tuple = (32, 32, 32)
    in_channels: int = 1
    feat_channels: int = 16
    classes: int = 4
    per_channel_lambda: bool = False
    dense_channels: tuple = (8, 16, 16)
    seed: int = 0
    plane: PlaneConfig = field(default_factory=PlaneConfig)
    pe: PEConfig = field(default_factory=PEConfig)
    vol: VolConfig = field(default_factory=VolConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.dense_channels = tuple(int(c) for c in self.dense_channels)
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ConfigError(f"dims must be three positive sizes, got {self.dims}")
        for name in ("in_channels", "feat_channels", "classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.pe.mode not in PE_MODES:
            raise ConfigError(f"pe.mode must be one of {PE_MODES}, got {self.pe.mode!r}")
        if self.pe.mode == "transformer":
            if self.pe.model_dim % self.pe.heads:
                raise ConfigError("pe.model_dim must be divisible by pe.heads")
            if max(self.dims) > self.pe.max_positions:
                raise ConfigError(
                    f"axis size {max(self.dims)} exceeds pe.max_positions "
                    f"{self.pe.max_positions}")
        if not 0.0 < self.vol.ratio <= 1.0:
            raise ConfigError(f"vol.ratio must lie in (0, 1], got {self.vol.ratio}")
        if self.vol.enabled and any(self.vol.ratio * d < 1.0 for d in self.dims):
            raise ConfigError("vol.ratio collapses an axis below one voxel")
        if self.plane.layers < 1 or self.vol.layers < 1:
            raise ConfigError("layer counts must be >= 1")
        if self.plane.kernel % 2 == 0 or self.vol.kernel % 2 == 0:
            raise ConfigError("kernels must be odd")
        if self.fusion.layers < 1:
            raise ConfigError("fusion.layers must be >= 1")
        return self

    def to_dict(self):
        def undataclass(obj):
            if dataclasses.is_dataclass(obj):
                return {k: undataclass(v) for k, v in dataclasses.asdict(obj).items()}
            if isinstance(obj, tuple):
                return list(obj)
            return obj

        return undataclass(self)

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _build_section(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {path}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {path}: {exc}") from None


def config_from_dict(data) -> ModelConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    sections = {"plane": PlaneConfig, "pe": PEConfig, "vol": VolConfig,
                "fusion": FusionConfig}
    top = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown key(s) in config: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in sections:
            kwargs[key] = _build_section(sections[key], value, key)
        else:
            kwargs[key] = value
    try:
        return ModelConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config: {exc}") from None


def load_config(path) -> ModelConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        from .errors import DataError
        raise DataError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(data)


def preset(variant: str, task: str = "complete", dims=(32, 32, 32),
           ratio: float = 0.5, pe_mode: str | None = None, seed: int = 0) -> ModelConfig:
    """Ready-made configuration for one of the standard variants."""
    if variant == "backbone":
        return ModelConfig(variant="backbone", task=task, dims=dims, seed=seed,
                           pe=PEConfig(mode="none"),
                           vol=VolConfig(enabled=False, ratio=ratio))
    if variant == "hybrid":
        return ModelConfig(variant="hybrid", task=task, dims=dims, seed=seed,
                           pe=PEConfig(mode=pe_mode or "transformer"),
                           vol=VolConfig(enabled=True, ratio=ratio))
    if variant == "dense3d":
        return ModelConfig(variant="dense3d", task=task, dims=dims, seed=seed,
                           pe=PEConfig(mode="none"),
                           vol=VolConfig(enabled=False))
    raise ConfigError(f"unknown variant {variant!r}")
