"""Model configuration: dataclasses, the small/base/large presets and the text file format.

File grammar (one item per line, ``#`` starts a comment)::

    key = value            # top-level model keys
    [stage.N]              # N = 1, 2, ... in order; keys below belong to stage N
    key = value

Top-level keys: ``preset``, ``name``, ``input_size``, ``in_channels``,
``num_classes``, ``time_steps``, ``alpha``, ``stem_kernel``, ``stem_stride``,
``down_kernel``, ``v0``. Stage keys: ``kind`` (conv_b | ssa_b_gw |
ssa_b_plain), ``depth``, ``channels``, ``r1``, ``r``, ``heads``,
``split_ratio``, ``spatial_groups`` (n, giving n*n groups),
``temporal_group`` (bases per temporal group), ``downsample`` (true/false).

With ``preset`` given, its values are the defaults; any ``[stage.N]``
section replaces the preset's stage list as a whole.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from typing import Optional

from .errors import ConfigError


def pad_for(kernel: int) -> int:
    """Padding used by the stem and downsamplers: 3x3/s2 and 2x2/s2 both halve even sizes."""
    return (kernel - 1) // 2


@dataclass(frozen=True)
class StageConfig:
    kind: str
    depth: int
    channels: int
    r1: int = 2
    r: int = 4
    heads: int = 1
    split_ratio: float = 0.5
    spatial_groups: int = 1
    temporal_group: int = 2
    downsample: Optional[bool] = None

    @property
    def split_channel(self) -> int:
        if self.kind == "ssa_b_gw":
            return int(round(self.split_ratio * self.channels))
        return self.channels


@dataclass(frozen=True)
class ModelConfig:
    stages: tuple = ()
    name: str = "custom"
    input_size: int = 224
    in_channels: int = 3
    num_classes: int = 1000
    time_steps: int = 4
    alpha: float = 2.0
    stem_kernel: int = 7
    stem_stride: int = 2
    stem_channels: Optional[int] = None
    down_kernel: int = 3
    v0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        validate(self)

    @property
    def stem_out_channels(self) -> int:
        if self.stem_channels is not None:
            return self.stem_channels
        return self.stages[0].channels if self.stages else self.in_channels

    @property
    def stem_size(self) -> int:
        return (self.input_size + 2 * pad_for(self.stem_kernel) - self.stem_kernel) // self.stem_stride + 1

    def has_downsample(self, i: int) -> bool:
        st = self.stages[i]
        return (i > 0) if st.downsample is None else st.downsample

    def feature_sizes(self) -> list:
        size, out = self.stem_size, []
        for i in range(len(self.stages)):
            if self.has_downsample(i):
                size = (size + 2 * pad_for(self.down_kernel) - self.down_kernel) // 2 + 1
            out.append(size)
        return out

    @property
    def final_channels(self) -> int:
        return self.stages[-1].channels if self.stages else self.stem_out_channels


def validate(cfg: ModelConfig):
    if cfg.input_size < 1 or cfg.in_channels < 1 or cfg.num_classes < 1:
        raise ConfigError("input_size, in_channels and num_classes must be positive")
    if cfg.time_steps < 1:
        raise ConfigError("time_steps must be >= 1")
    if cfg.stem_kernel < 1 or cfg.stem_stride < 1 or cfg.down_kernel < 1:
        raise ConfigError("kernels and strides must be positive")
    if cfg.stem_size < 1:
        raise ConfigError(f"stem {cfg.stem_kernel}x{cfg.stem_kernel}/{cfg.stem_stride} does not fit input {cfg.input_size}")
    prev = cfg.stem_out_channels
    for i, (st, size) in enumerate(zip(cfg.stages, cfg.feature_sizes())):
        tag = f"stage.{i + 1}"
        if st.kind not in ("conv_b", "ssa_b_gw", "ssa_b_plain"):
            raise ConfigError(f"{tag}: unknown kind {st.kind!r}")
        if st.depth < 1 or st.channels < 1 or st.r1 < 1 or st.r < 1 or st.heads < 1:
            raise ConfigError(f"{tag}: depth, channels, ratios and heads must be >= 1")
        if size < 1:
            raise ConfigError(f"{tag}: feature map vanished")
        if not cfg.has_downsample(i) and st.channels != prev:
            raise ConfigError(f"{tag}: {prev} -> {st.channels} channels needs a downsample")
        if not 1 <= st.temporal_group <= cfg.time_steps:
            raise ConfigError(f"{tag}: temporal_group must lie in [1, time_steps]")
        if st.kind != "conv_b":
            if st.channels % st.heads:
                raise ConfigError(f"{tag}: {st.heads} heads do not divide {st.channels} channels")
            n = st.spatial_groups if st.kind == "ssa_b_gw" else 1
            if n < 1 or size % n:
                raise ConfigError(f"{tag}: spatial_groups {n} must divide feature size {size}")
            hd = st.channels // st.heads
            if st.split_channel % hd:
                raise ConfigError(f"{tag}: split at channel {st.split_channel} is not a multiple of head width {hd}")
        prev = st.channels


def _table_preset(name, widths, heads23=(4, 8), heads4=8):
    c1, c2, c3, c4, c5 = widths
    stages = (
        StageConfig("conv_b", 1, c1, r1=2, r=4, downsample=False),
        StageConfig("conv_b", 1, c2, r1=2, r=4),
        StageConfig("ssa_b_gw", 2, c3, r=4, heads=heads23[0], split_ratio=0.5, spatial_groups=4, temporal_group=2),
        StageConfig("ssa_b_gw", 6, c4, r=4, heads=heads23[1], split_ratio=0.5, spatial_groups=2, temporal_group=2),
        StageConfig("ssa_b_plain", 2, c5, r=4, heads=heads4),
    )
    return ModelConfig(stages, name=name)


PRESETS = {
    "small": _table_preset("small", (24, 48, 96, 192, 240)),
    "base": _table_preset("base", (32, 64, 128, 256, 320)),
    "large": _table_preset("large", (40, 80, 160, 320, 400)),
}


def preset(name: str) -> ModelConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


_TOP = {f.name: f.type for f in fields(ModelConfig) if f.name != "stages"}
_STAGE = {f.name: f.type for f in fields(StageConfig)}


def _coerce(key: str, value: str, kind: str):
    kind = kind.replace("Optional[", "").rstrip("]")
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            low = value.lower()
            if low not in ("true", "false"):
                raise ValueError(value)
            return low == "true"
        return value
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {kind}") from None


def parse_config(text: str, preset_name: Optional[str] = None) -> ModelConfig:
    top: dict = {}
    sections: list = []
    current = top
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or not line[1:-1].startswith("stage."):
                raise ConfigError(f"line {lineno}: bad section header {line!r}")
            try:
                idx = int(line[1:-1][len("stage."):])
            except ValueError:
                raise ConfigError(f"line {lineno}: bad stage number in {line!r}") from None
            if idx != len(sections) + 1:
                raise ConfigError(f"line {lineno}: expected [stage.{len(sections) + 1}], got {line!r}")
            current = {}
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        table = _STAGE if current is not top else {**_TOP, "preset": "str"}
        if key not in table:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in current:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        current[key] = _coerce(key, value, table[key]) if key != "preset" else value
    name = top.pop("preset", None) or preset_name
    base = preset(name) if name else ModelConfig()
    stages = base.stages
    if sections:
        stage_list = []
        for i, sec in enumerate(sections, 1):
            missing = {"kind", "depth", "channels"} - set(sec)
            if missing:
                raise ConfigError(f"stage.{i}: missing {sorted(missing)}")
            stage_list.append(StageConfig(**sec))
        stages = tuple(stage_list)
    return replace(base, stages=stages, **top)


def dump_config(cfg: ModelConfig) -> str:
    """Canonical text form; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for key in _TOP:
        v = getattr(cfg, key)
        if v is not None:
            lines.append(f"{key} = {_fmt(v)}")
    for i, st in enumerate(cfg.stages, 1):
        lines.append("")
        lines.append(f"[stage.{i}]")
        for key in _STAGE:
            v = getattr(st, key)
            if v is not None:
                lines.append(f"{key} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def config_hash(cfg: ModelConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


def load_config(path, preset_name: Optional[str] = None) -> ModelConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read(), preset_name)
