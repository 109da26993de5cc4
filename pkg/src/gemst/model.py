"""Whole-network assembly: build from a config, forward, parameter counts, weight I/O.

Layout: stem conv (dense, 7x7/2) -> stages -> global pool + FC header. Each
stage is an optional strided downsampler followed by ``depth`` blocks. The
stem output is computed once and presented as a constant current at every
time-step, so the stem's MACs are counted once per image.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attention import AttentionConfig, AttentionParams
from .blocks import (Block, Downsample, FFNParams, Header, SConvParams, block_forward, downsample,
                     header)
from .config import ModelConfig, StageConfig, config_hash, pad_for
from .conv import ConvParams, conv2d
from .errors import (ConfigMismatchError, MissingEntryError, ShapeConflictError, ShapeError,
                     UnexpectedEntryError, WeightFileError)
from .exp_coding import ExpLevelSet, TemporalGrouping, build_level_set, symmetric_level_set
from .profiler import Profiler
from .runtime import Runtime
from .tensor_core import DenseTensor, GroupingPlan
from .weights import WeightContainer

SYMMETRIC_SITES = ("sym", "sym_v")


@dataclass
class Stage:
    index: int  # 1-based
    config: StageConfig
    down: Optional[Downsample]
    blocks: list


@dataclass
class Model:
    config: ModelConfig
    stem: ConvParams
    stages: list
    head: Header

    def named_params(self):
        """(name, owner, attribute) for every weight and bias, in a fixed order."""
        out = []

        def conv(prefix, p):
            out.append((f"{prefix}.weight", p, "weight"))
            if p.bias is not None:
                out.append((f"{prefix}.bias", p, "bias"))

        conv("stem", self.stem)
        for st in self.stages:
            if st.down is not None:
                conv(f"s{st.index}.down", st.down.conv)
            for j, blk in enumerate(st.blocks):
                for name, p in blk.named_convs():
                    conv(f"s{st.index}.b{j}.{name}", p)
        out.append(("head.weight", self.head, "weight"))
        out.append(("head.bias", self.head, "bias"))
        return out

    def named_sites(self):
        """(name, site dict, key) for every spiking site, in a fixed order."""
        out = []
        for st in self.stages:
            if st.down is not None:
                out.append((f"s{st.index}.down.sn", st.down.sites, "sn"))
            for j, blk in enumerate(st.blocks):
                for name, sites, key in blk.named_sites():
                    out.append((f"s{st.index}.b{j}.{name}", sites, key))
        return out


def _stage_level_set(cfg: ModelConfig, st: StageConfig) -> ExpLevelSet:
    return build_level_set(TemporalGrouping.contiguous(cfg.time_steps, st.temporal_group, cfg.alpha))


def _sites(names, ls: ExpLevelSet) -> dict:
    sym = symmetric_level_set(ls)
    return {n: (sym if n in SYMMETRIC_SITES else ls) for n in names}


def _pw(ci, co):
    return ConvParams("pointwise", 1, 1, ci, co, np.zeros((ci, co)), np.zeros(co))


def _dw(c, k=3):
    return ConvParams("depthwise", k, 1, c, c, np.zeros((k, k, c)), None)


def _full(ci, co, k, stride=1, padding=None):
    return ConvParams("full", k, stride, ci, co, np.zeros((k, k, ci, co)), np.zeros(co),
                      padding=pad_for(k) if padding is None else padding)


def _ffn(c, r, with_dw, ls):
    hidden = c * r
    names = ("sn1", "sym", "sn2") if with_dw else ("sn1", "sn2")
    return FFNParams(_pw(c, hidden), _pw(hidden, c), _dw(hidden) if with_dw else None, _sites(names, ls))


def _block(st: StageConfig, ls: ExpLevelSet) -> Block:
    c = st.channels
    if st.kind == "conv_b":
        sconv = SConvParams(_full(c, c * st.r1, 3), _full(c * st.r1, c, 3), _sites(("sn1", "sn2"), ls))
        return Block("conv_b", c, _ffn(c, st.r, True, ls), sconv=sconv)
    gw = st.kind == "ssa_b_gw"
    names = ("sn_in", "sn_q", "sn_score", "sn_mix") + (("sym_v",) if gw else ())
    attn = AttentionParams(_pw(c, c), _pw(c, c), _pw(c, c), _pw(c, c), _dw(c) if gw else None,
                           _sites(names, ls))
    acfg = AttentionConfig(st.heads, c // st.heads)
    plan = GroupingPlan(st.split_channel, st.spatial_groups if gw else 1)
    return Block(st.kind, c, _ffn(c, st.r, gw, ls), attn=attn, attn_cfg=acfg, plan=plan)


def build(config: ModelConfig) -> Model:
    """Wire every layer of ``config`` with zero weights and lambda = 1 thresholds."""
    stem = _full(config.in_channels, config.stem_out_channels, config.stem_kernel, config.stem_stride)
    stages, prev = [], config.stem_out_channels
    for i, st in enumerate(config.stages):
        ls = _stage_level_set(config, st)
        down = None
        if config.has_downsample(i):
            down = Downsample(_full(prev, st.channels, config.down_kernel, 2), {"sn": ls})
        stages.append(Stage(i + 1, st, down, [_block(st, ls) for _ in range(st.depth)]))
        prev = st.channels
    head = Header(np.zeros((config.final_channels, config.num_classes)), np.zeros(config.num_classes))
    return Model(config, stem, stages, head)


def toy_config(kind: str = "ssa_b_plain", channels: int = 8, input_size: int = 16,
               time_steps: int = 4, num_classes: int = 10, **stage_kw) -> ModelConfig:
    """One-stage model small enough for brute-force checks."""
    stage = StageConfig(kind, stage_kw.pop("depth", 1), channels, **stage_kw)
    return ModelConfig((stage,), name="toy", input_size=input_size, num_classes=num_classes,
                       time_steps=time_steps)


# ---------------------------------------------------------------- parameters

def _fan_in(owner) -> int:
    if isinstance(owner, Header):
        return owner.weight.shape[0]
    p = owner
    if p.kind == "pointwise":
        return p.in_channels
    if p.kind == "depthwise":
        return p.kernel * p.kernel
    return p.kernel * p.kernel * p.in_channels


def init_weights(model: Model, seed: int) -> Model:
    """Seeded Kaiming-uniform weights (rounded to f32), zero biases, in place."""
    rng = np.random.default_rng(seed)
    for name, owner, attr in model.named_params():
        cur = getattr(owner, attr)
        if attr == "bias":
            setattr(owner, attr, np.zeros_like(cur))
            continue
        bound = math.sqrt(6.0 / _fan_in(owner))
        w = rng.uniform(-bound, bound, size=cur.shape).astype(np.float32).astype(np.float64)
        setattr(owner, attr, w)
    return model


def calibrate(model: Model, x) -> Model:
    """Set every site's lambda from the potentials seen on ``x`` (in place)."""
    x = _as_input(model, x)
    _forward_items(model, x, Runtime(calibrate=True))
    return model


def count_params(model: Model) -> dict:
    """Weight-element counts per module (stem, sN.down, sN.bJ, head) plus ``total``."""
    counts: dict = {}
    for name, owner, attr in model.named_params():
        parts = name.split(".")
        module = parts[0] if parts[0] in ("stem", "head") else ".".join(parts[:2])
        counts[module] = counts.get(module, 0) + getattr(owner, attr).size
    counts["total"] = sum(counts.values())
    return counts


# ---------------------------------------------------------------- forward

def _as_input(model: Model, x) -> DenseTensor:
    x = x if isinstance(x, DenseTensor) else DenseTensor(np.asarray(x, dtype=np.float64))
    s, cfg = x.shape, model.config
    if s.t != 1:
        raise ShapeError(f"input must have a single time-step, got t={s.t}")
    if (s.h, s.w, s.c) != (cfg.input_size, cfg.input_size, cfg.in_channels):
        raise ShapeError(f"input is {s.h}x{s.w}x{s.c}, model expects "
                         f"{cfg.input_size}x{cfg.input_size}x{cfg.in_channels}")
    return x


def _forward_items(model: Model, x: DenseTensor, rt: Runtime) -> np.ndarray:
    cfg = model.config
    rt.stage, rt.block_index = 0, 0
    rt.enter("stem")
    s = conv2d(x, model.stem, rt.counters).data
    cur = DenseTensor(np.broadcast_to(s, (cfg.time_steps,) + s.shape[1:]))
    for st in model.stages:
        rt.stage = st.index
        if st.down is not None:
            rt.block_index = -1
            cur = downsample(cur, st.down, rt)
        for j, blk in enumerate(st.blocks):
            rt.block_index = j
            cur = block_forward(cur, blk, rt)
    rt.stage, rt.block_index = len(model.stages) + 1, 0
    rt.enter("header")
    return header(cur, model.head, rt.counters)


def forward(model: Model, x, threads: int = 1, profiler: Optional[Profiler] = None,
            check_spikes: bool = False) -> np.ndarray:
    """Logits (B, classes) for images ``x`` of shape (1, B, H, W, C).

    Batch items are evaluated independently (optionally on ``threads``
    workers), so logits and counters do not depend on the thread count.
    """
    x = _as_input(model, x)
    b = x.shape.b
    items = [DenseTensor(x.data[:, i:i + 1]) for i in range(b)]
    profs = [Profiler() if profiler is not None else None for _ in range(b)]

    def one(i):
        rt = Runtime(check_spikes=check_spikes, v0=model.config.v0, profiler=profs[i])
        return _forward_items(model, items[i], rt)

    if threads > 1 and b > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(one, range(b)))
    else:
        outs = [one(i) for i in range(b)]
    if profiler is not None:
        for p in profs:
            profiler.merge(p)
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, model.config.num_classes))


# ---------------------------------------------------------------- weight I/O

def to_container(model: Model) -> WeightContainer:
    """Weights as f32 entries plus per-site threshold/grouping metadata."""
    wc = WeightContainer()
    wc.add_text("meta/config_hash", config_hash(model.config))
    for name, owner, attr in model.named_params():
        wc.add(name, getattr(owner, attr).astype("<f4"))
    for name, sites, key in model.named_sites():
        ls = sites[key]
        base = f"meta/sn/{name}/"
        wc.add(base + "lambda", np.array([ls.lam], dtype="<f8"))
        wc.add(base + "alpha", np.array([ls.alpha], dtype="<f8"))
        wc.add(base + "T", np.array([ls.t], dtype="<u4"))
        wc.add(base + "groups", ls.grouping.group_ids().astype("<u4"))
        wc.add(base + "symmetric", np.array([int(ls.symmetric)], dtype="u1"))
    return wc


def _entry(wc: WeightContainer, name: str) -> np.ndarray:
    if name not in wc:
        raise MissingEntryError(name)
    return wc[name]


def _scalar(wc, name, shape=(1,)):
    a = _entry(wc, name)
    if a.shape != shape:
        raise ShapeConflictError(name, shape, a.shape)
    return a


def from_container(config: ModelConfig, wc: WeightContainer) -> Model:
    """Build ``config`` and fill it from ``wc``; every entry must match exactly."""
    if "meta/config_hash" not in wc:
        raise MissingEntryError("meta/config_hash")
    if wc.text("meta/config_hash") != config_hash(config):
        raise ConfigMismatchError("weights were written for a different model config")
    model = build(config)
    expected = set()
    for name, owner, attr in model.named_params():
        expected.add(name)
        a = _entry(wc, name)
        want = getattr(owner, attr).shape
        if a.shape != want:
            raise ShapeConflictError(name, want, a.shape)
        if a.dtype != np.dtype("<f4"):
            raise WeightFileError(f"{name}: expected f32, got {a.dtype}")
        setattr(owner, attr, a.astype(np.float64))
    for name, sites, key in model.named_sites():
        base = f"meta/sn/{name}/"
        for k in ("lambda", "alpha", "T", "groups", "symmetric"):
            expected.add(base + k)
        t = int(_scalar(wc, base + "T")[0])
        ids = _scalar(wc, base + "groups", (t,))
        alpha = float(_scalar(wc, base + "alpha")[0])
        lam = float(_scalar(wc, base + "lambda")[0])
        sym = bool(_scalar(wc, base + "symmetric")[0])
        if not (lam > 0 and math.isfinite(lam)):
            raise WeightFileError(f"{base}lambda must be positive and finite, got {lam}")
        try:
            ls = build_level_set(TemporalGrouping.from_group_ids(ids, alpha), lam)
        except ValueError as e:
            raise WeightFileError(f"{base}: {e}") from None
        if sym:
            ls = symmetric_level_set(ls)
        cur = sites[key]
        if ls.t != cur.t or sym != cur.symmetric:
            raise ConfigMismatchError(f"site {name}: T/symmetry disagree with the config")
        sites[key] = ls
    extra = [n for n in wc.entries if n not in expected and n != "meta/config_hash"]
    if extra:
        raise UnexpectedEntryError(extra[0])
    return model


def save_model(model: Model, path):
    from .weights import save

    save(to_container(model), path)


def load_model(config: ModelConfig, path) -> Model:
    from .weights import load

    return from_container(config, load(path))
