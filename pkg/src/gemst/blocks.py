"""Network building blocks: SConv block, spiking FFNs, attention blocks, downsampler, header.

Normalization is assumed folded into the conv weights, so there are no
norm layers. Every block keeps the (T, B, H, W, C) shape of its input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attention import AttentionConfig, AttentionParams, gw_ssa, ssa
from .conv import ConvParams, conv2d
from .errors import ShapeError
from .profiler import OpCounters
from .runtime import Runtime
from .tensor_core import DenseTensor, GroupingPlan

__all__ = [
    "ConvParams", "conv2d", "BlockConfig", "FFNParams", "SConvParams", "Block", "Downsample",
    "Header", "conv_b", "conv_sffn", "sffn", "ssa_b", "downsample", "header", "block_forward",
]

BLOCK_KINDS = ("conv_b", "ssa_b_gw", "ssa_b_plain")


@dataclass(frozen=True)
class BlockConfig:
    kind: str
    channels: int
    r1: int = 2
    r: int = 4
    heads: int = 1
    plan: Optional[GroupingPlan] = None

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.channels <= 0 or self.r1 < 1 or self.r < 1:
            raise ValueError("channels must be positive and ratios >= 1")


@dataclass
class FFNParams:
    """pw1 -> [symmetric SN -> depthwise] -> SN -> pw2. Sites: sn1, [sym], sn2."""

    pw1: ConvParams
    pw2: ConvParams
    dw: Optional[ConvParams] = None
    sites: dict = field(default_factory=dict)


@dataclass
class SConvParams:
    """Two spiking convolutions, widening by R1 then projecting back. Sites: sn1, sn2."""

    conv1: ConvParams
    conv2: ConvParams
    sites: dict = field(default_factory=dict)


@dataclass
class Block:
    kind: str
    channels: int
    ffn: FFNParams
    sconv: Optional[SConvParams] = None
    attn: Optional[AttentionParams] = None
    attn_cfg: Optional[AttentionConfig] = None
    plan: Optional[GroupingPlan] = None

    def parts(self):
        if self.sconv is not None:
            yield "sconv", self.sconv
        if self.attn is not None:
            yield "attn", self.attn
        yield "ffn", self.ffn

    def named_convs(self):
        for prefix, part in self.parts():
            for name in ("conv1", "conv2", "q", "k", "v", "dw", "out", "pw1", "pw2"):
                p = getattr(part, name, None)
                if p is not None:
                    yield f"{prefix}.{name}", p

    def named_sites(self):
        for prefix, part in self.parts():
            for name, ls in part.sites.items():
                yield f"{prefix}.{name}", part.sites, name


@dataclass
class Downsample:
    """SN then a strided spiking conv that changes the width. Site: sn."""

    conv: ConvParams
    sites: dict = field(default_factory=dict)


@dataclass
class Header:
    weight: np.ndarray  # (C, classes)
    bias: np.ndarray

    @property
    def n_params(self) -> int:
        return self.weight.size + self.bias.size


def _check_channels(x: DenseTensor, c: int):
    if x.shape.c != c:
        raise ShapeError(f"block expects {c} channels, got {x.shape.c}")


def _ffn(x: DenseTensor, p: FFNParams, rt: Runtime) -> DenseTensor:
    _check_channels(x, p.pw1.in_channels)
    c, sites = rt.counters, p.sites
    h = conv2d(rt.fire(x.data, sites, "sn1"), p.pw1, c)
    if p.dw is not None:
        h = conv2d(rt.fire(h.data, sites, "sym"), p.dw, c)
    out = conv2d(rt.fire(h.data, sites, "sn2"), p.pw2, c)
    return DenseTensor(out.data + x.data)


def conv_sffn(x: DenseTensor, p: FFNParams, rt: Optional[Runtime] = None) -> DenseTensor:
    """Depthwise-separable spiking FFN with residual."""
    if p.dw is None:
        raise ValueError("conv_sffn needs a depthwise stage")
    return _ffn(x, p, rt or Runtime())


def sffn(x: DenseTensor, p: FFNParams, rt: Optional[Runtime] = None) -> DenseTensor:
    """Token-wise two-layer spiking FFN with residual."""
    if p.dw is not None:
        raise ValueError("sffn has no depthwise stage")
    return _ffn(x, p, rt or Runtime())


def _sconv(x: DenseTensor, p: SConvParams, rt: Runtime) -> DenseTensor:
    _check_channels(x, p.conv1.in_channels)
    c = rt.counters
    h = conv2d(rt.fire(x.data, p.sites, "sn1"), p.conv1, c)
    y = conv2d(rt.fire(h.data, p.sites, "sn2"), p.conv2, c)
    return DenseTensor(y.data + x.data)


def conv_b(x: DenseTensor, block: Block, rt: Optional[Runtime] = None) -> DenseTensor:
    rt = rt or Runtime()
    rt.enter("sconv")
    y = _sconv(x, block.sconv, rt)
    rt.enter("conv_sffn")
    return _ffn(y, block.ffn, rt)


def ssa_b(x: DenseTensor, block: Block, rt: Optional[Runtime] = None) -> DenseTensor:
    rt = rt or Runtime()
    _check_channels(x, block.channels)
    if block.kind == "ssa_b_gw":
        rt.enter("gw_ssa")
        y = gw_ssa(x, block.plan, block.attn_cfg, block.attn, rt)
        rt.enter("conv_sffn")
    else:
        rt.enter("ssa")
        y = ssa(x, block.attn_cfg, block.attn, rt)
        rt.enter("sffn")
    return _ffn(y, block.ffn, rt)


def block_forward(x: DenseTensor, block: Block, rt: Optional[Runtime] = None) -> DenseTensor:
    if block.kind == "conv_b":
        return conv_b(x, block, rt)
    return ssa_b(x, block, rt)


def downsample(x: DenseTensor, d: Downsample, rt: Optional[Runtime] = None) -> DenseTensor:
    rt = rt or Runtime()
    rt.enter("downsample")
    return conv2d(rt.fire(x.data, d.sites, "sn"), d.conv, rt.counters)


def header(x: DenseTensor, h: Header, counters: Optional[OpCounters] = None) -> np.ndarray:
    """Global average over (t, h, w), then an affine map to class scores. Returns (B, classes)."""
    pooled = x.data.mean(axis=(0, 2, 3))
    if pooled.shape[1] != h.weight.shape[0]:
        raise ShapeError(f"header expects {h.weight.shape[0]} channels, got {pooled.shape[1]}")
    if counters is not None:
        counters.add_macs(pooled.size * h.weight.shape[1])
    return pooled @ h.weight + h.bias
