"""Spike-domain matrix products and spiking self-attention.

Three mechanisms live here:

* ``ssa_conversion``: attention on window-averaged (rate) inputs, the form a
  converted network has to reproduce; its per-step expansion costs T^2 N^2 C.
* ``ssa_stbp``: independent attention at every time-step.
* ``gw_ssa``: the engine path, with spiking Q against time-averaged K, V, run
  inside spatial token groups (strided groups on one channel half, local
  windows on the other), plus a depthwise-conv branch on V.

Inside ``gw_ssa`` every product has a spike operand on the left and goes
through :func:`spike_matmul`; constant factors (spike scales, 1/T of the
averages, the score scale) are folded into the thresholds of the following
spiking site or into the weights of the parallel conv branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conv import ConvParams, conv2d
from .errors import ShapeError, UnsupportedAmplitudeError
from .exp_coding import ExpLevelSet, expg_forward
from .profiler import OpCounters
from .runtime import Runtime
from .tensor_core import GLOBAL, DenseTensor, GroupingPlan, SpikeTensor


@dataclass(frozen=True)
class AttentionConfig:
    heads: int
    head_dim: int
    activation: Optional[ExpLevelSet] = None
    scale: Optional[float] = None

    def __post_init__(self):
        if self.heads < 1 or self.head_dim < 1:
            raise ValueError("attention needs at least one head of positive width")
        if self.scale is None:
            object.__setattr__(self, "scale", 1.0 / math.sqrt(self.head_dim))

    @property
    def channels(self) -> int:
        return self.heads * self.head_dim


@dataclass
class AttentionParams:
    """Projections of one attention block and its spiking sites.

    Sites: ``sn_in`` (block input), ``sn_q``, ``sn_score``, ``sn_mix`` and, when
    the conv branch ``dw`` is present, the symmetric ``sym_v``.
    """

    q: ConvParams
    k: ConvParams
    v: ConvParams
    out: ConvParams
    dw: Optional[ConvParams] = None
    sites: dict = field(default_factory=dict)


def _split_pow2(s: np.ndarray):
    nz = s != 0
    mant, exp = np.frexp(np.abs(s))
    if np.any(mant[nz] != 0.5):
        raise UnsupportedAmplitudeError("spike operand entries must be 0 or signed powers of two")
    return nz, exp - 1


def spike_matmul(s, d, counters: Optional[OpCounters] = None, bound: int = 0,
                 op: str = "spike_matmul") -> np.ndarray:
    """``s @ d`` for a spike operand ``s`` using only sign-selected accumulation and shifts.

    Entries of ``s`` are split by exponent; each slice is a {-1, 0, 1} pattern
    that selects rows of ``d`` to add or subtract, and the partial sum is
    shifted by the exponent (``ldexp``). Leading axes broadcast as in
    ``np.matmul``. Charges ``nnz(s) * d.shape[-1]`` SOPs.
    """
    s = np.asarray(s, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if s.shape[-1] != d.shape[-2]:
        raise ShapeError(f"inner dimensions differ: {s.shape} @ {d.shape}")
    nz, exps = _split_pow2(s)
    sign = np.sign(s)
    out = None
    for e in np.unique(exps[nz]):
        select = np.where(nz & (exps == e), sign, 0.0)
        part = np.ldexp(select @ d, int(e))
        out = part if out is None else out + part
    if out is None:
        out = np.zeros(np.broadcast_shapes(s.shape[:-2], d.shape[:-2]) + (s.shape[-2], d.shape[-1]))
    if counters is not None:
        counters.add_sops(int(np.count_nonzero(nz)) * d.shape[-1], bound, op)
    return out


def _heads(x: np.ndarray, heads: int) -> np.ndarray:
    """(T, B, H, W, C) -> (T, B, heads, N, C/heads)."""
    t, b, h, w, c = x.shape
    return x.reshape(t, b, h * w, heads, c // heads).transpose(0, 1, 3, 2, 4)


def _unheads(x: np.ndarray, h: int, w: int) -> np.ndarray:
    t, b, heads, n, d = x.shape
    return x.transpose(0, 1, 3, 2, 4).reshape(t, b, h, w, heads * d)


def _activate(scores: np.ndarray, ls: Optional[ExpLevelSet]) -> np.ndarray:
    if ls is None:
        return scores
    return np.asarray(expg_forward(scores, ls.t, 0.0, ls))


def _check_qkv(q: DenseTensor, k: DenseTensor, v: DenseTensor, cfg: AttentionConfig):
    sq, sk, sv = q.shape, k.shape, v.shape
    if (sq.b, sq.h, sq.w) != (sk.b, sk.h, sk.w) or (sk.t, sk.b, sk.h, sk.w) != (sv.t, sv.b, sv.h, sv.w):
        raise ShapeError(f"q/k/v extents disagree: {sq}, {sk}, {sv}")
    if sq.c != cfg.channels or sk.c != cfg.channels or sv.c != cfg.channels:
        raise ShapeError(f"attention expects {cfg.channels} channels")


def ssa_conversion(q_avg: DenseTensor, k_avg: DenseTensor, v_avg: DenseTensor,
                   cfg: AttentionConfig) -> DenseTensor:
    """f(scale * Q_avg K_avg^T) V_avg per head, on single-step (averaged) inputs."""
    _check_qkv(q_avg, k_avg, v_avg, cfg)
    if q_avg.shape.t != 1 or k_avg.shape.t != 1:
        raise ShapeError("ssa_conversion takes temporally averaged inputs (t == 1)")
    q, k, v = (_heads(a.data, cfg.heads) for a in (q_avg, k_avg, v_avg))
    scores = _activate(cfg.scale * (q @ k.swapaxes(-1, -2)), cfg.activation)
    s = q_avg.shape
    return DenseTensor(_unheads(scores @ v, s.h, s.w))


def ssa_conversion_expanded(q: DenseTensor, k: DenseTensor, v: DenseTensor,
                            cfg: AttentionConfig) -> DenseTensor:
    """Per-step form (1/T^2) f(scale * Q_t sum_i K_i^T) sum_j V_j.

    With a linear f the mean over t equals :func:`ssa_conversion` on the
    averaged inputs; every Q_t meets all T keys, hence the T^2 N^2 C cost.
    """
    _check_qkv(q, k, v, cfg)
    T = q.shape.t
    qh = _heads(q.data, cfg.heads)
    ks = _heads(k.data, cfg.heads).sum(axis=0, keepdims=True)
    vs = _heads(v.data, cfg.heads).sum(axis=0, keepdims=True)
    scores = _activate(cfg.scale * (qh @ ks.swapaxes(-1, -2)), cfg.activation)
    s = q.shape
    return DenseTensor(_unheads(scores @ vs / T ** 2, s.h, s.w))


def ssa_stbp(q: DenseTensor, k: DenseTensor, v: DenseTensor, cfg: AttentionConfig) -> DenseTensor:
    """f(scale * Q_t K_t^T) V_t independently at every step."""
    _check_qkv(q, k, v, cfg)
    if not (q.shape.t == k.shape.t == v.shape.t):
        raise ShapeError("ssa_stbp needs equal step counts")
    qh, kh, vh = (_heads(a.data, cfg.heads) for a in (q, k, v))
    scores = _activate(cfg.scale * (qh @ kh.swapaxes(-1, -2)), cfg.activation)
    s = q.shape
    return DenseTensor(_unheads(scores @ vh, s.h, s.w))


def _arrange(x: np.ndarray, n: int, mode: str, heads: int) -> np.ndarray:
    """(T, B, H, W, c) -> (T, B, n*n, heads, Ng, c/heads) with groups in (i, j) order."""
    t, b, h, w, c = x.shape
    hh, ww = h // n, w // n
    if mode == GLOBAL:
        y = x.reshape(t, b, hh, n, ww, n, c).transpose(0, 1, 3, 5, 2, 4, 6)
    else:
        y = x.reshape(t, b, n, hh, n, ww, c).transpose(0, 1, 2, 4, 3, 5, 6)
    y = y.reshape(t, b, n * n, hh * ww, heads, c // heads)
    return y.transpose(0, 1, 2, 4, 3, 5)


def _unarrange(y: np.ndarray, n: int, mode: str, h: int, w: int) -> np.ndarray:
    t, b, g, heads, ng, d = y.shape
    hh, ww = h // n, w // n
    y = y.transpose(0, 1, 2, 4, 3, 5).reshape(t, b, n, n, hh, ww, heads * d)
    if mode == GLOBAL:
        y = y.transpose(0, 1, 4, 2, 5, 3, 6)
    else:
        y = y.transpose(0, 1, 2, 4, 3, 5, 6)
    return y.reshape(t, b, h, w, heads * d)


def grouped_attention(q: SpikeTensor, k_sum: np.ndarray, v_sum: np.ndarray, plan: GroupingPlan,
                      cfg: AttentionConfig, sites: dict, rt: Runtime):
    """Spiking attention inside each token group of both channel halves.

    ``k_sum``/``v_sum`` are K, V summed over time, shape (1, B, H, W, C).
    Returns the raw output (T, B, H, W, C) and the factor that converts it
    to the attention value; that factor is handed to the next spiking site
    as a threshold gain instead of being multiplied in.
    """
    t, b, h, w, c = q.amplitudes.shape
    plan.validate(q.shape)
    counters = rt.counters
    halves = [(mode, lo, hi) for mode, lo, hi in ((plan.global_mode, 0, plan.split_channel),
                                                  (plan.window_mode, plan.split_channel, c)) if hi > lo]
    score_gain = cfg.scale * q.scale / t
    staged = []
    for mode, lo, hi in halves:
        if (hi - lo) % cfg.head_dim:
            raise ShapeError(f"channel half of width {hi - lo} is not a multiple of head_dim {cfg.head_dim}")
        heads = (hi - lo) // cfg.head_dim
        qa = _arrange(q.amplitudes[..., lo:hi], plan.n, mode, heads)
        ka = _arrange(k_sum[..., lo:hi], plan.n, mode, heads)
        va = _arrange(v_sum[..., lo:hi], plan.n, mode, heads)
        ng = ka.shape[-2]
        raw = spike_matmul(qa, ka.swapaxes(-1, -2), counters, bound=q.max_spikes * qa[0].size * ng,
                           op="attention_score")
        staged.append((mode, lo, hi, raw, va))
    # one firing over both halves so they share a threshold and spike scale
    flat = np.concatenate([r.reshape(t, -1) for _, _, _, r, _ in staged], axis=1) if staged else np.zeros((t, 0))
    spikes = rt.fire(flat.reshape(t, 1, 1, 1, -1), sites, "sn_score", gain=score_gain)
    out = np.zeros(q.amplitudes.shape)
    offset = 0
    for mode, lo, hi, raw, va in staged:
        size = raw[0].size
        sa = spikes.amplitudes.reshape(t, -1)[:, offset:offset + size].reshape(raw.shape)
        offset += size
        attn = spike_matmul(sa, va, counters, bound=spikes.max_spikes * sa[0].size * va.shape[-1],
                           op="attention_value")
        out[..., lo:hi] = _unarrange(attn, plan.n, mode, h, w)
    return out, spikes.scale / t


def gw_ssa(x: DenseTensor, plan: GroupingPlan, cfg: AttentionConfig, params: AttentionParams,
           rt: Optional[Runtime] = None) -> DenseTensor:
    """Group-wise spiking self-attention block with its conv branch and residual.

    With ``plan.n == 1`` and ``plan.split_channel == C`` this is ordinary
    all-token attention; with ``params.dw`` unset the conv branch is dropped.
    """
    rt = rt or Runtime()
    s = x.shape
    if cfg.channels != s.c:
        raise ShapeError(f"{cfg.heads} heads x {cfg.head_dim} != {s.c} channels")
    plan.validate(s)
    counters, sites = rt.counters, params.sites
    xs = rt.fire(x.data, sites, "sn_in")
    q = rt.fire(conv2d(xs, params.q, counters).data, sites, "sn_q")
    k_sum = conv2d(xs, params.k, counters).data.sum(axis=0, keepdims=True)
    v = conv2d(xs, params.v, counters).data
    raw, attn_gain = grouped_attention(q, k_sum, v.sum(axis=0, keepdims=True), plan, cfg, sites, rt)
    if params.dw is not None:
        sym = rt.fire(v, sites, "sym_v")
        raw = raw + conv2d(sym, params.dw, counters, weight_gain=1.0 / attn_gain).data
    mixed = rt.fire(raw, sites, "sn_mix", gain=attn_gain)
    return DenseTensor(conv2d(mixed, params.out, counters).data + x.data)


def ssa(x: DenseTensor, cfg: AttentionConfig, params: AttentionParams,
        rt: Optional[Runtime] = None) -> DenseTensor:
    """Plain all-token spiking attention (no grouping, no conv branch)."""
    return gw_ssa(x, GroupingPlan(x.shape.c, 1), cfg, params, rt)
