"""Brute-force reference implementations.

Nothing here calls the engine kernels: levels are enumerated as a cartesian
product, quantization is a linear scan, convolution and attention are plain
loops, and spiking sites are simulated per time-step with real-valued spikes
(no folded gains). Parameter objects from the engine are only read as data.
Everything is slow on purpose and meant for inputs of a few hundred tokens.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SEEDS = (1, 7, 42, 1337)


@dataclass
class OracleCase:
    name: str
    seed: int
    tolerance: float
    engine_op: str
    oracle_fn: str


@dataclass
class Trace:
    """Accumulations performed by the naive kernels, keyed by operation kind."""

    counts: Counter = field(default_factory=Counter)

    def add(self, op: str, n: int = 1):
        self.counts[op] += n


def oracle_sop_count(trace: Trace, ops: Optional[Sequence[str]] = None) -> int:
    """Synaptic operations recorded in ``trace`` (all spike-driven ops unless ``ops`` given)."""
    keys = ops if ops is not None else [k for k in trace.counts if k != "mac"]
    return sum(trace.counts[k] for k in keys)


# ------------------------------------------------------------- level sets

def _groups_of(grouping):
    if hasattr(grouping, "groups"):
        return [list(g) for g in grouping.groups], grouping.alpha, grouping.t
    groups = [list(g) for g in grouping]
    return groups, 2.0, sum(len(g) for g in groups)


def oracle_level_decompositions(grouping, alpha: Optional[float] = None) -> dict:
    """level value -> exponents picked (fewest spikes, then smallest tuple)."""
    groups, a, _ = _groups_of(grouping)
    a = a if alpha is None else alpha
    best: dict = {}
    for picks in itertools.product(*[[None] + g for g in groups]):
        chosen = tuple(sorted(e for e in picks if e is not None))
        value = math.fsum(a ** e for e in chosen)
        if value not in best or (len(chosen), chosen) < (len(best[value]), best[value]):
            best[value] = chosen
    return best


def oracle_level_enum(grouping, alpha: Optional[float] = None) -> np.ndarray:
    """Sorted distinct sums that take at most one base per group."""
    return np.array(sorted(oracle_level_decompositions(grouping, alpha)))


def oracle_symmetric(levels) -> np.ndarray:
    return np.array(sorted(set(float(v) for v in levels) | set(-float(v) for v in levels)))


def oracle_boundaries(levels, lam: float = 1.0) -> list:
    lv = [float(v) for v in levels]
    return [lam * (lv[i] + lv[i + 1]) / 2 for i in range(len(lv) - 1)]


def oracle_quantize_linear(x: float, levels, lam: float = 1.0):
    """Index of the level ``x`` rounds to (ties go up) and comparisons spent."""
    if hasattr(levels, "levels"):
        lam, levels = levels.lam, levels.levels
    idx, comparisons = 0, 0
    for b in oracle_boundaries(levels, lam):
        comparisons += 1
        if x >= b:
            idx += 1
        else:
            break
    return idx, comparisons


def oracle_quantize_many(x: np.ndarray, levels, lam: float = 1.0) -> np.ndarray:
    """Linear scan over the boundaries, applied elementwise."""
    x = np.asarray(x, dtype=np.float64)
    idx = np.zeros(x.shape, dtype=np.int64)
    for b in oracle_boundaries(levels, lam):
        idx += x >= b
    return idx


# ------------------------------------------------------------- spiking site

@dataclass
class OracleSite:
    """A spiking site described only by its grouping, alpha, lambda and symmetry."""

    groups: list
    alpha: float
    t: int
    lam: float
    symmetric: bool

    @classmethod
    def from_level_set(cls, ls) -> "OracleSite":
        return cls([list(g) for g in ls.grouping.groups], ls.grouping.alpha, ls.grouping.t,
                   float(ls.lam), bool(ls.symmetric))

    def table(self):
        dec = oracle_level_decompositions(self.groups, self.alpha)
        pos = sorted(dec)
        rows = [(v, dec[v], 1) for v in pos]
        if self.symmetric:
            rows = [(-v, dec[v], -1) for v in reversed(pos) if v != 0] + rows
        return rows


def oracle_sn(currents: np.ndarray, site: OracleSite, v0: float = 0.0):
    """Integrate currents (time on axis 0) over the window, then replay the level's train.

    Returns per-step real-valued outputs (each spike worth alpha**t * lam * T / s_max)
    and the number of nonzero spikes.
    """
    currents = np.asarray(currents, dtype=np.float64)
    T = site.t
    if currents.shape[0] == 1:
        currents = np.repeat(currents, T, axis=0)
    potential = np.zeros(currents.shape[1:])
    for t in range(T):
        potential = potential + currents[t]
    rows = site.table()
    levels = [r[0] for r in rows]
    s_max = max(levels)
    idx = oracle_quantize_many(potential + v0, levels, site.lam)
    unit = site.lam * T / s_max
    out = np.zeros((T,) + potential.shape)
    spikes = 0
    for k, (_, exps, sign) in enumerate(rows):
        mask = idx == k
        if not mask.any() or not exps:
            continue
        for e in exps:
            out[e][mask] = sign * site.alpha ** e * unit
        spikes += len(exps) * int(mask.sum())
    return out, spikes


# ------------------------------------------------------------- convolution

def oracle_conv_naive(x: np.ndarray, weight: np.ndarray, bias, kind: str, stride: int = 1,
                      padding: int = 0, trace: Optional[Trace] = None, spiking: bool = True,
                      op: str = "conv") -> np.ndarray:
    """Direct loops over (t, b, oy, ox, co, ky, kx[, ci]).

    For spiking inputs one SOP is recorded per nonzero input reaching an output
    through a weight; for dense inputs one MAC per weight tap (padding included).
    """
    T, B, H, W, C = x.shape
    if kind == "pointwise":
        k, co_n = 1, weight.shape[1]
        w = weight.reshape(1, 1, *weight.shape)
    elif kind == "depthwise":
        k, co_n = weight.shape[0], C
        w = weight
    else:
        k, co_n = weight.shape[0], weight.shape[3]
        w = weight
    ho = (H + 2 * padding - k) // stride + 1
    wo = (W + 2 * padding - k) // stride + 1
    out = np.zeros((T, B, ho, wo, co_n))
    n_ops = 0
    for t in range(T):
        for b in range(B):
            for oy in range(ho):
                for ox in range(wo):
                    for co in range(co_n):
                        acc = 0.0 if bias is None else float(bias[co])
                        for ky in range(k):
                            iy = oy * stride + ky - padding
                            for kx in range(k):
                                ix = ox * stride + kx - padding
                                inside = 0 <= iy < H and 0 <= ix < W
                                cis = [co] if kind == "depthwise" else range(C)
                                for ci in cis:
                                    if not spiking:
                                        n_ops += 1
                                    if not inside:
                                        continue
                                    v = x[t, b, iy, ix, ci]
                                    if v == 0:
                                        continue
                                    wv = w[ky, kx, ci] if kind == "depthwise" else w[ky, kx, ci, co]
                                    acc += v * wv
                                    if spiking:
                                        n_ops += 1
                        out[t, b, oy, ox, co] = acc
    if trace is not None:
        trace.add("mac" if not spiking else op, n_ops)
    return out


def oracle_conv_params(x: np.ndarray, p, trace: Optional[Trace] = None, spiking: bool = True,
                       weight_scale: float = 1.0) -> np.ndarray:
    bias = None if p.bias is None else p.bias
    return oracle_conv_naive(x, p.weight * weight_scale, bias, p.kind, p.stride, p.padding, trace, spiking)


# ------------------------------------------------------------- attention

def oracle_token_groups(h: int, w: int, n: int, mode: str) -> list:
    """Token index lists (row-major positions) of the n*n groups, in (i, j) order."""
    out = []
    hh, ww = h // n, w // n
    for gi in range(n):
        for gj in range(n):
            if mode == "strided":
                toks = [(y, x) for y in range(gi, h, n) for x in range(gj, w, n)]
            else:
                toks = [(y, x) for y in range(gi * hh, (gi + 1) * hh) for x in range(gj * ww, (gj + 1) * ww)]
            out.append(toks)
    return out


def _score_loop(q, k, heads: int, scale: float, trace: Optional[Trace]) -> np.ndarray:
    """(T, B, heads, N, N) scores; products with a zero q entry are skipped."""
    T, B, N, C = q.shape
    d = C // heads
    scores = np.zeros((T, B, heads, N, N))
    n_ops = 0
    for t in range(T):
        tk = t if k.shape[0] == T else 0
        for b in range(B):
            for hd in range(heads):
                for i in range(N):
                    for j in range(N):
                        acc = 0.0
                        for c in range(hd * d, (hd + 1) * d):
                            if q[t, b, i, c] != 0:
                                acc += q[t, b, i, c] * k[tk, b, j, c]
                                n_ops += 1
                        scores[t, b, hd, i, j] = acc * scale
    if trace is not None:
        trace.add("attention_score", n_ops)
    return scores


def _value_loop(a, v, trace: Optional[Trace]) -> np.ndarray:
    """out[t, b, i, c] = sum_j a[t, b, head(c), i, j] v[t, b, j, c]; zero scores skipped."""
    T, B, heads, N, _ = a.shape
    C = v.shape[-1]
    d = C // heads
    out = np.zeros((T, B, N, C))
    n_ops = 0
    for t in range(T):
        tv = t if v.shape[0] == T else 0
        for b in range(B):
            for hd in range(heads):
                for i in range(N):
                    for j in range(N):
                        s = a[t, b, hd, i, j]
                        if s == 0:
                            continue
                        for c in range(hd * d, (hd + 1) * d):
                            out[t, b, i, c] += s * v[tv, b, j, c]
                            n_ops += 1
    if trace is not None:
        trace.add("attention_value", n_ops)
    return out


def oracle_attention_naive(q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int, scale: float,
                           activation=None, trace: Optional[Trace] = None) -> np.ndarray:
    """Loops over (t, b, head, i, j, d). q: (T, B, N, C); k, v: (Tk, B, N, C) with Tk in {1, T}.

    ``activation`` maps the whole (T, B, heads, N, N) score array (it may be a
    spiking site, which needs every step before firing).
    """
    scores = _score_loop(q, k, heads, scale, trace)
    act = scores if activation is None else activation(scores)
    return _value_loop(act, v, trace)


def oracle_grouped_attention(q, k, v, split: int, n: int, head_dim: int, scale: float,
                             activation=None, trace: Optional[Trace] = None) -> np.ndarray:
    """Attention restricted to token groups: strided groups on channels [0, split), windows on the rest.

    q: (T, B, H, W, C); k, v may have a single step. ``activation`` sees the
    scores of every group of both halves at once.
    """
    T, B, H, W, C = q.shape
    jobs = []
    for mode, lo, hi in (("strided", 0, split), ("window", split, C)):
        if hi <= lo:
            continue
        for toks in oracle_token_groups(H, W, n, mode):
            jobs.append((lo, hi, [p[0] for p in toks], [p[1] for p in toks]))
    raw = [_score_loop(q[:, :, ys, xs, lo:hi], k[:, :, ys, xs, lo:hi], (hi - lo) // head_dim, scale, trace)
           for lo, hi, ys, xs in jobs]
    acts = raw
    if activation is not None and raw:
        flat = activation(np.concatenate([r.reshape(T, -1) for r in raw], axis=1))
        acts, off = [], 0
        for r in raw:
            acts.append(flat[:, off:off + r[0].size].reshape(r.shape))
            off += r[0].size
    out = np.zeros((T, B, H, W, C))
    for (lo, hi, ys, xs), a in zip(jobs, acts):
        out[:, :, ys, xs, lo:hi] = _value_loop(a, v[:, :, ys, xs, lo:hi], trace)
    return out


# ------------------------------------------------------------- whole model

class OracleNet:
    """Reference forward pass of a built model, reading its weights and sites as data."""

    def __init__(self, model, v0: float = 0.0):
        self.model = model
        self.v0 = v0
        self.trace = Trace()
        self.spike_inputs = []  # (site name, per-step values) for invariant checks

    def sn(self, currents, ls, name=""):
        out, _ = oracle_sn(currents, OracleSite.from_level_set(ls), self.v0)
        self.spike_inputs.append((name, out))
        return out

    def conv(self, x, p, spiking=True):
        return oracle_conv_params(x, p, self.trace, spiking)

    def ffn(self, x, f):
        h = self.conv(self.sn(x, f.sites["sn1"], "sn1"), f.pw1)
        if f.dw is not None:
            h = self.conv(self.sn(h, f.sites["sym"], "sym"), f.dw)
        return self.conv(self.sn(h, f.sites["sn2"], "sn2"), f.pw2) + x

    def attention(self, x, blk):
        a, cfg, plan = blk.attn, blk.attn_cfg, blk.plan
        T = x.shape[0]
        xs = self.sn(x, a.sites["sn_in"], "sn_in")
        q = self.sn(self.conv(xs, a.q), a.sites["sn_q"], "sn_q")
        k_avg = self.conv(xs, a.k).mean(axis=0, keepdims=True)
        v = self.conv(xs, a.v)
        v_avg = v.mean(axis=0, keepdims=True)
        score_site = a.sites["sn_score"]

        def act(scores):
            return self.sn(scores.reshape(T, -1), score_site, "sn_score").reshape(scores.shape)

        out = oracle_grouped_attention(q, k_avg, v_avg, plan.split_channel, plan.n, cfg.head_dim,
                                       cfg.scale, act, self.trace)
        if a.dw is not None:
            out = out + self.conv(self.sn(v, a.sites["sym_v"], "sym_v"), a.dw)
        mixed = self.sn(out, a.sites["sn_mix"], "sn_mix")
        return self.conv(mixed, a.out) + x

    def block(self, x, blk):
        if blk.kind == "conv_b":
            s = blk.sconv
            h = self.conv(self.sn(x, s.sites["sn1"], "sn1"), s.conv1)
            x = self.conv(self.sn(h, s.sites["sn2"], "sn2"), s.conv2) + x
        else:
            x = self.attention(x, blk)
        return self.ffn(x, blk.ffn)

    def forward(self, image: np.ndarray) -> np.ndarray:
        """image: (1, B, H, W, C) -> logits (B, classes)."""
        m = self.model
        T = m.config.time_steps
        stem = self.conv(np.asarray(image, dtype=np.float64), m.stem, spiking=False)
        x = np.repeat(stem, T, axis=0)
        for st in m.stages:
            if st.down is not None:
                x = self.conv(self.sn(x, st.down.sites["sn"], "down"), st.down.conv)
            for blk in st.blocks:
                x = self.block(x, blk)
        T_, B, H, W, C = x.shape
        pooled = np.zeros((B, C))
        for b in range(B):
            for c in range(C):
                pooled[b, c] = math.fsum(x[:, b, :, :, c].ravel()) / (T_ * H * W)
        logits = np.zeros((B, m.head.weight.shape[1]))
        for b in range(B):
            for o in range(logits.shape[1]):
                logits[b, o] = m.head.bias[o] + sum(pooled[b, c] * m.head.weight[c, o] for c in range(C))
        self.trace.add("mac", B * C * logits.shape[1])
        return logits


def oracle_model_forward(model, image, v0: float = 0.0):
    net = OracleNet(model, v0)
    return net.forward(image), net.trace
