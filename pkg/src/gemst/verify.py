"""The oracle check suite behind ``gemst verify``.

Each check compares an engine fast path with its brute-force reference on
fixed seeds and raises ``AssertionError`` with a short reason on mismatch.
Checks are grouped by module name so ``--filter`` can select a subset.
"""

from __future__ import annotations

import contextlib
import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import exp_coding
from .attention import AttentionConfig, AttentionParams, grouped_attention, gw_ssa, spike_matmul
from .blocks import ssa_b
from .conv import ConvParams, conv2d
from .exp_coding import (TemporalGrouping, build_level_set, decode_spikes, encode_spikes, expg_forward,
                         fire_amplitudes, quantize_many_counted, symmetric_level_set)
from .model import build, calibrate, forward, init_weights, toy_config
from .neuron import NeuronParams, rate_summary, run_sequence
from .oracle import (SEEDS, OracleSite, oracle_attention_naive, oracle_conv_naive,
                     oracle_level_decompositions, oracle_level_enum, oracle_model_forward,
                     oracle_quantize_many, oracle_sn, oracle_sop_count, oracle_symmetric)
from .profiler import OpCounters, Profiler, sop_upper_bound
from .runtime import Runtime
from .tensor_core import (DenseTensor, GroupingPlan, SpikeTensor, TensorShape, group, regroup,
                          strided_groups, window_groups)

N_RANDOM = 100_000


@dataclass
class Check:
    group: str
    name: str
    fn: Callable[[], Optional[str]]

    @property
    def full_name(self) -> str:
        return f"{self.group}.{self.name}"


@dataclass
class CheckResult:
    check: Check
    ok: bool
    seconds: float
    detail: str = ""


CHECKS: list = []


def check(group_name: str):
    def deco(fn):
        CHECKS.append(Check(group_name, fn.__name__.removeprefix("check_"), fn))
        return fn
    return deco


# ---------------------------------------------------------------- helpers

def compositions(t: int):
    """All contiguous partitions of 0..t-1 into runs (2**(t-1) of them)."""
    for cuts in itertools.product((False, True), repeat=t - 1):
        groups, cur = [], [0]
        for e, cut in zip(range(1, t), cuts):
            if cut:
                groups.append(tuple(cur))
                cur = []
            cur.append(e)
        groups.append(tuple(cur))
        yield tuple(groups)


def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1:]
        yield [[head]] + part


def contiguous_level_sets(max_t: int = 6, alpha: float = 2.0):
    for t in range(1, max_t + 1):
        for groups in compositions(t):
            yield build_level_set(TemporalGrouping(t, groups, alpha))


def _random_potentials(rng, ls, size):
    """Uniform draws over the level range plus points placed exactly on boundaries."""
    lo, hi = ls.lam * ls.levels[0], ls.lam * ls.levels[-1]
    span = hi - lo
    x = rng.uniform(lo - 0.1 * span - 1, hi + 0.1 * span + 1, size)
    k = min(size // 10, 10 * ls.boundaries.size)
    x[:k] = np.resize(ls.boundaries, k)
    return x


def _conv(kind, ci, co, k, rng, stride=1, bias=True):
    shape = {"pointwise": (ci, co), "depthwise": (k, k, ci), "full": (k, k, ci, co)}[kind]
    w = rng.uniform(-1, 1, shape)
    b = rng.uniform(-0.1, 0.1, co) if bias and kind != "depthwise" else None
    return ConvParams(kind, k, stride, ci, co, w, b)


def _attention_params(c, ls, rng, with_dw=True):
    sites = {n: ls for n in ("sn_in", "sn_q", "sn_score", "sn_mix")}
    if with_dw:
        sites["sym_v"] = symmetric_level_set(ls)
    pw = [_conv("pointwise", c, c, 1, rng) for _ in range(4)]
    return AttentionParams(*pw, dw=_conv("depthwise", c, c, 3, rng) if with_dw else None, sites=sites)


def _reference_gw_ssa(x: np.ndarray, plan: GroupingPlan, cfg: AttentionConfig, p: AttentionParams,
                      v0: float = 0.0) -> np.ndarray:
    """gw_ssa rebuilt from tensor_core grouping ops and the per-group naive oracle."""
    site = {k: OracleSite.from_level_set(ls) for k, ls in p.sites.items()}

    def sn(a, name):
        return oracle_sn(a, site[name], v0)[0]

    def pw(a, c):
        return oracle_conv_naive(a, c.weight, c.bias, c.kind, c.stride, c.padding)

    T = x.shape[0]
    xs = sn(x, "sn_in")
    q = sn(pw(xs, p.q), "sn_q")
    k_avg = pw(xs, p.k).mean(axis=0, keepdims=True)
    v = pw(xs, p.v)
    v_avg = v.mean(axis=0, keepdims=True)
    shape = DenseTensor(q).shape
    gq, wq = group(DenseTensor(q), plan)
    gk, wk = group(DenseTensor(k_avg), plan)
    gv, wv = group(DenseTensor(v_avg), plan)
    outs = []
    for qs, ks, vs in ((gq, gk, gv), (wq, wk, wv)):
        half = []
        for qg, kg, vg in zip(qs, ks, vs):
            t, b, h, w, c = qg.data.shape
            if c == 0:
                half.append(DenseTensor(np.zeros((t, b, h, w, 0))))
                continue
            flat = lambda a: a.data.reshape(a.data.shape[0], b, h * w, c)

            def act(scores):
                return sn(scores.reshape(T, -1), "sn_score").reshape(scores.shape)

            o = oracle_attention_naive(flat(qg), flat(kg), flat(vg), c // cfg.head_dim, cfg.scale, act)
            half.append(DenseTensor(o.reshape(t, b, h, w, c)))
        outs.append(half)
    attn = regroup((outs[0], outs[1]), plan, shape).data
    if p.dw is not None:
        attn = attn + oracle_conv_naive(sn(v, "sym_v"), p.dw.weight, None, "depthwise", 1, p.dw.padding)
    return pw(sn(attn, "sn_mix"), p.out) + x


@contextlib.contextmanager
def injected_fault():
    """Nudge one decision boundary of every level set built inside the block (negative control)."""
    original = exp_coding.ExpLevelSet.__post_init__

    def faulty(self):
        original(self)
        b = np.array(self.boundaries)
        if b.size:
            i = b.size // 2
            gap = self.lam * (self.levels[i + 1] - self.levels[i])
            b[i] += 0.25 * gap
        b.flags.writeable = False
        object.__setattr__(self, "boundaries", b)

    exp_coding.ExpLevelSet.__post_init__ = faulty
    try:
        yield
    finally:
        exp_coding.ExpLevelSet.__post_init__ = original


# ---------------------------------------------------------------- tensor_core

@check("tensor_core")
def check_grouping_partitions():
    rng = np.random.default_rng(SEEDS[0])
    for hw in (4, 8, 12):
        for n in (d for d in (1, 2, 3, 4) if hw % d == 0):
            ids = np.arange(hw * hw, dtype=np.float64).reshape(1, 1, hw, hw, 1)
            x = DenseTensor(ids)
            for groups in (strided_groups(x, n), window_groups(x, n)):
                seen = np.concatenate([g.data.ravel() for g in groups])
                assert np.array_equal(np.sort(seen), ids.ravel()), f"hw={hw} n={n}: not a partition"
            xr = DenseTensor(rng.standard_normal((2, 1, hw, hw, 6)))
            for split in (0, 3, 6):
                plan = GroupingPlan(split, n)
                back = regroup(group(xr, plan), plan, xr.shape)
                assert np.array_equal(back.data, xr.data), f"regroup round trip hw={hw} n={n} split={split}"


# ---------------------------------------------------------------- neuron

@check("neuron")
def check_if_rate_identity(n: int = N_RANDOM):
    """|F_avg - (I_avg - (v_T - v0)/T)| over random IF soft-reset sequences, T in [1, 16]."""
    rng = np.random.default_rng(SEEDS[1])
    ts = rng.integers(1, 17, n)
    worst = 0.0
    for T in range(1, 17):
        m = int((ts == T).sum())
        if not m:
            continue
        theta = rng.uniform(0.2, 2.0)
        params = NeuronParams(theta_pre=theta)
        x = rng.uniform(-1.0, 2.0, (T, m)) * theta
        tr = run_sequence(params, x)
        r = rate_summary(tr, params, x)
        worst = max(worst, float(np.max(np.abs(r.f_avg - (r.i_avg - r.v_residual)))))
    assert worst < 1e-9, f"rate identity residual {worst:.3e}"
    return f"max residual {worst:.2e} over {n} sequences"


# ---------------------------------------------------------------- exp_coding

@check("exp_coding")
def check_level_enumeration():
    count = 0
    for t in range(1, 7):
        for part in set_partitions(range(t)):
            g = TemporalGrouping(t, [sorted(p) for p in part])
            ls = build_level_set(g)
            ref = oracle_level_enum(g)
            assert np.array_equal(ls.levels, ref), f"levels differ for {g.groups}"
            sym = symmetric_level_set(ls)
            assert np.array_equal(sym.levels, oracle_symmetric(ref)), f"mirrored levels differ for {g.groups}"
            dec = oracle_level_decompositions(g)
            for lv, train in zip(ls.levels, ls.trains):
                exps = tuple(np.flatnonzero(train))
                assert exps == dec[float(lv)], f"decomposition of {lv} differs for {g.groups}"
            count += 1
    return f"{count} groupings"


@check("exp_coding")
def check_spike_count_bound():
    """Every level of every grouping with T <= 6 fires at most n spikes."""
    count = 0
    for t in range(1, 7):
        for part in set_partitions(range(t)):
            g = TemporalGrouping(t, [sorted(p) for p in part])
            ls = build_level_set(g)
            for lv in ls.levels:
                train = encode_spikes(float(lv), ls)
                assert np.count_nonzero(train) <= g.n, f"level {lv} of {g.groups} fires {np.count_nonzero(train)} > {g.n}"
                count += 1
    return f"{count} levels"


@check("exp_coding")
def check_quantizer_equivalence(n: int = N_RANDOM):
    """Binary search == linear scan, with at most ceil(log2 |levels|) comparisons."""
    rng = np.random.default_rng(SEEDS[2])
    sets = 0
    for base in contiguous_level_sets(6):
        for ls in (base, symmetric_level_set(base), base.with_lambda(rng.uniform(0.1, 3.0))):
            x = _random_potentials(rng, ls, n)
            idx, comps = quantize_many_counted(x, ls)
            ref = oracle_quantize_many(x, ls.levels, ls.lam)
            bad = np.flatnonzero(idx != ref)
            assert bad.size == 0, f"x={x[bad[0]]!r}: binary {idx[bad[0]]} vs linear {ref[bad[0]]}"
            limit = math.ceil(math.log2(ls.levels.size))
            assert comps.max() <= limit, f"{comps.max()} comparisons > {limit}"
            for xi in x[:50]:
                i, c = exp_coding.quantize_counted(xi, ls)
                assert i == ref[np.flatnonzero(x == xi)[0]] and c <= limit
            sets += 1
    return f"{sets} level sets x {n} inputs"


@check("exp_coding")
def check_lossless_conversion(n: int = N_RANDOM):
    """ANN-mode rate == decoded spike train of the SNN-mode neuron, <= 1e-12 relative."""
    rng = np.random.default_rng(SEEDS[3])
    worst, sets = 0.0, 0
    for ls in contiguous_level_sets(6):
        ls = ls.with_lambda(rng.uniform(0.25, 4.0))
        T = ls.t
        i_avg = _random_potentials(rng, ls, n) / T
        ann = expg_forward(i_avg, T, 0.0, ls)
        # SNN mode: constant current over the window, integrate, emit the train, decode it
        amps, idx = fire_amplitudes(i_avg[None], ls)
        snn = ls.lam * amps.sum(axis=0) / ls.s_max
        spikes = SpikeTensor(amps.reshape(T, 1, 1, 1, n), ls.spike_scale, ls.alpha, ls.n)
        snn_mean = spikes.values().data.mean(axis=0).ravel()
        for k in range(0, n, max(1, n // 200)):
            train = encode_spikes(float(ls.levels[idx[k]]), ls)
            d = decode_spikes(train, ls)
            worst = max(worst, abs(d - ann[k]) / max(abs(ann[k]), 1e-300))
        den = np.maximum(np.abs(ann), 1e-300)
        worst = max(worst, float(np.max(np.abs(snn - ann) / den)), float(np.max(np.abs(snn_mean - ann) / den)))
        sets += 1
    assert worst <= 1e-12, f"max relative deviation {worst:.3e}"
    return f"{sets} level sets, max rel dev {worst:.1e}"


# ---------------------------------------------------------------- attention

@check("attention")
def check_spike_matmul(size: int = 64):
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        exps = rng.integers(0, 6, (size, size))
        s = np.where(rng.random((size, size)) < 0.3, rng.choice([-1.0, 1.0], (size, size)) * 2.0 ** exps, 0.0)
        d = rng.standard_normal((size, size))
        ref = s @ d
        got = spike_matmul(s, d)
        worst = max(worst, float(np.max(np.abs(got - ref)) / np.max(np.abs(ref))))
    assert worst <= 1e-6, f"relative deviation {worst:.3e}"
    return f"max rel dev {worst:.1e}"


@check("attention")
def check_gw_ssa_grouping(sizes=(4, 8), ns=(1, 2, 4), ts=(1, 2, 4)):
    """gw_ssa == tensor_core grouping + per-group naive attention + regroup."""
    worst, cases = 0.0, 0
    for hw, n, T in itertools.product(sizes, ns, ts):
        seed = SEEDS[cases % len(SEEDS)]
        rng = np.random.default_rng(seed)
        c, heads = 8, 2
        ls = build_level_set(TemporalGrouping.contiguous(T, 2 if T > 1 else 1))
        params = _attention_params(c, ls, rng)
        plan = GroupingPlan.from_ratio(c, 0.5, n)
        cfg = AttentionConfig(heads, c // heads)
        x = DenseTensor(rng.uniform(-1, 2, (T, 1, hw, hw, c)))
        gw_ssa(x, plan, cfg, params, Runtime(calibrate=True))
        got = gw_ssa(x, plan, cfg, params).data
        ref = _reference_gw_ssa(x.data, plan, cfg, params)
        err = float(np.max(np.abs(got - ref)))
        worst = max(worst, err)
        assert err <= 1e-5, f"hw={hw} n={n} T={T}: max abs deviation {err:.3e}"
        cases += 1
    return f"{cases} cases, max abs dev {worst:.1e}"


def stage2_block(T: int = 4, temporal_group: int = 2, n: int = 4, c: int = 96, hw: int = 28, seed: int = 42):
    """A Stage-2 GW-SSA block (C=96, 4 heads, 4x4 groups) with random weights."""
    cfg = toy_config("ssa_b_gw", channels=c, input_size=hw * 2, time_steps=T, heads=4,
                     spatial_groups=n, temporal_group=temporal_group)
    model = init_weights(build(cfg), seed)
    return model.stages[0].blocks[0]


@check("attention")
def check_multiplication_free():
    """No general multiplies are charged anywhere in a Stage-2 block forward."""
    rng = np.random.default_rng(SEEDS[2])
    blk = stage2_block()
    x = DenseTensor(rng.uniform(-1, 2, (4, 1, 28, 28, 96)))
    ssa_b(x, blk, Runtime(calibrate=True))
    prof = Profiler()
    rt = Runtime(profiler=prof, stage=2, block_index=0)
    y = ssa_b(x, blk, rt)
    assert y.data.shape == x.data.shape
    attn = prof.modules[(2, 0, "gw_ssa")]
    assert attn.ops["attention_score"][0] > 0 and attn.ops["attention_value"][0] > 0
    for key, c in prof.modules.items():
        assert c.muls == 0 and c.macs == 0, f"{key}: {c.muls} general multiplies"
    return f"{attn.ops['attention_score'][0]:,} score SOPs, 0 multiplies"


def saturated_score_sops(temporal_group: int, n: int, T: int = 4, hw: int = 28, c: int = 96, heads: int = 4):
    """Measured attention-score SOPs with every Q neuron firing its maximal train."""
    ls = build_level_set(TemporalGrouping.contiguous(T, temporal_group))
    amps = np.broadcast_to((ls.trains[-1] * ls.grouping.bases)[:, None, None, None, None], (T, 1, hw, hw, c))
    q = SpikeTensor(np.ascontiguousarray(amps), ls.spike_scale, ls.alpha, ls.n)
    rng = np.random.default_rng(SEEDS[0])
    k_sum = rng.standard_normal((1, 1, hw, hw, c))
    v_sum = rng.standard_normal((1, 1, hw, hw, c))
    plan = GroupingPlan(c // 2 if n > 1 else c, n)
    counters = OpCounters()
    grouped_attention(q, k_sum, v_sum, plan, AttentionConfig(heads, c // heads), {"sn_score": ls},
                      Runtime(counters=counters))
    measured, bound = counters.ops["attention_score"]
    formula = sop_upper_bound("attention_score", TensorShape(T, 1, hw, hw, c), temporal_group, plan)
    return measured, bound, formula


@check("profiler")
def check_sop_scaling():
    """Ungrouped / grouped attention-score SOPs at saturation = |G_S| * |G_T| = 32."""
    m1, b1, f1 = saturated_score_sops(temporal_group=1, n=1)
    m2, b2, f2 = saturated_score_sops(temporal_group=2, n=4)
    assert m1 == b1 == f1 and m2 == b2 == f2, "saturated SOPs must equal the upper bound"
    assert m1 == 32 * m2, f"ratio {m1 / m2} != 32"
    return f"{m1:,} / {m2:,} = {m1 // m2}"


@check("profiler")
def check_sop_counts_vs_oracle():
    """Engine SOP counters == accumulations executed by the naive kernels."""
    for kind, kw in (("conv_b", {}), ("ssa_b_gw", dict(heads=2, spatial_groups=2)), ("ssa_b_plain", {})):
        cfg = toy_config(kind, **kw)
        model = init_weights(build(cfg), SEEDS[1])
        x = np.random.default_rng(SEEDS[1]).random((1, 1, 16, 16, 3))
        calibrate(model, x)
        prof = Profiler()
        forward(model, x, profiler=prof)
        _, trace = oracle_model_forward(model, x)
        sops = sum(c.sops for c in prof.modules.values())
        assert sops == oracle_sop_count(trace), f"{kind}: engine {sops} vs oracle {oracle_sop_count(trace)}"
        for op in ("attention_score", "attention_value"):
            e = sum(c.ops.get(op, [0, 0])[0] for c in prof.modules.values())
            assert e == trace.counts[op], f"{kind} {op}: engine {e} vs oracle {trace.counts[op]}"
        for key, c in prof.modules.items():
            assert c.sops <= c.sop_bound, f"{kind} {key}: measured above bound"
            if key[2] not in ("stem", "header"):
                assert c.macs == 0, f"{kind} {key}: MACs outside stem/header"


# ---------------------------------------------------------------- blocks / model

@check("blocks")
def check_conv_vs_naive():
    worst = 0.0
    for seed, (kind, k, stride) in zip(SEEDS, (("depthwise", 3, 1), ("full", 3, 2), ("pointwise", 1, 1),
                                              ("full", 7, 2))):
        rng = np.random.default_rng(seed)
        ci = 5
        co = ci if kind == "depthwise" else 4
        p = _conv(kind, ci, co, k, rng, stride=stride)
        x = rng.standard_normal((2, 1, 9, 9, ci))
        got = conv2d(DenseTensor(x), p).data
        ref = oracle_conv_naive(x, p.weight, p.bias, kind, stride, p.padding, spiking=False)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    assert worst <= 1e-6, f"max abs deviation {worst:.3e}"
    return f"max abs dev {worst:.1e}"


@check("model")
def check_toy_end_to_end():
    """Whole toy models (16x16 input) against the composed naive oracle, <= 1e-4."""
    worst = 0.0
    for seed, (kind, kw) in zip(SEEDS, (("ssa_b_plain", {}), ("conv_b", {}),
                                        ("ssa_b_gw", dict(heads=2, spatial_groups=2)), ("ssa_b_gw", dict(heads=4, spatial_groups=4)))):
        model = init_weights(build(toy_config(kind, **kw)), seed)
        x = np.random.default_rng(seed).random((1, 2, 16, 16, 3))
        calibrate(model, x)
        got = forward(model, x, check_spikes=True)
        ref, _ = oracle_model_forward(model, x)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    assert worst <= 1e-4, f"max abs deviation {worst:.3e}"
    return f"max abs dev {worst:.1e}"


@check("model")
def check_thread_determinism():
    model = init_weights(build(toy_config("ssa_b_gw", heads=2, spatial_groups=2)), SEEDS[2])
    x = np.random.default_rng(SEEDS[2]).random((1, 3, 16, 16, 3))
    calibrate(model, x)
    outs = []
    for threads in (1, 8, 1):
        prof = Profiler()
        y = forward(model, x, threads=threads, profiler=prof)
        outs.append((y.tobytes(), [(k, c.sops, c.sop_bound, c.macs) for k, c in prof.modules.items()]))
    assert outs[0] == outs[1] == outs[2], "logits or counters depend on the thread count"


# ---------------------------------------------------------------- runner

def select(filter_text: Optional[str] = None) -> list:
    if not filter_text:
        return list(CHECKS)
    keys = [k.strip() for k in filter_text.split(",") if k.strip()]
    return [c for c in CHECKS if any(c.group == k or c.full_name == k or c.full_name.startswith(k + ".")
                                     for k in keys)]


def run_checks(checks, out=print) -> list:
    results = []
    for c in checks:
        t0 = time.perf_counter()
        try:
            detail = c.fn() or ""
            ok = True
        except AssertionError as e:
            ok, detail = False, str(e) or "assertion failed"
        except Exception as e:  # a crash is a failure too, with its type
            ok, detail = False, f"{type(e).__name__}: {e}"
        dt = time.perf_counter() - t0
        results.append(CheckResult(c, ok, dt, detail))
        out(f"{'PASS' if ok else 'FAIL'}  {c.full_name:<40} {dt:7.2f}s  {detail}")
    n_ok = sum(r.ok for r in results)
    out(f"{n_ok}/{len(results)} checks passed in {sum(r.seconds for r in results):.1f}s")
    return results
