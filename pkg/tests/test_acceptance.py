"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""

import sys
import time

import numpy as np
import pytest

from gemst import verify
from gemst.config import preset
from gemst.model import build, calibrate, count_params, forward, init_weights
from gemst.profiler import Profiler, ProfileReport, energy, report_csv
from gemst.tensor_core import DenseTensor, GroupingPlan, group, regroup

REFERENCE_PARAMS = {"small": 5.35e6, "base": 9.36e6, "large": 14.48e6}
REFERENCE_ENERGY = ((1.29e9, 1.16, 1.16), (2.14e9, 1.93, 1.92), (3.15e9, 2.84, 2.83))  # (SOPs, target, table)


def report(n, ok, detail, seconds, limit):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2}  {seconds:7.2f}s (limit {limit}s)  {detail}"
    print(line, flush=True)
    return line


def run_criterion(n, limit, fn):
    t0 = time.perf_counter()
    try:
        detail = fn()
        ok = True
    except AssertionError as e:
        ok, detail = False, str(e)
    dt = time.perf_counter() - t0
    if ok and dt > limit:
        ok, detail = False, f"{detail}; took {dt:.1f}s"
    report(n, ok, detail, dt, limit)
    assert ok, detail


def crit_energy():
    parts = []
    for sops, target, table in REFERENCE_ENERGY:
        e = energy(sops, 0)
        assert abs(e - target) <= 0.01 and abs(e - table) <= 0.01, f"{sops:.3g} SOPs -> {e:.4f} mJ"
        parts.append(f"{e:.4f}")
    assert round(energy(1.29e9), 2) == 1.16
    return "energy mJ " + " / ".join(parts)


def crit_params():
    parts = []
    for name, ref in REFERENCE_PARAMS.items():
        total = count_params(build(preset(name)))["total"]
        rel = total / ref - 1
        assert abs(rel) <= 0.10, f"{name}: {total} is {rel:+.1%} from {ref:.0f}"
        parts.append(f"{name} {total / 1e6:.3f}M ({rel:+.2%})")
    return ", ".join(parts)


def crit_gw_grouping():
    detail = verify.check_gw_ssa_grouping()
    rng = np.random.default_rng(1)
    for n in (1, 2, 4):
        for hw in (4, 8):
            x = DenseTensor(rng.standard_normal((2, 1, hw, hw, 8)))
            plan = GroupingPlan.from_ratio(8, 0.5, n)
            assert np.array_equal(regroup(group(x, plan), plan, x.shape).data, x.data), "regroup not exact"
    return detail + "; regroup exact"


def crit_multiplication_free():
    return verify.check_spike_matmul() + "; " + verify.check_multiplication_free()


def crit_sop_scaling():
    m1, b1, _ = verify.saturated_score_sops(temporal_group=1, n=1)
    m2, b2, _ = verify.saturated_score_sops(temporal_group=2, n=4)
    assert m1 == b1 and m2 == b2, "saturated run below its bound"
    assert m1 == 32 * m2, f"ratio {m1 / m2}"
    return f"{m1:,} / {m2:,} = {m1 // m2}"


def _small_profile(model, x, threads):
    prof = Profiler()
    logits = forward(model, x, threads=threads, profiler=prof)
    rep = ProfileReport(prof.report().rows, n_samples=x.shape[1])
    return logits.tobytes(), report_csv(rep)


def crit_determinism():
    cfg = preset("small")
    x = np.random.default_rng(42).random((1, 1, cfg.input_size, cfg.input_size, cfg.in_channels))
    model = calibrate(init_weights(build(cfg), 42), x)
    t0 = time.perf_counter()
    logits = forward(model, x)
    single = time.perf_counter() - t0
    assert logits.shape == (1, 1000) and np.isfinite(logits).all()
    assert single < 60, f"one 224x224 forward took {single:.1f}s"
    batch = np.random.default_rng(7).random((1, 2, cfg.input_size, cfg.input_size, cfg.in_channels))
    runs = [_small_profile(model, batch, t) for t in (1, 8, 1)]
    assert runs[0] == runs[1] == runs[2], "logits or profile CSV differ across runs/threads"
    again = calibrate(init_weights(build(cfg), 42), x)
    assert forward(again, x).tobytes() == logits.tobytes(), "reseeded model gives different logits"
    t0 = time.perf_counter()
    results = verify.run_checks(verify.select(), out=lambda s: None)
    suite = time.perf_counter() - t0
    bad = [r.check.full_name for r in results if not r.ok]
    assert not bad, f"verify failures: {bad}"
    assert suite < 300, f"verify suite took {suite:.0f}s"
    return f"forward {single:.1f}s, CSV/logits identical for threads 1/8, verify {len(results)} checks in {suite:.0f}s"


CRITERIA = [
    (1, 1, crit_energy),
    (2, 1, crit_params),
    (3, 30, verify.check_lossless_conversion),
    (4, 5, verify.check_spike_count_bound),
    (5, 10, verify.check_quantizer_equivalence),
    (6, 20, verify.check_if_rate_identity),
    (7, 60, crit_gw_grouping),
    (8, 10, crit_multiplication_free),
    (9, 60, crit_sop_scaling),
    (10, 400, crit_determinism),
]


@pytest.mark.parametrize("n,limit,fn", CRITERIA, ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_criterion(n, limit, fn, capsys):
    with capsys.disabled():
        run_criterion(n, limit, fn)


if __name__ == "__main__":
    failed = 0
    for n, limit, fn in CRITERIA:
        try:
            run_criterion(n, limit, fn)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
