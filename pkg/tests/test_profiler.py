import csv
import io
import math

import numpy as np
import pytest

from gemst.model import build, calibrate, forward, init_weights, toy_config
from gemst.profiler import (CSV_COLUMNS, OpCounters, Profiler, ProfileReport, count_layer_sops, emit_report, energy,
                            report_csv, sop_upper_bound)
from gemst.tensor_core import GroupingPlan, TensorShape
from gemst.verify import saturated_score_sops


def test_energy_values():
    assert math.isclose(energy(1.29e9), 1.161)
    assert math.isclose(energy(3.15e9), 2.835)
    assert energy(0, 0) == 0
    assert math.isclose(energy(0, 1e9), 4.6)
    with pytest.raises(ValueError):
        energy(-1)


def test_count_layer_sops():
    assert count_layer_sops(0, 5) == 0
    assert count_layer_sops(10, 5) == 50


def test_bounds():
    s = TensorShape(4, 1, 28, 28, 96)
    n = 28 * 28
    assert sop_upper_bound("ssa_stbp", s) == 4 * n * n * 96
    assert sop_upper_bound("ssa_conversion", s) == 16 * n * n * 96
    assert sop_upper_bound("attention_score", s, 1) == 4 * n * n * 96
    grouped = sop_upper_bound("attention_score", s, 2, GroupingPlan(48, 4))
    assert sop_upper_bound("attention_score", s, 1) == 32 * grouped
    assert sop_upper_bound("attention_score", TensorShape(4, 1, 1, 1, 8), 2) == 4 * 8 // 2
    assert sop_upper_bound("sffn", TensorShape(4, 1, 1, 1, 8), 2, ratio=4) == 2 * 2 * 8 * 8 * 4
    with pytest.raises(ValueError):
        sop_upper_bound("softmax", s)


def test_saturated_measurement_meets_bound():
    m, b, f = saturated_score_sops(temporal_group=2, n=4, hw=8, c=16)
    assert m == b == f


def test_counter_merge_is_addition():
    a, b = OpCounters(), OpCounters()
    a.add_sops(3, 5, "conv")
    a.add_spikes("sn", 1, 4)
    b.add_sops(2, 2, "conv")
    b.add_macs(7)
    b.add_spikes("sn", 3, 4)
    a.merge(b)
    assert (a.sops, a.sop_bound, a.macs, a.muls) == (5, 7, 7, 7)
    assert a.ops["conv"] == [5, 7] and a.spikes["sn"] == [4, 8] and a.firing_rate == 0.5


def test_empty_report_header_only(tmp_path):
    path = tmp_path / "r.csv"
    emit_report(Profiler().report(), path)
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


def _toy_profile(kind="conv_b", threads=1, **kw):
    model = init_weights(build(toy_config(kind, **kw)), 1)
    x = np.random.default_rng(1).random((1, 2, 16, 16, 3))
    calibrate(model, x)
    prof = Profiler()
    forward(model, x, threads=threads, profiler=prof)
    return model, prof.report()


def test_toy_rows_and_bounds():
    model, rep = _toy_profile(depth=2)
    kinds = [r.module_kind for r in rep.rows]
    assert kinds == ["stem", "sconv", "conv_sffn", "sconv", "conv_sffn", "header"]
    for r in rep.rows:
        assert r.sops <= r.sop_upper_bound and 0 <= r.firing_rate <= 1
    rows = list(csv.DictReader(io.StringIO(report_csv(rep))))
    assert len(rows) == 6 and rows[1]["block_index"] == "0" and rows[3]["block_index"] == "1"
    assert rep.total_macs == rep.rows[0].macs + rep.rows[-1].macs
    assert math.isclose(rep.energy_mJ, energy(rep.total_sops, rep.total_macs))
    assert rep.energy_mJ_without_stem < rep.energy_mJ


def test_gw_rows():
    _, rep = _toy_profile("ssa_b_gw", heads=2, spatial_groups=2)
    assert [r.module_kind for r in rep.rows] == ["stem", "gw_ssa", "conv_sffn", "header"]


def test_per_sample_divides_counts():
    _, rep = _toy_profile()
    both = ProfileReport(rep.rows, n_samples=2).per_sample()
    assert both.rows[1].sops == rep.rows[1].sops // 2


def test_csv_identical_across_threads():
    a = report_csv(_toy_profile("ssa_b_gw", threads=1, heads=2, spatial_groups=2)[1])
    b = report_csv(_toy_profile("ssa_b_gw", threads=8, heads=2, spatial_groups=2)[1])
    assert a == b
