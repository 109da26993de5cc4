"""The oracles are only useful if they are right on cases small enough to do by hand."""

import numpy as np

from gemst.exp_coding import TemporalGrouping, build_level_set
from gemst.oracle import (OracleSite, Trace, oracle_attention_naive, oracle_boundaries, oracle_conv_naive,
                          oracle_level_decompositions, oracle_level_enum, oracle_quantize_linear, oracle_sn,
                          oracle_sop_count, oracle_symmetric, oracle_token_groups)


def test_levels_by_hand():
    g = TemporalGrouping.contiguous(4, 2)
    assert oracle_level_enum(g).tolist() == [0, 1, 2, 4, 5, 6, 8, 9, 10]
    assert oracle_level_decompositions(g)[6.0] == (1, 2)
    assert oracle_symmetric([0, 1, 2]).tolist() == [-2, -1, 0, 1, 2]
    assert oracle_boundaries([0, 1, 2, 4, 8], 2.0) == [1, 3, 6, 12]


def test_linear_quantizer_by_hand():
    levels = [0, 1, 2, 4, 8]
    assert oracle_quantize_linear(2.4, levels)[0] == 2
    assert oracle_quantize_linear(1.5, levels)[0] == 2
    assert oracle_quantize_linear(-3, levels)[0] == 0
    assert oracle_quantize_linear(99, levels)[0] == 4


def test_sn_emits_level_train():
    site = OracleSite.from_level_set(build_level_set(TemporalGrouping.contiguous(4, 2)))
    out, count = oracle_sn(np.full((4, 1), 1.5), site)  # potential 6 -> spikes at bases 2 and 4
    assert count == 2 and np.flatnonzero(out[:, 0]).tolist() == [1, 2]
    assert np.isclose(out.mean(), 6 / 10)


def test_conv_naive_by_hand():
    x = np.zeros((1, 1, 3, 3, 1))
    x[0, 0, 1, 1, 0] = 2.0
    w = np.arange(9, dtype=float).reshape(3, 3, 1, 1)
    trace = Trace()
    out = oracle_conv_naive(x, w, None, "full", 1, 1, trace)
    # the single spike reaches every output through the tap mirrored to it
    assert out[0, 0, :, :, 0].tolist() == [[16, 14, 12], [10, 8, 6], [4, 2, 0]]
    assert trace.counts["conv"] == 9 and oracle_sop_count(trace) == 9


def test_attention_naive_by_hand():
    q = np.array([1.0, 0.0]).reshape(1, 1, 2, 1)
    k = np.array([1.0, 2.0]).reshape(1, 1, 2, 1)
    v = np.array([3.0, 5.0]).reshape(1, 1, 2, 1)
    out = oracle_attention_naive(q, k, v, 1, 1.0)
    assert out.ravel().tolist() == [13.0, 0.0]


def test_token_groups():
    g = oracle_token_groups(4, 4, 2, "strided")
    assert sorted(g[0]) == [(0, 0), (0, 2), (2, 0), (2, 2)]
    w = oracle_token_groups(4, 4, 2, "window")
    assert sorted(w[0]) == [(0, 0), (0, 1), (1, 0), (1, 1)]
