import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gemst.errors import ContractError, GroupingError, MalformedTrainError
from gemst.exp_coding import (BlendSchedule, TemporalGrouping, blend_weight, build_level_set, decode_spikes,
                              encode_spikes, exp_if_level_set, expg_fire, expg_forward, fire_amplitudes,
                              mixed_activation, qcfs_forward, quantize, quantize_array, quantize_counted,
                              quantize_many_counted, symmetric_level_set)
from gemst.oracle import oracle_level_enum, oracle_quantize_linear
from gemst.tensor_core import DenseTensor
from gemst.verify import contiguous_level_sets

ONE_GROUP = exp_if_level_set(4)
TWO_GROUPS = build_level_set(TemporalGrouping.contiguous(4, 2))


def test_single_group_levels():
    assert ONE_GROUP.levels.tolist() == [0, 1, 2, 4, 8] and ONE_GROUP.s_max == 8


def test_two_group_levels():
    assert TWO_GROUPS.levels.tolist() == [0, 1, 2, 4, 5, 6, 8, 9, 10] and TWO_GROUPS.s_max == 10


def test_single_step_levels():
    assert exp_if_level_set(1).levels.tolist() == [0, 1]


def test_invalid_groupings():
    with pytest.raises(GroupingError):
        TemporalGrouping(3, ((0, 1), (1, 2)))
    with pytest.raises(GroupingError):
        TemporalGrouping(3, ((0,), (2,)))
    with pytest.raises(GroupingError):
        TemporalGrouping.contiguous(4, 0)


def test_grouping_helpers():
    g = TemporalGrouping.from_group_ids([0, 1, 0, 1])
    assert g.groups == ((0, 2), (1, 3)) and g.group_ids().tolist() == [0, 1, 0, 1]
    assert TemporalGrouping.contiguous(5, 2).groups == ((0, 1), (2, 3), (4,))


def test_quantize_examples():
    assert quantize(2.4, ONE_GROUP) == 2
    assert quantize(-5, ONE_GROUP) == 0
    assert quantize(100, ONE_GROUP) == 4
    assert ONE_GROUP.boundaries.tolist() == [0.5, 1.5, 3, 6]


def test_quantize_tie_goes_up():
    assert quantize(1.5, ONE_GROUP) == 2


def test_quantize_comparisons_logarithmic():
    for x in np.linspace(-1, 12, 57):
        idx, comps = quantize_counted(x, TWO_GROUPS)
        assert comps <= math.ceil(math.log2(9))
        assert idx == oracle_quantize_linear(x, TWO_GROUPS.levels, 1.0)[0]


def test_quantize_scales_with_lambda():
    ls = ONE_GROUP.with_lambda(2.0)
    assert quantize(4.8, ls) == 2 and ls.boundaries.tolist() == [1, 3, 6, 12]


def test_encode_examples():
    assert encode_spikes(6.0, TWO_GROUPS).tolist() == [0, 1, 1, 0]
    assert encode_spikes(0.0, TWO_GROUPS).tolist() == [0, 0, 0, 0]
    assert encode_spikes(10.0, TWO_GROUPS).tolist() == [0, 1, 0, 1]


def test_encode_rejects_non_level():
    with pytest.raises(ContractError):
        encode_spikes(3.0, ONE_GROUP)


def test_decode_examples():
    assert decode_spikes([0, 0, 0, 0], TWO_GROUPS) == 0
    assert math.isclose(decode_spikes([0, 1, 1, 0], TWO_GROUPS, 1.0), 0.6)


def test_decode_rejects_malformed():
    with pytest.raises(MalformedTrainError):
        decode_spikes([0, 2, 0, 0], TWO_GROUPS)
    with pytest.raises(MalformedTrainError):
        decode_spikes([0, 1], TWO_GROUPS)
    with pytest.raises(MalformedTrainError):
        decode_spikes([0, -1, 0, 0], TWO_GROUPS)


def test_round_trip_every_level():
    for ls in contiguous_level_sets(6):
        for lv in ls.levels:
            train = encode_spikes(float(lv), ls)
            assert train @ ls.grouping.bases == lv
            assert decode_spikes(train, ls) == pytest.approx(lv / ls.s_max, rel=1e-15)


def test_expg_forward_examples():
    lam, T, v0 = 1.5, 4, 0.3
    ls = ONE_GROUP.with_lambda(lam)
    i_avg = (2.4 * lam - v0) / T
    assert math.isclose(expg_forward(i_avg, T, v0, ls), lam * 2 / 8)
    assert expg_forward(-1e9, T, v0, ls) == 0
    assert expg_forward(1e9, T, v0, ls) == lam


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30))
def test_expg_forward_monotone(xs):
    xs = np.sort(np.array(xs))
    assert np.all(np.diff(expg_forward(xs, 4, 0.0, TWO_GROUPS)) >= 0)


def test_qcfs_examples():
    assert qcfs_forward(0.4, 4, 0.5, 1.0) == 0.5
    assert qcfs_forward(-0.125, 4, 0.5, 1.0) == 0
    assert qcfs_forward(1.0, 4, 0.5, 1.0) == 1.0
    with pytest.raises(ValueError):
        qcfs_forward(0.1, 4, 0.0, 0.0)


def test_blend_weights():
    assert blend_weight(BlendSchedule(0, 10)) == (1, 0)
    w = blend_weight(BlendSchedule(10, 10))
    assert math.isclose(w[0], 0, abs_tol=1e-15) and math.isclose(w[1], 1)
    w = blend_weight(BlendSchedule(5, 10))
    assert math.isclose(w[0], 0.5) and math.isclose(w[1], 0.5)
    with pytest.raises(ValueError):
        BlendSchedule(0, 0)


def test_mixed_activation_endpoints():
    xs = np.linspace(-1, 3, 41)
    ls = TWO_GROUPS.with_lambda(2.0)
    end = mixed_activation(xs, 4, 0.0, ls, BlendSchedule(10, 10))
    assert np.allclose(end, expg_forward(xs, 4, 0.0, ls), atol=1e-15)
    # linear region at the start of the schedule: slope T
    assert math.isclose(mixed_activation(0.1, 4, 0.2, ls, BlendSchedule(0, 10)), 0.1 * 4 + 0.2)


def test_mixed_activation_rounded_branch():
    ls = ONE_GROUP
    assert mixed_activation(0.1, 4, 0.0, ls, BlendSchedule(0, 10), rounded=True) == 0.0


def test_symmetric_level_set():
    sym = symmetric_level_set(ONE_GROUP)
    assert sym.levels.tolist() == [-8, -4, -2, -1, 0, 1, 2, 4, 8]
    assert sym.levels[quantize(-2.4, sym)] == -2
    assert encode_spikes(-4.0, sym).tolist() == [0, 0, -1, 0]


def test_quantize_many_matches_scalar():
    x = np.linspace(-12, 12, 301)
    sym = symmetric_level_set(TWO_GROUPS)
    idx, comps = quantize_many_counted(x, sym)
    assert idx.tolist() == [quantize(v, sym) for v in x]
    assert comps.max() <= math.ceil(math.log2(sym.levels.size))


def test_quantize_array_folds_gain_and_offset():
    x = np.linspace(-3, 3, 97)
    got = quantize_array(x, TWO_GROUPS, gain=2.0, v0=0.5)
    assert got.tolist() == [quantize(2.0 * v + 0.5, TWO_GROUPS) for v in x]


def test_fire_amplitudes_time_and_constant_current():
    x = np.full((4, 3), 0.5)
    amps, idx = fire_amplitudes(x, TWO_GROUPS)
    amps1, idx1 = fire_amplitudes(x[:1], TWO_GROUPS)
    assert np.array_equal(amps, amps1) and np.array_equal(idx, idx1)
    assert TWO_GROUPS.levels[idx[0]] == 2 and amps[:, 0].tolist() == [0, 2, 0, 0]
    with pytest.raises(ContractError):
        fire_amplitudes(np.zeros((3, 2)), TWO_GROUPS)


def test_expg_fire_spike_tensor():
    x = DenseTensor(np.random.default_rng(0).uniform(-1, 3, (4, 1, 2, 2, 3)))
    s = expg_fire(x, TWO_GROUPS)
    assert s.check_amplitudes()
    assert np.all(np.count_nonzero(s.data, axis=0) <= TWO_GROUPS.n)


@given(st.integers(1, 6), st.integers(1, 6), st.floats(0.1, 4))
def test_levels_match_oracle_and_spike_bound(t, size, lam):
    g = TemporalGrouping.contiguous(t, min(size, t))
    ls = build_level_set(g, lam)
    assert np.array_equal(ls.levels, oracle_level_enum(g))
    assert np.all(np.count_nonzero(ls.trains, axis=1) <= g.n)
    assert np.array_equal(ls.trains @ g.bases, ls.levels)
