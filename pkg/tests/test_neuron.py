import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gemst.errors import ContractError
from gemst.neuron import NeuronParams, rate_summary, run_sequence, step

IF = NeuronParams(mu=1.0, theta_pre=1.0, v0=0.0)


def test_step_subthreshold():
    assert step(IF, 0.0, 0.6) == (0.6, 0, 0.6)


def test_step_fires_with_soft_reset():
    m, s, v = step(IF, 0.6, 0.6)
    assert (m, s) == (1.2, 1) and math.isclose(v, 0.2)


def test_step_leak_only():
    assert step(NeuronParams(mu=0.5, theta_pre=1.0), 1.0, 0.0) == (0.5, 0, 0.5)


def test_step_threshold_tie_fires():
    assert step(IF, 0.0, 1.0)[1] == 1


def test_step_hard_reset():
    assert step(NeuronParams(theta_pre=1.0, reset="hard"), 0.6, 0.6)[2] == 0.0


def test_step_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        step(IF, 0.0, float("nan"))


def test_params_validation_and_defaults():
    with pytest.raises(ValueError):
        NeuronParams(theta_pre=0.0)
    with pytest.raises(ValueError):
        NeuronParams(mu=1.5)
    p = NeuronParams(theta_pre=2.0)
    assert p.theta_post == 2.0 and p.v0 == 1.0


def test_run_sequence_hand_simulation():
    tr = run_sequence(IF, [0.6, 0.6])
    assert tr.s.tolist() == [0, 1] and math.isclose(tr.v[-1], 0.2)


def test_run_sequence_zero_and_saturated():
    tr = run_sequence(IF, np.zeros(5))
    assert tr.s.sum() == 0 and tr.v[-1] == 0
    assert run_sequence(IF, np.full(4, 1.5)).s.tolist() == [1, 1, 1, 1]


def test_run_sequence_empty_raises():
    with pytest.raises(ValueError):
        run_sequence(IF, [])


def test_rate_summary_example():
    x = [0.6, 0.6]
    r = rate_summary(run_sequence(IF, x), IF, x)
    assert math.isclose(r.f_avg, 0.5) and math.isclose(r.i_avg, 0.6) and math.isclose(r.v_residual, 0.1)


@pytest.mark.parametrize("params", [NeuronParams(reset="hard"), NeuronParams(mu=0.9)])
def test_rate_summary_contract(params):
    x = np.ones(3)
    with pytest.raises(ContractError):
        rate_summary(run_sequence(params, x), params, x)


@given(st.lists(st.floats(-2, 3), min_size=1, max_size=16), st.floats(0.1, 2.0))
def test_rate_identity_and_spike_invariant(xs, theta):
    p = NeuronParams(theta_pre=theta)
    tr = run_sequence(p, xs)
    r = rate_summary(tr, p, xs)
    assert abs(r.f_avg - (r.i_avg - r.v_residual)) < 1e-9
    assert np.array_equal(tr.s == 1, tr.m >= theta)
    emitted = tr.s.sum() * theta
    assert math.isclose(emitted, sum(xs) + tr.v0 - tr.v[-1], abs_tol=1e-9)
