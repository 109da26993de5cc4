"""Leaky / non-leaky integrate-and-fire dynamics with soft or hard reset.

All functions broadcast over numpy arrays, so one call can simulate many
independent neurons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class NeuronParams:
    mu: float = 1.0
    theta_pre: float = 1.0
    theta_post: Optional[float] = None
    v0: Optional[float] = None
    reset: str = "soft"

    def __post_init__(self):
        if not self.theta_pre > 0:
            raise ValueError(f"theta_pre must be positive, got {self.theta_pre}")
        if not 0 < self.mu <= 1:
            raise ValueError(f"mu must lie in (0, 1], got {self.mu}")
        if self.reset not in ("soft", "hard"):
            raise ValueError(f"reset must be 'soft' or 'hard', got {self.reset!r}")
        if self.theta_post is None:
            object.__setattr__(self, "theta_post", self.theta_pre)
        if self.v0 is None:
            # half-threshold start, the usual choice for conversion
            object.__setattr__(self, "v0", self.theta_pre / 2)


@dataclass(frozen=True)
class NeuronTrace:
    m: np.ndarray
    v: np.ndarray
    s: np.ndarray
    v0: np.ndarray


@dataclass(frozen=True)
class RateSummary:
    f_avg: np.ndarray
    i_avg: np.ndarray
    v_residual: np.ndarray


def step(params: NeuronParams, v_prev, input_current):
    v_prev = np.asarray(v_prev, dtype=np.float64)
    i = np.asarray(input_current, dtype=np.float64)
    if not (np.all(np.isfinite(v_prev)) and np.all(np.isfinite(i))):
        raise FloatingPointError("non-finite membrane potential or input current")
    m = params.mu * v_prev + i
    s = (m >= params.theta_pre).astype(np.float64)
    if params.reset == "soft":
        v = m - s * params.theta_pre
    else:
        v = m * (1.0 - s)
    if m.ndim == 0:
        return float(m), int(s), float(v)
    return m, s, v


def run_sequence(params: NeuronParams, inputs) -> NeuronTrace:
    """Integrate ``inputs`` (time on axis 0) from ``params.v0``."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 0 or x.shape[0] == 0:
        raise ValueError("run_sequence needs at least one time-step")
    v = np.full(x.shape[1:], params.v0, dtype=np.float64)
    v0 = v.copy()
    ms, vs, ss = [], [], []
    for t in range(x.shape[0]):
        m, s, v = step(params, v, x[t])
        ms.append(m)
        ss.append(s)
        vs.append(v)
    return NeuronTrace(np.array(ms), np.array(vs), np.array(ss), v0)


def rate_summary(trace: NeuronTrace, params: NeuronParams, inputs) -> RateSummary:
    if params.mu != 1.0 or params.reset != "soft":
        raise ContractError("rate identity only holds for the IF neuron (mu=1) with soft reset")
    if params.theta_post != params.theta_pre:
        raise ContractError("rate identity needs theta_post == theta_pre")
    x = np.asarray(inputs, dtype=np.float64)
    T = x.shape[0]
    f_avg = trace.s.sum(axis=0) * params.theta_post / T
    i_avg = x.mean(axis=0)
    v_residual = (trace.v[-1] - trace.v0) / T
    return RateSummary(f_avg, i_avg, v_residual)
