"""Per-forward-pass state: which counters to charge and how spiking sites behave."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError
from .exp_coding import fire_amplitudes
from .profiler import OpCounters, Profiler
from .tensor_core import SpikeTensor

CALIBRATION_PERCENTILE = 99.5


@dataclass
class Runtime:
    """Options threaded through block forwards.

    ``calibrate`` rewrites each site's lambda from the potentials it sees
    (percentile of |potential| mapped to the top level) before firing.
    ``check_spikes`` asserts the amplitude invariant on every spike tensor.
    """

    counters: Optional[OpCounters] = None
    calibrate: bool = False
    check_spikes: bool = False
    v0: float = 0.0
    profiler: Optional[Profiler] = None
    stage: object = None
    block_index: int = -1

    def enter(self, kind: str):
        """Charge subsequent operations to module ``kind`` of the current block."""
        if self.profiler is not None:
            self.counters = self.profiler.module(self.stage, self.block_index, kind)

    def fire(self, data: np.ndarray, sites: dict, name: str, gain: float = 1.0) -> SpikeTensor:
        """Run spiking site ``sites[name]`` on currents ``data`` (time on axis 0)."""
        ls = sites[name]
        if self.calibrate:
            pot = data.sum(axis=0) if data.shape[0] == ls.t else data[0] * ls.t
            mag = np.abs(pot * gain) if ls.symmetric else pot * gain
            mag = mag[mag > 0]
            if mag.size:
                lam = float(np.percentile(mag, CALIBRATION_PERCENTILE)) / ls.s_max
                if lam > 0 and math.isfinite(lam):
                    ls = ls.with_lambda(lam)
                    sites[name] = ls
        amps, _ = fire_amplitudes(data, ls, gain, self.v0)
        out = SpikeTensor(amps, ls.spike_scale, ls.alpha, ls.n)
        if self.check_spikes and not out.check_amplitudes():
            raise ContractError(f"site {name}: spike amplitudes outside the level set alphabet")
        if self.counters is not None:
            neurons = amps[0].size
            self.counters.add_spikes(name, np.count_nonzero(amps), amps.size)
            self.counters.comparisons += neurons * math.ceil(math.log2(ls.levels.size))
        return out
