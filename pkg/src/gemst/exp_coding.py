"""Grouped exponential spike coding (ExpG-IF).

A neuron firing at step t (0-based) emits amplitude ``alpha**t``. The T bases
are partitioned into temporal groups and a neuron may pick at most one base
per group, so the reachable per-window totals (the *levels*) are all sums with
one optional pick per group, and a neuron never fires more than ``n`` times
for ``n`` groups.

At inference the neuron sums its input current over the window, locates the
membrane potential between the midpoint thresholds with a binary search and
replays the precomputed spike pattern of that level. Since the replayed train
decodes to exactly the quantized level, the spiking output equals the
quantized activation used when training the source network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, GroupingError, MalformedTrainError
from .tensor_core import DenseTensor, SpikeTensor


@dataclass(frozen=True)
class TemporalGrouping:
    """Partition of base exponents ``0..t-1`` into groups (each also holds 0)."""

    t: int
    groups: tuple
    alpha: float = 2.0

    def __post_init__(self):
        groups = tuple(tuple(int(e) for e in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if self.t < 1:
            raise GroupingError(f"t must be >= 1, got {self.t}")
        if not groups or any(len(g) == 0 for g in groups):
            raise GroupingError("groups must be non-empty")
        flat = [e for g in groups for e in g]
        if len(flat) != len(set(flat)):
            raise GroupingError(f"groups overlap: {groups}")
        if sorted(flat) != list(range(self.t)):
            raise GroupingError(f"groups must cover exponents 0..{self.t - 1} exactly: {groups}")
        if not self.alpha > 0:
            raise GroupingError(f"alpha must be positive, got {self.alpha}")

    @classmethod
    def contiguous(cls, t: int, group_size: int, alpha: float = 2.0) -> "TemporalGrouping":
        """Runs of ``group_size`` consecutive bases; the last run may be shorter."""
        if group_size < 1:
            raise GroupingError(f"group_size must be >= 1, got {group_size}")
        groups = tuple(tuple(range(s, min(s + group_size, t))) for s in range(0, t, group_size))
        return cls(t, groups, alpha)

    @classmethod
    def exp_if(cls, t: int, alpha: float = 2.0) -> "TemporalGrouping":
        """Single group: the Exp-IF special case, at most one spike per window."""
        return cls(t, (tuple(range(t)),), alpha)

    @classmethod
    def from_group_ids(cls, ids: Sequence[int], alpha: float = 2.0) -> "TemporalGrouping":
        ids = [int(i) for i in ids]
        order = sorted(set(ids))
        return cls(len(ids), tuple(tuple(e for e, g in enumerate(ids) if g == k) for k in order), alpha)

    @property
    def n(self) -> int:
        return len(self.groups)

    @property
    def bases(self) -> np.ndarray:
        return self.alpha ** np.arange(self.t, dtype=np.float64)

    def group_ids(self) -> np.ndarray:
        ids = np.empty(self.t, dtype=np.int64)
        for k, g in enumerate(self.groups):
            ids[list(g)] = k
        return ids


@dataclass(frozen=True, eq=False)
class ExpLevelSet:
    """Quantization levels of one spiking site together with their spike patterns.

    ``trains[i]`` is the length-T pattern (entries in {-1, 0, 1}) whose
    base-weighted sum is ``levels[i]``. ``boundaries`` are the firing
    thresholds on the membrane potential: ``lam`` times the level midpoints.
    """

    grouping: TemporalGrouping
    levels: np.ndarray
    trains: np.ndarray
    lam: float = 1.0
    symmetric: bool = False
    boundaries: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        trains = np.asarray(self.trains, dtype=np.int8)
        if levels.ndim != 1 or np.any(np.diff(levels) <= 0):
            raise ContractError("levels must be strictly increasing")
        if trains.shape != (levels.size, self.grouping.t):
            raise ContractError(f"trains shape {trains.shape} does not match levels/T")
        if not self.lam > 0:
            raise ContractError(f"lambda must be positive, got {self.lam}")
        for name, v in (("levels", levels), ("trains", trains)):
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        b = self.lam * (levels[:-1] + levels[1:]) / 2
        b.flags.writeable = False
        object.__setattr__(self, "boundaries", b)

    @property
    def t(self) -> int:
        return self.grouping.t

    @property
    def alpha(self) -> float:
        return self.grouping.alpha

    @property
    def n(self) -> int:
        return self.grouping.n

    @property
    def s_max(self) -> float:
        return float(self.levels[-1])

    @property
    def post_amplitudes(self) -> np.ndarray:
        return self.lam * self.levels

    @property
    def spike_scale(self) -> float:
        """Value carried by a unit-amplitude spike so the window mean equals the rate."""
        return self.lam * self.t / self.s_max

    def with_lambda(self, lam: float) -> "ExpLevelSet":
        return ExpLevelSet(self.grouping, self.levels, self.trains, float(lam), self.symmetric)


def build_level_set(grouping: TemporalGrouping, lam: float = 1.0) -> ExpLevelSet:
    """Levels reachable with at most one base per group, grown group by group.

    Each level keeps the decomposition with the fewest spikes (ties broken by
    the lexicographically smallest exponent tuple) so replays are deterministic
    even when ``alpha`` makes several decompositions coincide.
    """
    alpha = grouping.alpha
    reach = {(): 0.0}
    for g in grouping.groups:
        grown = {}
        for picks in reach:
            grown[picks] = None
            for e in g:
                grown[tuple(sorted(picks + (e,)))] = None
        reach = grown
    best = {}
    for picks in reach:
        value = math.fsum(alpha ** e for e in picks)
        cur = best.get(value)
        if cur is None or (len(picks), picks) < (len(cur), cur):
            best[value] = picks
    levels = sorted(best)
    trains = np.zeros((len(levels), grouping.t), dtype=np.int8)
    for i, v in enumerate(levels):
        trains[i, list(best[v])] = 1
    return ExpLevelSet(grouping, np.array(levels), trains, lam)


def symmetric_level_set(ls: ExpLevelSet) -> ExpLevelSet:
    """Mirror the levels around zero; negative levels replay negated trains."""
    if ls.symmetric:
        return ls
    levels = np.concatenate([-ls.levels[:0:-1], ls.levels])
    trains = np.concatenate([-ls.trains[:0:-1], ls.trains])
    return ExpLevelSet(ls.grouping, levels, trains, ls.lam, symmetric=True)


def exp_if_level_set(t: int, alpha: float = 2.0, lam: float = 1.0) -> ExpLevelSet:
    return build_level_set(TemporalGrouping.exp_if(t, alpha), lam)


def _search(boundaries: np.ndarray, x: float):
    """Number of boundaries <= x and the comparisons spent finding it."""
    lo, hi, comparisons = 0, len(boundaries), 0
    while lo < hi:
        mid = (lo + hi) // 2
        comparisons += 1
        if x >= boundaries[mid]:
            lo = mid + 1
        else:
            hi = mid
    return lo, comparisons


def quantize_counted(x: float, ls: ExpLevelSet):
    """Level index of membrane potential ``x`` and the comparison count used.

    Ties on a boundary go to the upper level; values below the first boundary
    clip to index 0 and values above the last clip to the top level.
    """
    return _search(ls.boundaries, float(x))


def quantize(x: float, ls: ExpLevelSet) -> int:
    return quantize_counted(x, ls)[0]


def quantize_many_counted(x, ls: ExpLevelSet):
    """Lockstep binary search over an array of potentials.

    Same tie rule as :func:`quantize`; returns level indices and the number
    of comparisons each element needed.
    """
    x = np.asarray(x, dtype=np.float64)
    b = ls.boundaries
    lo = np.zeros(x.shape, dtype=np.int64)
    hi = np.full(x.shape, b.size, dtype=np.int64)
    comparisons = np.zeros(x.shape, dtype=np.int64)
    active = lo < hi
    while active.any():
        mid = (lo + hi) // 2
        up = x >= b[np.minimum(mid, b.size - 1)]
        comparisons += active
        lo = np.where(active & up, mid + 1, lo)
        hi = np.where(active & ~up, mid, hi)
        active = lo < hi
    return lo, comparisons


def quantize_array(x, ls: ExpLevelSet, gain: float = 1.0, v0: float = 0.0) -> np.ndarray:
    """Vectorised :func:`quantize` of ``gain * x + v0``.

    ``gain`` and ``v0`` are folded into the thresholds, so the activations
    themselves are only compared.
    """
    thresholds = (ls.boundaries - v0) / gain
    return np.searchsorted(thresholds, np.asarray(x, dtype=np.float64), side="right")


def encode_spikes(level_value: float, ls: ExpLevelSet) -> np.ndarray:
    """Binary (signed for symmetric sets) train whose weighted sum is ``level_value``."""
    i = int(np.searchsorted(ls.levels, level_value))
    if i >= ls.levels.size or ls.levels[i] != level_value:
        raise ContractError(f"{level_value!r} is not a level of this set")
    return ls.trains[i].copy()


def decode_spikes(train, ls: ExpLevelSet, lam: Optional[float] = None) -> float:
    s = np.asarray(train)
    if s.shape != (ls.t,):
        raise MalformedTrainError(f"train must have length {ls.t}, got shape {s.shape}")
    allowed = (-1, 0, 1) if ls.symmetric else (0, 1)
    if not np.isin(s, allowed).all():
        raise MalformedTrainError(f"train entries must lie in {allowed}: {s}")
    lam = ls.lam if lam is None else lam
    return lam * math.fsum(ls.grouping.bases * s) / ls.s_max


def expg_forward(i_avg, T: int, v0: float, ls: ExpLevelSet):
    """Rate predicted for mean input ``i_avg``: lam * level / s_max, clipped to the level range."""
    potential = np.asarray(i_avg, dtype=np.float64) * T + v0
    idx = np.searchsorted(ls.boundaries, potential, side="right")
    out = ls.lam * ls.levels[idx] / ls.s_max
    return float(out) if out.ndim == 0 else out


def qcfs_forward(i_avg, T: int, v0: float, theta: float):
    """Uniform quantization-clip-floor-shift rate (baseline)."""
    if not theta > 0 or T < 1:
        raise ValueError("qcfs_forward needs theta > 0 and T >= 1")
    q = np.clip(np.floor((np.asarray(i_avg, dtype=np.float64) * T + v0) / theta), 0, T)
    out = theta / T * q
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BlendSchedule:
    e_t: float
    e_T: float

    def __post_init__(self):
        if self.e_T <= 0:
            raise ValueError(f"total epochs must be >= 1, got {self.e_T}")
        if not 0 <= self.e_t <= self.e_T:
            raise ValueError(f"epoch {self.e_t} outside [0, {self.e_T}]")


def blend_weight(sched: BlendSchedule):
    """(clip-ReLU weight, quantized weight) on a half-cosine ramp."""
    c = math.cos(math.pi * sched.e_t / sched.e_T)
    w_relu = (1 + c) / 2
    return w_relu, 1 - w_relu


def mixed_activation(i_avg, T: int, v0: float, ls: ExpLevelSet, sched: BlendSchedule,
                     rounded: bool = False):
    """Cosine blend between a clipped linear activation and :func:`expg_forward`.

    ``rounded=True`` rounds inside the clipped branch as well (the literal
    reading of the blend formula); the default keeps it continuous.
    """
    w_relu, w_quant = blend_weight(sched)
    u = (np.asarray(i_avg, dtype=np.float64) * T + v0) / ls.lam
    if rounded:
        u = np.floor(u + 0.5)
    relu = ls.lam * np.clip(u, 0.0, 1.0)
    if w_relu == 0:
        out = np.asarray(expg_forward(i_avg, T, v0, ls), dtype=np.float64)
    else:
        out = w_relu * relu + w_quant * np.asarray(expg_forward(i_avg, T, v0, ls))
    return float(out) if out.ndim == 0 else out


def fire_amplitudes(data, ls: ExpLevelSet, gain: float = 1.0, v0: float = 0.0):
    """Spike amplitudes (time on axis 0) and level indices for currents ``data``.

    ``data`` has time on axis 0 with either ``ls.t`` steps or a single step
    standing for a constant current presented at every step.
    """
    data = np.asarray(data, dtype=np.float64)
    T = ls.t
    if data.shape[0] == T:
        potential = data.sum(axis=0)
    elif data.shape[0] == 1:
        potential = data[0] * T
    else:
        raise ContractError(f"input has {data.shape[0]} steps, level set expects {T}")
    idx = quantize_array(potential, ls, gain, v0)
    amps = np.moveaxis(ls.trains[idx] * ls.grouping.bases, -1, 0)
    return amps, idx


def expg_fire(x: DenseTensor, ls: ExpLevelSet, gain: float = 1.0, v0: float = 0.0) -> SpikeTensor:
    """Spiking layer: integrate ``x`` over the window and replay the level's train.

    ``gain`` rescales the potential by moving the thresholds instead of
    touching the activations.
    """
    amps, _ = fire_amplitudes(x.data, ls, gain, v0)
    return SpikeTensor(amps, ls.spike_scale, ls.alpha, ls.n)
