"""Operation counters, energy model and per-module reports.

Counting convention: one synaptic operation (SOP) is one accumulate triggered
by one nonzero presynaptic spike on one postsynaptic connection. A spike with
amplitude alpha**j still costs one SOP per connection (the shift is free), so
fewer spikes per window directly means fewer SOPs. Dense layers (stem and
classifier) are tallied as multiply-accumulates (MACs).
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

from .tensor_core import GroupingPlan, TensorShape

E_AC_PJ = 0.9
E_MAC_PJ = 4.6

CSV_COLUMNS = ("stage", "block_index", "module_kind", "sops", "sop_upper_bound", "macs",
               "firing_rate", "energy_mJ")


@dataclass
class OpCounters:
    """Integer tallies for one module. Merging is plain addition, so order never matters."""

    sops: int = 0
    sop_bound: int = 0
    macs: int = 0
    comparisons: int = 0
    muls: int = 0  # general (non-spike) multiplies
    spikes: dict = field(default_factory=dict)  # site -> [nonzero slots, total slots]
    ops: dict = field(default_factory=dict)  # op kind -> [sops, bound]

    def add_sops(self, measured: int, bound: int, op: Optional[str] = None):
        self.sops += int(measured)
        self.sop_bound += int(bound)
        if op is not None:
            cur = self.ops.setdefault(op, [0, 0])
            cur[0] += int(measured)
            cur[1] += int(bound)

    def add_macs(self, n: int):
        self.macs += int(n)
        self.muls += int(n)

    def add_spikes(self, site: str, nonzero: int, slots: int):
        cur = self.spikes.setdefault(site, [0, 0])
        cur[0] += int(nonzero)
        cur[1] += int(slots)

    def merge(self, other: "OpCounters"):
        self.sops += other.sops
        self.sop_bound += other.sop_bound
        self.macs += other.macs
        self.comparisons += other.comparisons
        self.muls += other.muls
        for site, (nz, slots) in other.spikes.items():
            self.add_spikes(site, nz, slots)
        for op, (m, b) in other.ops.items():
            cur = self.ops.setdefault(op, [0, 0])
            cur[0] += m
            cur[1] += b

    @property
    def firing_rate(self) -> float:
        """Mean over spiking sites of nonzero-slot fraction."""
        rates = [nz / slots for nz, slots in self.spikes.values() if slots]
        return sum(rates) / len(rates) if rates else 0.0


class Profiler:
    """Counters keyed by (stage, block_index, module_kind), in first-seen order."""

    def __init__(self):
        self.modules: dict = {}

    def module(self, stage, block_index: int, kind: str) -> OpCounters:
        key = (stage, block_index, kind)
        if key not in self.modules:
            self.modules[key] = OpCounters()
        return self.modules[key]

    def merge(self, other: "Profiler"):
        for key, c in other.modules.items():
            self.module(*key).merge(c)

    def report(self) -> "ProfileReport":
        rows = [ReportRow(stage, idx, kind, c.sops, c.sop_bound, c.macs, c.firing_rate,
                          energy(c.sops, c.macs))
                for (stage, idx, kind), c in self.modules.items()]
        return ProfileReport(rows)


@dataclass(frozen=True)
class ReportRow:
    stage: object
    block_index: int
    module_kind: str
    sops: int
    sop_upper_bound: int
    macs: int
    firing_rate: float
    energy_mJ: float


@dataclass
class ProfileReport:
    rows: list
    n_samples: int = 1

    @property
    def total_sops(self) -> int:
        return sum(r.sops for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def energy_mJ(self) -> float:
        return energy(self.total_sops, self.total_macs)

    @property
    def energy_mJ_without_stem(self) -> float:
        macs = sum(r.macs for r in self.rows if r.module_kind != "stem")
        return energy(self.total_sops, macs)

    def per_sample(self) -> "ProfileReport":
        if self.n_samples == 1:
            return self
        k = self.n_samples
        rows = [ReportRow(r.stage, r.block_index, r.module_kind, r.sops // k, r.sop_upper_bound // k,
                          r.macs // k, r.firing_rate, r.energy_mJ / k) for r in self.rows]
        return ProfileReport(rows)

    def summary(self) -> str:
        lines = [f"{'stage':>6} {'blk':>4} {'module':<12} {'SOPs':>14} {'bound':>14} "
                 f"{'MACs':>12} {'rate':>7} {'mJ':>10}"]
        for r in self.rows:
            lines.append(f"{str(r.stage):>6} {r.block_index:>4} {r.module_kind:<12} {r.sops:>14,} "
                         f"{r.sop_upper_bound:>14,} {r.macs:>12,} {r.firing_rate:>7.4f} "
                         f"{r.energy_mJ:>10.6f}")
        lines.append(f"total SOPs {self.total_sops:,}  MACs {self.total_macs:,}  "
                     f"energy {self.energy_mJ:.6f} mJ  (without stem {self.energy_mJ_without_stem:.6f} mJ)")
        return "\n".join(lines)


def count_layer_sops(spike_count: int, fan_out: int) -> int:
    if spike_count < 0 or fan_out < 0:
        raise ValueError("spike_count and fan_out must be nonnegative")
    return int(spike_count) * int(fan_out)


def energy(sops, macs=0) -> float:
    """Energy in millijoules at 0.9 pJ per SOP and 4.6 pJ per MAC."""
    if sops < 0 or macs < 0:
        raise ValueError("operation counts must be nonnegative")
    return (E_AC_PJ * sops + E_MAC_PJ * macs) * 1e-9


def sop_upper_bound(module_kind: str, shape: TensorShape, group_size: int = 1,
                    plan: Optional[GroupingPlan] = None, ratio: int = 4) -> int:
    """Worst-case SOPs with every neuron firing its maximum pattern.

    ``group_size`` is the number of bases per temporal group, so a neuron fires
    at most ``ceil(T / group_size)`` times. Kinds:

    ``attention_score``  max_spikes * (N^2 / |G_S|) * C   (Q spikes against K)
    ``attention_value``  same count for the spiking scores against V
    ``ssa_stbp``         T * N^2 * C
    ``ssa_conversion``   T^2 * N^2 * C
    ``sffn``             2 * max_spikes * N * C^2 * R     (expand and project)

    All figures are multiplied by the batch extent.
    """
    T, N, C, B = shape.t, shape.n_tokens, shape.c, shape.b
    max_spikes = -(-T // group_size)
    groups = plan.n_groups if plan is not None else 1
    if module_kind in ("attention_score", "attention_value"):
        if N % groups:
            raise ValueError(f"{groups} groups do not divide {N} tokens")
        return B * max_spikes * (N // groups) * N * C
    if module_kind == "ssa_stbp":
        return B * T * N * N * C
    if module_kind == "ssa_conversion":
        return B * T * T * N * N * C
    if module_kind == "sffn":
        return B * 2 * max_spikes * N * C * C * ratio
    raise ValueError(f"unknown module kind {module_kind!r}")


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def report_csv(report: ProfileReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def atomic_write(path, data):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(report: ProfileReport, path):
    atomic_write(path, report_csv(report))
