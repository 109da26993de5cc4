"""Per-time-step 2-D convolution kernels on (T, B, H, W, C) tensors.

Spike operands dispatch to an accumulate-only path: the layer's spike scale is
folded into the weights once, and each spike amplitude is a power of two, so
every partial product is an exact shifted copy of a weight. Dense operands
(only the stem) are tallied as MACs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError
from .profiler import OpCounters
from .tensor_core import DenseTensor, SpikeTensor

KINDS = ("pointwise", "depthwise", "full")


@dataclass(eq=False)
class ConvParams:
    """Weights are stored (k, k, Cin, Cout) for full, (k, k, C) for depthwise, (Cin, Cout) for pointwise."""

    kind: str
    kernel: int
    stride: int
    in_channels: int
    out_channels: int
    weight: np.ndarray
    bias: Optional[np.ndarray] = None
    padding: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown conv kind {self.kind!r}")
        if self.kind == "depthwise" and self.in_channels != self.out_channels:
            raise ShapeError("depthwise conv needs in_channels == out_channels")
        if self.kind == "pointwise" and (self.kernel != 1 or self.stride != 1):
            raise ShapeError("pointwise conv is 1x1, stride 1")
        if self.padding is None:
            self.padding = self.kernel // 2
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.shape != self.weight_shape:
            raise ShapeError(f"{self.kind} weight shape {self.weight.shape}, expected {self.weight_shape}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.out_channels,):
                raise ShapeError(f"bias shape {self.bias.shape}, expected ({self.out_channels},)")

    @property
    def weight_shape(self) -> tuple:
        k, ci, co = self.kernel, self.in_channels, self.out_channels
        if self.kind == "pointwise":
            return (ci, co)
        if self.kind == "depthwise":
            return (k, k, ci)
        return (k, k, ci, co)

    @property
    def n_params(self) -> int:
        return self.weight.size + (0 if self.bias is None else self.bias.size)

    def out_size(self, size: int) -> int:
        return (size + 2 * self.padding - self.kernel) // self.stride + 1

    @property
    def fan_out_per_tap(self) -> int:
        """Output channels reached from one input channel through one kernel tap."""
        return 1 if self.kind == "depthwise" else self.out_channels


def _tap_counts(size: int, kernel: int, stride: int, padding: int) -> np.ndarray:
    """How many output positions along one axis read each input position."""
    out = (size + 2 * padding - kernel) // stride + 1
    counts = np.zeros(size, dtype=np.int64)
    for o in range(out):
        lo = o * stride - padding
        counts[max(lo, 0):min(lo + kernel, size)] += 1
    return counts


def _conv_nhwc(x: np.ndarray, p: ConvParams, w: np.ndarray) -> np.ndarray:
    n, h, wd, c = x.shape
    if p.kind == "pointwise":
        return (x.reshape(-1, c) @ w).reshape(n, h, wd, p.out_channels)
    k, s, pad = p.kernel, p.stride, p.padding
    ho, wo = p.out_size(h), p.out_size(wd)
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {h}x{wd} too small for kernel {k}")
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    out = np.zeros((n, ho, wo, p.out_channels))
    for i in range(k):
        for j in range(k):
            patch = xp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :]
            if p.kind == "depthwise":
                out += patch * w[i, j]
            else:
                out += (np.ascontiguousarray(patch).reshape(-1, c) @ w[i, j]).reshape(n, ho, wo, -1)
    return out


def conv2d(x, params: ConvParams, counters: Optional[OpCounters] = None,
           weight_gain: float = 1.0) -> DenseTensor:
    """Cross-correlate every time-step of ``x`` with ``params``.

    ``weight_gain`` is a constant folded into weights and bias (used to keep
    a downstream threshold scaling out of the activation path).
    """
    data = x.data
    t, b, h, wd, c = data.shape
    if c != params.in_channels:
        raise ShapeError(f"conv expects {params.in_channels} channels, got {c}")
    spiking = isinstance(x, SpikeTensor)
    gain = weight_gain * (x.scale if spiking else 1.0)
    w = params.weight * gain if gain != 1.0 else params.weight
    out = _conv_nhwc(data.reshape(t * b, h, wd, c), params, w)
    if params.bias is not None:
        out += params.bias * weight_gain
    out = out.reshape(t, b, out.shape[1], out.shape[2], params.out_channels)
    if counters is not None:
        if spiking:
            ch = _tap_counts(h, params.kernel, params.stride, params.padding)
            cw = _tap_counts(wd, params.kernel, params.stride, params.padding)
            nz = np.count_nonzero(data, axis=(0, 1, 4))
            measured = int(ch @ nz @ cw) * params.fan_out_per_tap
            bound = x.max_spikes * b * int(ch.sum()) * int(cw.sum()) * c * params.fan_out_per_tap
            counters.add_sops(measured, bound, "conv")
        else:
            taps = params.kernel * params.kernel * (1 if params.kind == "depthwise" else c)
            counters.add_macs(t * b * out.shape[2] * out.shape[3] * params.out_channels * taps)
    return DenseTensor(out)
