"""Dense 5-D tensors laid out (T, B, H, W, C) and the spatial grouping transforms.

Tokens are the (h, w) positions. Two grouping modes partition them into n*n
subsets:

* ``strided``: group (i, j) takes rows i, i+n, ... and columns j, j+n, ...,
  i.e. a dilated, approximately global view of the map.
* ``window``: group (i, j) takes the contiguous block of rows
  [i*h/n, (i+1)*h/n) and columns [j*w/n, (j+1)*w/n).

Groups are always emitted in lexicographic (i, j) order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ShapeError

GLOBAL = "strided"
WINDOW = "window"


@dataclass(frozen=True)
class TensorShape:
    t: int
    b: int
    h: int
    w: int
    c: int

    def __post_init__(self):
        for name in ("t", "b", "h", "w"):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be >= 1, got {getattr(self, name)}")
        # c == 0 is a legal degenerate extent after a channel split
        if self.c < 0:
            raise ShapeError(f"c must be >= 0, got {self.c}")

    @property
    def n_tokens(self) -> int:
        return self.h * self.w

    def as_tuple(self) -> tuple:
        return (self.t, self.b, self.h, self.w, self.c)

    @property
    def size(self) -> int:
        return self.t * self.b * self.h * self.w * self.c


def _frozen(a: np.ndarray) -> np.ndarray:
    v = np.asarray(a).view()
    v.flags.writeable = False
    return v


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Real-valued activations. The backing array is made read-only."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 5:
            raise ShapeError(f"expected a 5-D (T, B, H, W, C) array, got ndim={a.ndim}")
        object.__setattr__(self, "data", _frozen(a))
        TensorShape(*a.shape)

    @property
    def shape(self) -> TensorShape:
        return TensorShape(*self.data.shape)

    def with_data(self, data) -> "DenseTensor":
        return DenseTensor(data)

    @classmethod
    def zeros(cls, shape: TensorShape) -> "DenseTensor":
        return cls(np.zeros(shape.as_tuple()))


@dataclass(frozen=True, eq=False)
class SpikeTensor:
    """Per-step spike amplitudes with a layer-wide value scale.

    ``amplitudes`` holds 0 or a signed base power ``±alpha**j`` per element; the
    represented value is ``amplitudes * scale``. Keeping the scale outside the
    array means consumers only ever accumulate shifted copies of their other
    operand and fold ``scale`` into weights or thresholds.
    """

    amplitudes: np.ndarray
    scale: float = 1.0
    alpha: float = 2.0
    max_spikes: int = 1

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.float64)
        if a.ndim != 5:
            raise ShapeError(f"expected a 5-D (T, B, H, W, C) array, got ndim={a.ndim}")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @property
    def shape(self) -> TensorShape:
        return TensorShape(*self.amplitudes.shape)

    @property
    def data(self) -> np.ndarray:
        return self.amplitudes

    def with_data(self, amplitudes) -> "SpikeTensor":
        return SpikeTensor(amplitudes, self.scale, self.alpha, self.max_spikes)

    def values(self) -> DenseTensor:
        return DenseTensor(self.amplitudes * self.scale)

    def nnz(self) -> int:
        return int(np.count_nonzero(self.amplitudes))

    def check_amplitudes(self) -> bool:
        """True iff every element is 0 or a signed power of ``alpha`` below alpha**T."""
        a = np.abs(self.amplitudes[self.amplitudes != 0])
        if a.size == 0:
            return True
        allowed = self.alpha ** np.arange(self.shape.t)
        return bool(np.isin(a, allowed).all())


Tensor = Union[DenseTensor, SpikeTensor]


@dataclass(frozen=True)
class GroupingPlan:
    """Channels [0, split_channel) go to strided groups, the rest to windows."""

    split_channel: int
    n: int
    global_mode: str = GLOBAL
    window_mode: str = WINDOW

    @classmethod
    def from_ratio(cls, channels: int, ratio: float, n: int) -> "GroupingPlan":
        return cls(int(round(ratio * channels)), n)

    @property
    def n_groups(self) -> int:
        return self.n * self.n

    def validate(self, shape: TensorShape):
        if not 0 <= self.split_channel <= shape.c:
            raise IndexError(f"split_channel {self.split_channel} outside [0, {shape.c}]")
        if self.n < 1 or shape.h % self.n or shape.w % self.n:
            raise ShapeError(f"n={self.n} must divide h={shape.h} and w={shape.w}")


def channel_split(x: Tensor, split_channel: int):
    c = x.shape.c
    if not 0 <= split_channel <= c:
        raise IndexError(f"split_channel {split_channel} outside [0, {c}]")
    return x.with_data(x.data[..., :split_channel]), x.with_data(x.data[..., split_channel:])


def channel_concat(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("nothing to concatenate")
    first = parts[0]
    lead = first.data.shape[:4]
    for p in parts[1:]:
        if p.data.shape[:4] != lead:
            raise ShapeError(f"leading extents differ: {lead} vs {p.data.shape[:4]}")
    return first.with_data(np.concatenate([p.data for p in parts], axis=-1))


def _check_divisible(shape: TensorShape, n: int):
    if n < 1 or shape.h % n or shape.w % n:
        raise ShapeError(f"n={n} must divide h={shape.h} and w={shape.w}")


def strided_groups(x: Tensor, n: int) -> list:
    _check_divisible(x.shape, n)
    return [x.with_data(x.data[:, :, i::n, j::n, :]) for i in range(n) for j in range(n)]


def window_groups(x: Tensor, n: int) -> list:
    s = x.shape
    _check_divisible(s, n)
    hh, ww = s.h // n, s.w // n
    return [
        x.with_data(x.data[:, :, i * hh:(i + 1) * hh, j * ww:(j + 1) * ww, :])
        for i in range(n)
        for j in range(n)
    ]


def ungroup(groups: Sequence[Tensor], n: int, mode: str, shape: TensorShape) -> Tensor:
    """Inverse of :func:`strided_groups` / :func:`window_groups` for one mode."""
    _check_divisible(shape, n)
    if len(groups) != n * n:
        raise ShapeError(f"expected {n * n} groups, got {len(groups)}")
    hh, ww = shape.h // n, shape.w // n
    want = (shape.t, shape.b, hh, ww, shape.c)
    out = np.empty(shape.as_tuple())
    for k, g in enumerate(groups):
        if g.data.shape != want:
            raise ShapeError(f"group {k} has shape {g.data.shape}, expected {want}")
        i, j = divmod(k, n)
        if mode == GLOBAL:
            out[:, :, i::n, j::n, :] = g.data
        elif mode == WINDOW:
            out[:, :, i * hh:(i + 1) * hh, j * ww:(j + 1) * ww, :] = g.data
        else:
            raise ValueError(f"unknown grouping mode {mode!r}")
    return groups[0].with_data(out)


def group(x: Tensor, plan: GroupingPlan):
    """Split channels per ``plan`` and group each half. Returns (global, window) lists."""
    plan.validate(x.shape)
    g, w = channel_split(x, plan.split_channel)
    return strided_groups(g, plan.n), window_groups(w, plan.n)


def regroup(groups, plan: GroupingPlan, original_shape: TensorShape) -> Tensor:
    g_list, w_list = groups
    plan.validate(original_shape)
    s = original_shape
    gs = TensorShape(s.t, s.b, s.h, s.w, plan.split_channel)
    ws = TensorShape(s.t, s.b, s.h, s.w, s.c - plan.split_channel)
    return channel_concat([
        ungroup(g_list, plan.n, plan.global_mode, gs),
        ungroup(w_list, plan.n, plan.window_mode, ws),
    ])


def temporal_average(x: DenseTensor) -> DenseTensor:
    return DenseTensor(x.data.mean(axis=0, keepdims=True))
