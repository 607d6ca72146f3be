"""Dense rank-4 activation tensors in float64.

Layout is fixed to (batch, channels, height, width), row-major, so the flat
index of element (i, j, y, x) is ((i*c + j)*h + y)*w + x. Channel planes are
therefore contiguous, which is the access pattern depthwise convolution wants.

Operations never mutate their inputs; every op allocates and returns a new
tensor, so tensors are safe to share across concurrent readers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

Dims = tuple[int, int, int, int]


@dataclass(frozen=True)
class PadSpec:
    """Per-side zero padding amounts, in pixels."""

    top: int = 0
    bottom: int = 0
    left: int = 0
    right: int = 0

    def __post_init__(self) -> None:
        for side in ("top", "bottom", "left", "right"):
            v = getattr(self, side)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 0:
                raise ValueError(f"pad {side} must be a non-negative integer, got {v!r}")

    @property
    def symmetric(self) -> bool:
        return self.top == self.bottom and self.left == self.right

    def __add__(self, other: "PadSpec") -> "PadSpec":
        return PadSpec(
            self.top + other.top,
            self.bottom + other.bottom,
            self.left + other.left,
            self.right + other.right,
        )


@dataclass(frozen=True)
class Tensor4:
    """Immutable-by-convention wrapper around a C-contiguous float64 array.

    The wrapped array must not be written to after construction; all module
    operations honour that and return fresh tensors.
    """

    array: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.array)
        if a.ndim != 4:
            raise ValueError(f"expected 4 dimensions (n, c, h, w), got shape {a.shape}")
        if any(d < 1 for d in a.shape):
            raise ValueError(f"zero dimension in shape {a.shape}")
        if a.dtype != np.float64 or not a.flags.c_contiguous:
            a = np.ascontiguousarray(a, dtype=np.float64)
        object.__setattr__(self, "array", a)

    @property
    def dims(self) -> Dims:
        return self.array.shape  # type: ignore[return-value]

    @property
    def n(self) -> int:
        return self.array.shape[0]

    @property
    def c(self) -> int:
        return self.array.shape[1]

    @property
    def h(self) -> int:
        return self.array.shape[2]

    @property
    def w(self) -> int:
        return self.array.shape[3]

    def get(self, i: int, j: int, y: int, x: int) -> float:
        return float(self.array[i, j, y, x])

    def sum(self) -> float:
        return float(self.array.sum())


def zeros(dims: Sequence[int]) -> Tensor4:
    """All-zero tensor of the given (n, c, h, w) dims."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4:
        raise ValueError(f"expected 4 dims, got {dims}")
    if any(d < 1 for d in dims):
        raise ValueError(f"zero dimension in {dims}")
    return Tensor4(np.zeros(dims, dtype=np.float64))


def from_flat(dims: Sequence[int], data: Sequence[float]) -> Tensor4:
    """Build a tensor from row-major flat data (length must equal n*c*h*w)."""
    dims = tuple(int(d) for d in dims)
    arr = np.asarray(data, dtype=np.float64)
    expected = int(np.prod(dims))
    if arr.size != expected:
        raise ValueError(f"data length {arr.size} does not match dims {dims} (need {expected})")
    return Tensor4(arr.reshape(dims))


def impulse(dims: Sequence[int], channel: int, y: int, x: int) -> Tensor4:
    """Zeros everywhere except a single 1.0 at (batch 0, channel, y, x)."""
    t = zeros(dims)
    _, c, h, w = t.dims
    if not (0 <= channel < c and 0 <= y < h and 0 <= x < w):
        raise ValueError(
            f"coordinate out of range: channel={channel}, y={y}, x={x} for dims {t.dims}"
        )
    t.array[0, channel, y, x] = 1.0
    return t


def pad(x: Tensor4, p: PadSpec) -> Tensor4:
    """Zero-pad spatially; output is (n, c, h+top+bottom, w+left+right)."""
    if p == PadSpec():
        return Tensor4(x.array.copy())
    out = np.zeros(
        (x.n, x.c, x.h + p.top + p.bottom, x.w + p.left + p.right), dtype=np.float64
    )
    out[:, :, p.top : p.top + x.h, p.left : p.left + x.w] = x.array
    return Tensor4(out)


def crop(x: Tensor4, p: PadSpec) -> Tensor4:
    """Remove p.top rows from the top, p.bottom from the bottom, etc.

    Exact inverse of pad with the same PadSpec.
    """
    if x.h <= p.top + p.bottom or x.w <= p.left + p.right:
        raise ValueError(
            f"empty result: crop {p} exceeds spatial dims ({x.h}, {x.w})"
        )
    return Tensor4(x.array[:, :, p.top : x.h - p.bottom, p.left : x.w - p.right].copy())


def max_abs_diff(a: Tensor4, b: Tensor4) -> float:
    """Largest elementwise |a - b|; zero iff the tensors are equal."""
    if a.dims != b.dims:
        raise ValueError(f"dim mismatch: {a.dims} vs {b.dims}")
    return float(np.max(np.abs(a.array - b.array)))


def centroid(x: Tensor4, channel: int) -> tuple[float, float]:
    """Mass-weighted mean (cy, cx) of one channel of batch item 0.

    Intended for non-negative activation maps; rejects channels whose values
    sum to zero (the centroid would be undefined).
    """
    if not 0 <= channel < x.c:
        raise ValueError(f"coordinate out of range: channel={channel} for dims {x.dims}")
    plane = x.array[0, channel]
    total = plane.sum()
    if total == 0.0:
        raise ValueError("zero mass: channel sums to 0, centroid undefined")
    ys = np.arange(x.h, dtype=np.float64)
    xs = np.arange(x.w, dtype=np.float64)
    cy = float((plane.sum(axis=1) * ys).sum() / total)
    cx = float((plane.sum(axis=0) * xs).sum() / total)
    return cy, cx


def to_json(x: Tensor4) -> str:
    """Serialize to the flat fixture format {dims:[n,c,h,w], data:[...]}."""
    return json.dumps({"dims": list(x.dims), "data": x.array.ravel().tolist()})


def from_json(text: str) -> Tensor4:
    obj = json.loads(text)
    return from_flat(obj["dims"], obj["data"])


def save_json(x: Tensor4, path: Path | str) -> None:
    Path(path).write_text(to_json(x), encoding="utf-8")


def load_json(path: Path | str) -> Tensor4:
    return from_json(Path(path).read_text(encoding="utf-8"))
