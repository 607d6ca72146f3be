"""Depthwise convolution: forward, backward, and a deliberately naive oracle.

All convolutions here are cross-correlations (no kernel flip), one kernel per
channel, with explicit per-side zero padding and per-axis strides in {1, 2}.
Kernels may be rectangular: k x k, 1 x k, k x 1, or 2 x 2 all go through the
same code path.

``dw_forward`` is the production path: it loops over kernel taps and lets
numpy do the spatial work, accumulating taps in a fixed (ky, kx) order so the
result is reproducible bit for bit. ``naive_reference`` is the oracle: plain
Python loops over every output element, structurally independent of the fast
path, with optional multiply-accumulate counting. Keep it slow and obvious.

Output geometry uses floor division with explicit bounds checks, so a
mis-specified padding fails loudly instead of silently truncating.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import PadSpec, Tensor4, pad

STRIDES = (1, 2)


@dataclass(frozen=True)
class DepthwiseWeights:
    """One (kh, kw) kernel per channel, stored as an array indexed (ky, kx, c)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise ValueError(f"expected (kh, kw, c) weights, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1 or v.shape[2] < 1:
            raise ValueError(f"zero dimension in kernel shape {v.shape}")
        if v.dtype != np.float64 or not v.flags.c_contiguous:
            v = np.ascontiguousarray(v, dtype=np.float64)
        object.__setattr__(self, "values", v)

    @property
    def kh(self) -> int:
        return self.values.shape[0]

    @property
    def kw(self) -> int:
        return self.values.shape[1]

    @property
    def c(self) -> int:
        return self.values.shape[2]

    @property
    def param_count(self) -> int:
        return int(self.values.size)


def weights_from_flat(kh: int, kw: int, c: int, values: Sequence[float]) -> DepthwiseWeights:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != kh * kw * c:
        raise ValueError(f"need {kh * kw * c} values for a {kh}x{kw}x{c} kernel, got {arr.size}")
    return DepthwiseWeights(arr.reshape(kh, kw, c))


@dataclass(frozen=True)
class ConvGeom:
    """Stride pair plus explicit padding for one convolution."""

    stride_h: int = 1
    stride_w: int = 1
    pad: PadSpec = field(default_factory=PadSpec)

    def __post_init__(self) -> None:
        if self.stride_h not in STRIDES or self.stride_w not in STRIDES:
            raise ValueError(f"strides must be 1 or 2, got ({self.stride_h}, {self.stride_w})")


@dataclass
class MacTally:
    """Mutable counter threaded through naive_reference to count every
    multiply-accumulate it performs, padded taps included."""

    macs: int = 0


def output_dims(x_dims: Sequence[int], w: DepthwiseWeights, g: ConvGeom) -> tuple[int, int, int, int]:
    """Output (n, c, oh, ow) for the given input dims, kernel, and geometry."""
    n, c, h, wd = x_dims
    if c != w.c:
        raise ValueError(f"channel mismatch: input has {c}, kernel has {w.c}")
    ph = h + g.pad.top + g.pad.bottom
    pw = wd + g.pad.left + g.pad.right
    if ph < w.kh or pw < w.kw:
        raise ValueError(
            f"kernel {w.kh}x{w.kw} larger than padded input {ph}x{pw}"
        )
    oh = (ph - w.kh) // g.stride_h + 1
    ow = (pw - w.kw) // g.stride_w + 1
    return n, c, oh, ow


def dw_forward(x: Tensor4, w: DepthwiseWeights, g: ConvGeom) -> Tensor4:
    """Depthwise cross-correlation.

    out[n, z, oy, ox] = sum_{ky, kx} w[ky, kx, z] * xpad[n, z, oy*sh + ky, ox*sw + kx]
    """
    n, c, oh, ow = output_dims(x.dims, w, g)
    xp = pad(x, g.pad).array
    sh, sw = g.stride_h, g.stride_w
    out = np.zeros((n, c, oh, ow), dtype=np.float64)
    for ky in range(w.kh):
        for kx in range(w.kw):
            window = xp[
                :,
                :,
                ky : ky + (oh - 1) * sh + 1 : sh,
                kx : kx + (ow - 1) * sw + 1 : sw,
            ]
            out += w.values[ky, kx][np.newaxis, :, np.newaxis, np.newaxis] * window
    return Tensor4(out)


def naive_reference(
    x: Tensor4, w: DepthwiseWeights, g: ConvGeom, tally: MacTally | None = None
) -> Tensor4:
    """Brute-force depthwise cross-correlation, element by element.

    Same contract as dw_forward, but computed with scalar Python loops in a
    different nesting order and no vectorization, to serve as an independent
    oracle. When ``tally`` is given, counts one multiply-accumulate per kernel
    tap per output element (taps landing on zero padding included).
    """
    n, c, oh, ow = output_dims(x.dims, w, g)
    xp = pad(x, g.pad).array
    wv = w.values
    sh, sw = g.stride_h, g.stride_w
    out = np.zeros((n, c, oh, ow), dtype=np.float64)
    macs = 0
    for i in range(n):
        for z in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0
                    for ky in range(w.kh):
                        for kx in range(w.kw):
                            acc += wv[ky, kx, z] * xp[i, z, oy * sh + ky, ox * sw + kx]
                            macs += 1
                    out[i, z, oy, ox] = acc
    if tally is not None:
        tally.macs += macs
    return Tensor4(out)


def dw_backward_input(
    grad_y: Tensor4, w: DepthwiseWeights, g: ConvGeom, input_dims: Sequence[int]
) -> Tensor4:
    """Gradient of dw_forward w.r.t. its input: the exact adjoint map.

    Scatters each output-gradient element back through the kernel taps onto
    the padded-input grid, then drops the padded border.
    """
    n, c, oh, ow = output_dims(input_dims, w, g)
    if grad_y.dims != (n, c, oh, ow):
        raise ValueError(
            f"geometry mismatch: grad has dims {grad_y.dims}, forward produces {(n, c, oh, ow)}"
        )
    _, _, h, wd = input_dims
    sh, sw = g.stride_h, g.stride_w
    gxp = np.zeros(
        (n, c, h + g.pad.top + g.pad.bottom, wd + g.pad.left + g.pad.right),
        dtype=np.float64,
    )
    for ky in range(w.kh):
        for kx in range(w.kw):
            gxp[
                :,
                :,
                ky : ky + (oh - 1) * sh + 1 : sh,
                kx : kx + (ow - 1) * sw + 1 : sw,
            ] += w.values[ky, kx][np.newaxis, :, np.newaxis, np.newaxis] * grad_y.array
    gx = gxp[
        :,
        :,
        g.pad.top : g.pad.top + h,
        g.pad.left : g.pad.left + wd,
    ]
    return Tensor4(gx.copy())


def dw_backward_weights(
    x: Tensor4, grad_y: Tensor4, g: ConvGeom, kernel_dims: tuple[int, int]
) -> DepthwiseWeights:
    """Gradient of dw_forward w.r.t. the kernel values.

    grad_w[ky, kx, z] = sum_{n, oy, ox} grad_y[n, z, oy, ox] * xpad[n, z, oy*sh + ky, ox*sw + kx]
    """
    kh, kw = kernel_dims
    probe = DepthwiseWeights(np.zeros((kh, kw, x.c), dtype=np.float64))
    n, c, oh, ow = output_dims(x.dims, probe, g)
    if grad_y.dims != (n, c, oh, ow):
        raise ValueError(
            f"geometry mismatch: grad has dims {grad_y.dims}, forward produces {(n, c, oh, ow)}"
        )
    xp = pad(x, g.pad).array
    sh, sw = g.stride_h, g.stride_w
    gw = np.zeros((kh, kw, c), dtype=np.float64)
    for ky in range(kh):
        for kx in range(kw):
            window = xp[
                :,
                :,
                ky : ky + (oh - 1) * sh + 1 : sh,
                kx : kx + (ow - 1) * sw + 1 : sw,
            ]
            gw[ky, kx] = (grad_y.array * window).sum(axis=(0, 2, 3))
    return DepthwiseWeights(gw)


def separable_outer(col: DepthwiseWeights, row: DepthwiseWeights) -> DepthwiseWeights:
    """Per-channel outer product of a k x 1 column kernel and a 1 x k row
    kernel: the rank-1 k x k kernel whose correlation equals applying the row
    then the column kernel."""
    if col.kw != 1 or row.kh != 1:
        raise ValueError(f"need a (k,1) column and a (1,k) row kernel, got {col.values.shape} and {row.values.shape}")
    if col.c != row.c:
        raise ValueError(f"channel mismatch: {col.c} vs {row.c}")
    full = col.values[:, 0, :][:, np.newaxis, :] * row.values[0, :, :][np.newaxis, :, :]
    return DepthwiseWeights(np.ascontiguousarray(full))


def compose_kernels(first: DepthwiseWeights, second: DepthwiseWeights) -> DepthwiseWeights:
    """Effective kernel of two stacked cross-correlations (first, then second).

    Index-sum composition: E[s] = sum_{a + b = s} first[a] * second[b], with
    support (kh1 + kh2 - 1) x (kw1 + kw2 - 1). Valid on interior pixels where
    neither layer's zero padding is visible.
    """
    if first.c != second.c:
        raise ValueError(f"channel mismatch: {first.c} vs {second.c}")
    kh = first.kh + second.kh - 1
    kw = first.kw + second.kw - 1
    out = np.zeros((kh, kw, first.c), dtype=np.float64)
    for ky in range(first.kh):
        for kx in range(first.kw):
            out[ky : ky + second.kh, kx : kx + second.kw] += (
                first.values[ky, kx][np.newaxis, np.newaxis, :] * second.values
            )
    return DepthwiseWeights(out)


def weights_to_json(w: DepthwiseWeights) -> str:
    return json.dumps(
        {"kh": w.kh, "kw": w.kw, "c": w.c, "values": w.values.ravel().tolist()}
    )


def weights_from_json(text: str) -> DepthwiseWeights:
    obj = json.loads(text)
    return weights_from_flat(obj["kh"], obj["kw"], obj["c"], obj["values"])
