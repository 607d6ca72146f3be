"""CPU micro-benchmark for the block variants' convolution stacks.

Times the depthwise convolutions only (no batch norm or activation), since
the point is whether the analytic MAC reduction shows up as wall time. Every
variant sees the same input data. Methodology: at least 5 warmup passes, then
the median of at least 30 timed repetitions; medians resist scheduler noise
better than means. Single-threaded by default; the channel-parallel mode
splits the channel dimension over a thread pool and produces bit-identical
output because each output element keeps its fixed tap-summation order.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .blocks import Activation, BlockSpec, BlockVariant, init_block, layer_plans, parallel_branches
from .cost import LayerConfig, layer_cost
from .padding import PadDirection

MIN_REPS = 30
MIN_WARMUP = 5


@dataclass(frozen=True)
class BenchResult:
    variant: str
    k: int
    dims: tuple[int, int, int, int]
    median_ns: int
    macs: int
    gmacs_per_s: float
    reps: int
    warmup: int

    @property
    def dims_str(self) -> str:
        return "x".join(str(d) for d in self.dims)


def _conv_once(x: np.ndarray, values: np.ndarray, pad, stride: tuple[int, int]) -> np.ndarray:
    """Lean tap-loop forward on a bare array; mirrors conv.dw_forward."""
    n, c, h, w = x.shape
    kh, kw, _ = values.shape
    sh, sw = stride
    ph, pw = h + pad.top + pad.bottom, w + pad.left + pad.right
    xp = np.zeros((n, c, ph, pw), dtype=x.dtype)
    xp[:, :, pad.top : pad.top + h, pad.left : pad.left + w] = x
    oh = (ph - kh) // sh + 1
    ow = (pw - kw) // sw + 1
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            out += values[ky, kx][None, :, None, None] * xp[
                :, :, ky : ky + (oh - 1) * sh + 1 : sh, kx : kx + (ow - 1) * sw + 1 : sw
            ]
    return out


def _stack_forward(spec: BlockSpec, kernels, x: np.ndarray) -> np.ndarray:
    plans = layer_plans(spec)
    branches = parallel_branches(spec)
    if branches is None:
        cur = x
        for plan, values in zip(plans, kernels):
            cur = _conv_once(cur, values, plan.pad, plan.stride)
        return cur
    outs = []
    for branch in branches:
        cur = x
        for i in branch:
            cur = _conv_once(cur, kernels[i], plans[i].pad, plans[i].stride)
        outs.append(cur)
    return outs[0] + outs[1]


def _stack_forward_channel_parallel(
    spec: BlockSpec, kernels, x: np.ndarray, pool: ThreadPoolExecutor, splits: int
) -> np.ndarray:
    bounds = np.linspace(0, x.shape[1], splits + 1, dtype=int)
    jobs = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if lo == hi:
            continue
        piece = x[:, lo:hi]
        piece_kernels = [kv[:, :, lo:hi] for kv in kernels]
        jobs.append(pool.submit(_stack_forward, spec, piece_kernels, piece))
    return np.concatenate([j.result() for j in jobs], axis=1)


def _spec_for_variant(variant: BlockVariant, k: int, c: int) -> BlockSpec:
    stride = (2, 2) if variant is BlockVariant.XSEP_DOWNSAMPLE else (1, 1)
    return BlockSpec(
        variant, k=k, c=c, stride=stride, activation=Activation.IDENTITY,
        pad_direction=PadDirection.RIGHT_BOTTOM,
    )


def run_bench(
    variants: list[BlockVariant],
    k: int,
    dims: tuple[int, int, int, int],
    reps: int,
    *,
    warmup: int = 10,
    parallel: int = 0,
    dtype: str = "float64",
    seed: int = 0,
) -> list[BenchResult]:
    """Median-of-reps forward timing for each variant on identical input."""
    if reps < MIN_REPS:
        raise ValueError(f"reps below minimum: need >= {MIN_REPS}, got {reps}")
    warmup = max(warmup, MIN_WARMUP)
    np_dtype = {"float64": np.float64, "float32": np.float32}[dtype]
    n, c, h, w = dims
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, c, h, w)).astype(np_dtype)
    results = []
    pool = ThreadPoolExecutor(max_workers=parallel) if parallel > 1 else None
    try:
        for variant in variants:
            spec = _spec_for_variant(variant, k, c)
            state = init_block(spec, seed)
            kernels = [layer.weights.values.astype(np_dtype) for layer in state.layers]

            def one_pass() -> np.ndarray:
                if pool is not None:
                    return _stack_forward_channel_parallel(spec, kernels, x, pool, parallel)
                return _stack_forward(spec, kernels, x)

            for _ in range(warmup):
                one_pass()
            samples = np.empty(reps, dtype=np.int64)
            for i in range(reps):
                t0 = time.perf_counter_ns()
                one_pass()
                samples[i] = time.perf_counter_ns() - t0
            median_ns = int(np.median(samples))
            stride = 2 if variant is BlockVariant.XSEP_DOWNSAMPLE else 1
            macs = n * layer_cost(LayerConfig("bench", variant, k, c, h, w, stride)).macs
            results.append(
                BenchResult(
                    variant=variant.value,
                    k=k,
                    dims=dims,
                    median_ns=median_ns,
                    macs=macs,
                    gmacs_per_s=macs / median_ns if median_ns > 0 else 0.0,
                    reps=reps,
                    warmup=warmup,
                )
            )
    finally:
        if pool is not None:
            pool.shutdown()
    return results
