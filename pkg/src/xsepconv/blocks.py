"""Executable convolution blocks built from the depthwise primitives.

A block is a short stack of depthwise layers, each followed by batch
normalization and a pointwise nonlinearity. Six variants are supported:

* ``VANILLA_DW``: a single k x k depthwise layer (the baseline);
* ``XSEP``: 2x2, then 1xk, then kx1 depthwise layers;
* ``XSEP_NO_2X2``: the spatially separated pair alone (1xk, kx1);
* ``XSEP_BEHIND``: the 2x2 layer moved after the separated pair;
* ``XSEP_PARALLEL``: the 2x2 layer on a parallel branch, merged by
  elementwise addition after each branch's normalization and activation;
* ``XSEP_DOWNSAMPLE``: 2x2 at stride 1, then 1xk at stride (1, 2), then kx1
  at stride (2, 1), halving both spatial dims in two stages (width first).

The 2x2 layer's padding side is not chosen per block: it is injected through
``BlockSpec.pad_direction`` from a network-level schedule (see ``padding``),
so consecutive blocks can cancel each other's half-pixel drift.

State is immutable; forward/backward return new values, and train-mode batch
norm returns its updated running statistics as part of a new state rather
than mutating anything.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace

import numpy as np

from .conv import (
    ConvGeom,
    DepthwiseWeights,
    compose_kernels,
    dw_backward_input,
    dw_backward_weights,
    dw_forward,
)
from .padding import PadDirection, same_pad
from .tensor import PadSpec, Tensor4


class BlockVariant(enum.Enum):
    VANILLA_DW = "vanilla_dw"
    XSEP = "xsep"
    XSEP_NO_2X2 = "xsep_no_2x2"
    XSEP_BEHIND = "xsep_behind"
    XSEP_PARALLEL = "xsep_parallel"
    XSEP_DOWNSAMPLE = "xsep_downsample"


SERIAL_COMPOSABLE = (BlockVariant.XSEP, BlockVariant.XSEP_NO_2X2, BlockVariant.XSEP_BEHIND)


class Activation(enum.Enum):
    RELU = "relu"
    HARD_SWISH = "hard_swish"
    IDENTITY = "identity"


@dataclass(frozen=True)
class BlockSpec:
    """Configuration of one block: variant, kernel size, channels, stride,
    activation, and the padding side for the 2x2 layer if the variant has one."""

    variant: BlockVariant
    k: int
    c: int
    stride: tuple[int, int] = (1, 1)
    activation: Activation = Activation.HARD_SWISH
    pad_direction: PadDirection | None = None

    def __post_init__(self) -> None:
        if self.k < 3 or self.k % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 3, got {self.k}")
        if self.c < 1:
            raise ValueError(f"channel count must be >= 1, got {self.c}")
        if self.stride not in ((1, 1), (2, 2)):
            raise ValueError(f"stride must be (1,1) or (2,2), got {self.stride}")
        if self.variant is BlockVariant.XSEP_DOWNSAMPLE:
            if self.stride != (2, 2):
                raise ValueError("downsampling blocks require stride (2, 2)")
        elif self.variant is not BlockVariant.VANILLA_DW and self.stride != (1, 1):
            raise ValueError(f"{self.variant.value} blocks require stride (1, 1)")
        if self.has_2x2 and self.pad_direction is None:
            raise ValueError(f"{self.variant.value} blocks need a pad_direction for the 2x2 layer")

    @property
    def has_2x2(self) -> bool:
        return self.variant in (
            BlockVariant.XSEP,
            BlockVariant.XSEP_BEHIND,
            BlockVariant.XSEP_PARALLEL,
            BlockVariant.XSEP_DOWNSAMPLE,
        )

    @property
    def downsample_recommended(self) -> bool:
        """Downsampling replacement only pays off for kernels of 7 and up."""
        return self.variant is BlockVariant.XSEP_DOWNSAMPLE and self.k >= 7


@dataclass(frozen=True)
class LayerPlan:
    """Geometry of one constituent depthwise layer."""

    kh: int
    kw: int
    stride: tuple[int, int]
    pad: PadSpec

    @property
    def geom(self) -> ConvGeom:
        return ConvGeom(self.stride[0], self.stride[1], self.pad)


def layer_plans(spec: BlockSpec) -> tuple[LayerPlan, ...]:
    """Constituent layers of a block, in application order. For the parallel
    variant the 2x2 branch comes first, then the separated pair."""
    k, d = spec.k, spec.pad_direction

    def plan(kh: int, kw: int, sh: int = 1, sw: int = 1) -> LayerPlan:
        direction = d if (kh % 2 == 0 or kw % 2 == 0) and kh * kw == 4 else None
        return LayerPlan(kh, kw, (sh, sw), same_pad(kh, kw, sh, sw, direction))

    if spec.variant is BlockVariant.VANILLA_DW:
        sh, sw = spec.stride
        return (plan(k, k, sh, sw),)
    if spec.variant is BlockVariant.XSEP:
        return (plan(2, 2), plan(1, k), plan(k, 1))
    if spec.variant is BlockVariant.XSEP_NO_2X2:
        return (plan(1, k), plan(k, 1))
    if spec.variant is BlockVariant.XSEP_BEHIND:
        return (plan(1, k), plan(k, 1), plan(2, 2))
    if spec.variant is BlockVariant.XSEP_PARALLEL:
        return (plan(2, 2), plan(1, k), plan(k, 1))
    if spec.variant is BlockVariant.XSEP_DOWNSAMPLE:
        return (plan(2, 2), plan(1, k, 1, 2), plan(k, 1, 2, 1))
    raise ValueError(f"unknown variant {spec.variant!r}")


def parallel_branches(spec: BlockSpec) -> tuple[tuple[int, ...], tuple[int, ...]] | None:
    """Layer indices of the two branches for the parallel variant, else None."""
    if spec.variant is BlockVariant.XSEP_PARALLEL:
        return (0,), (1, 2)
    return None


# --------------------------------------------------------------------------
# Batch normalization


@dataclass(frozen=True)
class BatchNormParams:
    """Per-channel affine batch normalization state.

    ``mode`` selects train (batch statistics, running stats updated
    functionally) or inference (running statistics). ``eps`` may be zero for
    exactly-identity configurations used by linearized checks.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1
    mode: str = "train"

    def __post_init__(self) -> None:
        for name in ("gamma", "beta", "running_mean", "running_var"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be per-channel (1-d), got shape {arr.shape}")
            object.__setattr__(self, name, arr)
        shapes = {self.gamma.shape, self.beta.shape, self.running_mean.shape, self.running_var.shape}
        if len(shapes) != 1:
            raise ValueError("batch norm parameter shapes disagree")
        if np.any(self.running_var < 0):
            raise ValueError("running variance must be non-negative")
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.mode not in ("train", "inference"):
            raise ValueError(f"mode must be 'train' or 'inference', got {self.mode!r}")

    @property
    def c(self) -> int:
        return self.gamma.shape[0]


def default_batchnorm(c: int, mode: str = "train") -> BatchNormParams:
    return BatchNormParams(
        gamma=np.ones(c),
        beta=np.zeros(c),
        running_mean=np.zeros(c),
        running_var=np.ones(c),
        mode=mode,
    )


def identity_batchnorm(c: int) -> BatchNormParams:
    """An exactly affine-identity normalization (inference, eps 0)."""
    return BatchNormParams(
        gamma=np.ones(c),
        beta=np.zeros(c),
        running_mean=np.zeros(c),
        running_var=np.ones(c),
        eps=0.0,
        mode="inference",
    )


def is_identity_batchnorm(p: BatchNormParams) -> bool:
    return (
        p.mode == "inference"
        and p.eps == 0.0
        and np.all(p.gamma == 1.0)
        and np.all(p.beta == 0.0)
        and np.all(p.running_mean == 0.0)
        and np.all(p.running_var == 1.0)
    )


@dataclass(frozen=True)
class BatchNormCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    count: int  # elements per channel in the batch statistics; 0 in inference


def bn_forward(p: BatchNormParams, x: np.ndarray) -> tuple[np.ndarray, BatchNormCache, BatchNormParams]:
    """Normalize (n, c, h, w) activations; returns output, backward cache, and
    the parameter set with updated running statistics (train mode only)."""
    if x.shape[1] != p.c:
        raise ValueError(f"channel mismatch: activations have {x.shape[1]}, norm has {p.c}")
    if p.mode == "train":
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))  # biased, matching the normalization
        count = x.shape[0] * x.shape[2] * x.shape[3]
        new_p = replace(
            p,
            running_mean=(1 - p.momentum) * p.running_mean + p.momentum * mean,
            running_var=(1 - p.momentum) * p.running_var + p.momentum * var,
        )
    else:
        mean, var, count = p.running_mean, p.running_var, 0
        new_p = p
    inv_std = 1.0 / np.sqrt(var + p.eps)
    xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
    y = p.gamma[:, None, None] * xhat + p.beta[:, None, None]
    return y, BatchNormCache(xhat=xhat, inv_std=inv_std, count=count), new_p


def bn_backward(
    p: BatchNormParams, cache: BatchNormCache, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_input, d_gamma, d_beta) for bn_forward."""
    dgamma = (gy * cache.xhat).sum(axis=(0, 2, 3))
    dbeta = gy.sum(axis=(0, 2, 3))
    dxhat = gy * p.gamma[:, None, None]
    if cache.count == 0:  # inference: statistics are constants
        gx = dxhat * cache.inv_std[:, None, None]
        return gx, dgamma, dbeta
    m = cache.count
    sum_dxhat = dxhat.sum(axis=(0, 2, 3))
    sum_dxhat_xhat = (dxhat * cache.xhat).sum(axis=(0, 2, 3))
    gx = (
        cache.inv_std[:, None, None]
        / m
        * (m * dxhat - sum_dxhat[:, None, None] - cache.xhat * sum_dxhat_xhat[:, None, None])
    )
    return gx, dgamma, dbeta


# --------------------------------------------------------------------------
# Activations


def act_forward(kind: Activation, x: np.ndarray) -> np.ndarray:
    if kind is Activation.IDENTITY:
        return x
    if kind is Activation.RELU:
        return np.maximum(x, 0.0)
    if kind is Activation.HARD_SWISH:
        return x * np.clip(x + 3.0, 0.0, 6.0) / 6.0
    raise ValueError(f"unknown activation {kind!r}")


def act_backward(kind: Activation, x_pre: np.ndarray, gy: np.ndarray) -> np.ndarray:
    if kind is Activation.IDENTITY:
        return gy
    if kind is Activation.RELU:
        return gy * (x_pre > 0.0)
    if kind is Activation.HARD_SWISH:
        d = np.where(x_pre <= -3.0, 0.0, np.where(x_pre >= 3.0, 1.0, (2.0 * x_pre + 3.0) / 6.0))
        return gy * d
    raise ValueError(f"unknown activation {kind!r}")


# --------------------------------------------------------------------------
# Block state


@dataclass(frozen=True)
class LayerState:
    weights: DepthwiseWeights
    bn: BatchNormParams


@dataclass(frozen=True)
class BlockState:
    layers: tuple[LayerState, ...]

    @property
    def conv_param_count(self) -> int:
        return sum(layer.weights.param_count for layer in self.layers)


@dataclass(frozen=True)
class BlockGrads:
    """Gradients mirroring BlockState: one conv-weight array and one
    (gamma, beta) pair per layer."""

    conv: tuple[np.ndarray, ...]
    gamma: tuple[np.ndarray, ...]
    beta: tuple[np.ndarray, ...]


def init_block(spec: BlockSpec, seed: int) -> BlockState:
    """Deterministic initialization: conv weights uniform in (-b, b) with
    b = sqrt(6 / (kh*kw)) (per-channel fan-in), batch norm at identity with
    fresh running statistics."""
    rng = np.random.default_rng(seed)
    layers = []
    for plan in layer_plans(spec):
        bound = float(np.sqrt(6.0 / (plan.kh * plan.kw)))
        values = rng.uniform(-bound, bound, size=(plan.kh, plan.kw, spec.c))
        layers.append(LayerState(DepthwiseWeights(values), default_batchnorm(spec.c)))
    return BlockState(tuple(layers))


def with_identity_batchnorm(state: BlockState) -> BlockState:
    """Same conv weights, batch norms replaced by exact identities."""
    return BlockState(
        tuple(LayerState(ls.weights, identity_batchnorm(ls.bn.c)) for ls in state.layers)
    )


def set_block_mode(state: BlockState, mode: str) -> BlockState:
    return BlockState(
        tuple(LayerState(ls.weights, replace(ls.bn, mode=mode)) for ls in state.layers)
    )


@dataclass(frozen=True)
class LayerCache:
    x_in: Tensor4
    conv_out: np.ndarray
    bn_cache: BatchNormCache
    bn_out: np.ndarray  # pre-activation


@dataclass(frozen=True)
class BlockCache:
    layer_caches: tuple[LayerCache, ...]


def _check_input(spec: BlockSpec, x: Tensor4) -> None:
    if x.c != spec.c:
        raise ValueError(f"channel mismatch: input has {x.c}, block expects {spec.c}")
    if x.h < spec.k + 1 or x.w < spec.k + 1:
        raise ValueError(
            f"spatial dims {(x.h, x.w)} too small for k={spec.k} (need >= k+1)"
        )


def _apply_layer(
    layer: LayerState, plan: LayerPlan, activation: Activation, x: Tensor4
) -> tuple[Tensor4, LayerCache, LayerState]:
    conv_out = dw_forward(x, layer.weights, plan.geom)
    bn_out, bn_cache, new_bn = bn_forward(layer.bn, conv_out.array)
    y = act_forward(activation, bn_out)
    cache = LayerCache(x_in=x, conv_out=conv_out.array, bn_cache=bn_cache, bn_out=bn_out)
    return Tensor4(y), cache, LayerState(layer.weights, new_bn)


def block_forward_with_cache(
    state: BlockState, spec: BlockSpec, x: Tensor4
) -> tuple[Tensor4, BlockCache, BlockState]:
    """Run the block, also returning per-layer caches for backward and the
    state with updated train-mode running statistics."""
    _check_input(spec, x)
    plans = layer_plans(spec)
    if len(plans) != len(state.layers):
        raise ValueError(
            f"state has {len(state.layers)} layers, variant {spec.variant.value} needs {len(plans)}"
        )
    branches = parallel_branches(spec)
    caches: list[LayerCache] = [None] * len(plans)  # type: ignore[list-item]
    new_layers: list[LayerState] = list(state.layers)
    if branches is None:
        cur = x
        for i, plan in enumerate(plans):
            cur, caches[i], new_layers[i] = _apply_layer(state.layers[i], plan, spec.activation, cur)
        out = cur
    else:
        branch_outs = []
        for branch in branches:
            cur = x
            for i in branch:
                cur, caches[i], new_layers[i] = _apply_layer(
                    state.layers[i], plans[i], spec.activation, cur
                )
            branch_outs.append(cur)
        out = Tensor4(branch_outs[0].array + branch_outs[1].array)
    return out, BlockCache(tuple(caches)), BlockState(tuple(new_layers))


def block_forward(state: BlockState, spec: BlockSpec, x: Tensor4) -> Tensor4:
    """Apply the block: each constituent conv followed by batch norm and the
    spec's activation; the parallel variant merges branches by addition."""
    out, _, _ = block_forward_with_cache(state, spec, x)
    return out


def _backward_layer(
    layer: LayerState,
    plan: LayerPlan,
    activation: Activation,
    cache: LayerCache,
    gy: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_input, grad_weights, grad_gamma, grad_beta)."""
    g = act_backward(activation, cache.bn_out, gy)
    g, dgamma, dbeta = bn_backward(layer.bn, cache.bn_cache, g)
    gt = Tensor4(g)
    gw = dw_backward_weights(cache.x_in, gt, plan.geom, (plan.kh, plan.kw))
    gx = dw_backward_input(gt, layer.weights, plan.geom, cache.x_in.dims)
    return gx.array, gw.values, dgamma, dbeta


def block_backward_from_cache(
    state: BlockState, spec: BlockSpec, cache: BlockCache, grad_out: Tensor4
) -> tuple[Tensor4, BlockGrads]:
    plans = layer_plans(spec)
    n_layers = len(plans)
    conv_g: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gamma_g: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    beta_g: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    branches = parallel_branches(spec)
    if branches is None:
        g = grad_out.array
        for i in reversed(range(n_layers)):
            g, conv_g[i], gamma_g[i], beta_g[i] = _backward_layer(
                state.layers[i], plans[i], spec.activation, cache.layer_caches[i], g
            )
        grad_x = g
    else:
        grad_x = np.zeros_like(cache.layer_caches[0].x_in.array)
        for branch in branches:
            g = grad_out.array
            for i in reversed(branch):
                g, conv_g[i], gamma_g[i], beta_g[i] = _backward_layer(
                    state.layers[i], plans[i], spec.activation, cache.layer_caches[i], g
                )
            grad_x = grad_x + g
    return Tensor4(grad_x), BlockGrads(tuple(conv_g), tuple(gamma_g), tuple(beta_g))


def block_backward(
    state: BlockState, spec: BlockSpec, x: Tensor4, grad_out: Tensor4
) -> tuple[Tensor4, BlockGrads]:
    """Gradients of the block w.r.t. its input, conv weights, and batch norm
    affine parameters. Train-mode layers backpropagate through the batch
    statistics."""
    out, cache, _ = block_forward_with_cache(state, spec, x)
    if grad_out.dims != out.dims:
        raise ValueError(f"dim mismatch: grad has {grad_out.dims}, output has {out.dims}")
    return block_backward_from_cache(state, spec, cache, grad_out)


def sgd_step(state: BlockState, grads: BlockGrads, lr: float) -> BlockState:
    """Plain gradient step on conv weights and batch norm affine parameters."""
    new_layers = []
    for layer, gw, gg, gb in zip(state.layers, grads.conv, grads.gamma, grads.beta):
        new_layers.append(
            LayerState(
                DepthwiseWeights(layer.weights.values - lr * gw),
                replace(layer.bn, gamma=layer.bn.gamma - lr * gg, beta=layer.bn.beta - lr * gb),
            )
        )
    return BlockState(tuple(new_layers))


# --------------------------------------------------------------------------
# Structural analysis


def receptive_field(spec: BlockSpec) -> tuple[int, int]:
    """Input-pixel extent that can influence one output element."""

    def axis_rf(kernels_strides: list[tuple[int, int]]) -> int:
        rf, jump = 1, 1
        for k_ax, s_ax in kernels_strides:
            rf += (k_ax - 1) * jump
            jump *= s_ax
        return rf

    plans = layer_plans(spec)
    branches = parallel_branches(spec)
    groups = [range(len(plans))] if branches is None else list(branches)
    rh = max(axis_rf([(plans[i].kh, plans[i].stride[0]) for i in g]) for g in groups)
    rw = max(axis_rf([(plans[i].kw, plans[i].stride[1]) for i in g]) for g in groups)
    return rh, rw


def effective_kernel(state: BlockState, spec: BlockSpec) -> DepthwiseWeights:
    """Single per-channel kernel equivalent to a serial block in linear
    configuration (identity activation, identity batch norm).

    The composition of stacked cross-correlations is their index-sum
    convolution, giving a (k+1) x (k+1) kernel when the 2x2 layer is present
    and k x k otherwise. ``dw_forward`` with this kernel and
    ``effective_geometry`` reproduces ``block_forward`` on interior pixels.
    """
    if spec.variant not in SERIAL_COMPOSABLE:
        raise ValueError(f"no effective kernel for variant {spec.variant.value}")
    if spec.activation is not Activation.IDENTITY:
        raise ValueError("effective kernel requires the identity activation")
    for layer in state.layers:
        if not is_identity_batchnorm(layer.bn):
            raise ValueError("effective kernel requires identity batch norm on every layer")
    kernel = state.layers[0].weights
    for layer in state.layers[1:]:
        kernel = compose_kernels(kernel, layer.weights)
    return kernel


def effective_geometry(spec: BlockSpec) -> ConvGeom:
    """Geometry for the effective kernel: the per-layer paddings summed."""
    if spec.variant not in SERIAL_COMPOSABLE:
        raise ValueError(f"no effective geometry for variant {spec.variant.value}")
    total = PadSpec()
    for plan in layer_plans(spec):
        total = total + plan.pad
    return ConvGeom(1, 1, total)


# --------------------------------------------------------------------------
# Serialization (field names match the network config format)


def spec_to_json(spec: BlockSpec) -> str:
    return json.dumps(
        {
            "variant": spec.variant.value,
            "k": spec.k,
            "c": spec.c,
            "stride": list(spec.stride),
            "activation": spec.activation.value,
            "pad_direction": spec.pad_direction.value if spec.pad_direction else None,
        }
    )


def spec_from_json(text: str) -> BlockSpec:
    obj = json.loads(text)
    direction = obj.get("pad_direction")
    return BlockSpec(
        variant=BlockVariant(obj["variant"]),
        k=int(obj["k"]),
        c=int(obj["c"]),
        stride=tuple(obj.get("stride", (1, 1))),  # type: ignore[arg-type]
        activation=Activation(obj.get("activation", "hard_swish")),
        pad_direction=PadDirection(direction) if direction else None,
    )


def state_to_json(state: BlockState) -> str:
    layers = []
    for layer in state.layers:
        layers.append(
            {
                "weights": {
                    "kh": layer.weights.kh,
                    "kw": layer.weights.kw,
                    "c": layer.weights.c,
                    "values": layer.weights.values.ravel().tolist(),
                },
                "bn": {
                    "gamma": layer.bn.gamma.tolist(),
                    "beta": layer.bn.beta.tolist(),
                    "running_mean": layer.bn.running_mean.tolist(),
                    "running_var": layer.bn.running_var.tolist(),
                    "eps": layer.bn.eps,
                    "momentum": layer.bn.momentum,
                    "mode": layer.bn.mode,
                },
            }
        )
    return json.dumps({"layers": layers})


def state_from_json(text: str) -> BlockState:
    obj = json.loads(text)
    layers = []
    for entry in obj["layers"]:
        w = entry["weights"]
        values = np.asarray(w["values"], dtype=np.float64).reshape(w["kh"], w["kw"], w["c"])
        bn = entry["bn"]
        layers.append(
            LayerState(
                DepthwiseWeights(values),
                BatchNormParams(
                    gamma=np.asarray(bn["gamma"]),
                    beta=np.asarray(bn["beta"]),
                    running_mean=np.asarray(bn["running_mean"]),
                    running_var=np.asarray(bn["running_var"]),
                    eps=float(bn["eps"]),
                    momentum=float(bn["momentum"]),
                    mode=bn["mode"],
                ),
            )
        )
    return BlockState(tuple(layers))
