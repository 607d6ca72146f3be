"""Analytic multiply-accumulate and parameter accounting.

Costs cover the depthwise convolutions only: batch normalization, activation,
and bias terms are excluded, matching the usual mobile-CNN accounting.
Stride-2 layers use exact ceil-division SAME output dims, so odd input sizes
are counted correctly and the analytic numbers agree with an instrumented
loop count exactly.

FLOPs are reported as 2x MACs. Reference totals bundled with network configs
carry their own convention tag, since published numbers in this area usually
count a multiply-add once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .blocks import BlockVariant


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class LayerConfig:
    """One depthwise layer to be costed: variant, kernel, channels, input
    spatial dims, and stride."""

    name: str
    variant: BlockVariant
    k: int
    c: int
    h: int
    w: int
    stride: int = 1

    def __post_init__(self) -> None:
        if min(self.c, self.h, self.w) < 1:
            raise ValueError(f"dims must be positive: c={self.c}, h={self.h}, w={self.w}")
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 1, got {self.k}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if self.variant is BlockVariant.XSEP_DOWNSAMPLE and self.stride != 2:
            raise ValueError("downsampling variant requires stride 2")
        if (
            self.variant
            in (BlockVariant.XSEP, BlockVariant.XSEP_NO_2X2, BlockVariant.XSEP_BEHIND, BlockVariant.XSEP_PARALLEL)
            and self.stride != 1
        ):
            raise ValueError(f"{self.variant.value} requires stride 1")


@dataclass(frozen=True)
class CostReport:
    """MACs and parameter count, optionally relative to a baseline."""

    macs: int
    params: int
    baseline_macs: int | None = None
    baseline_params: int | None = None

    @property
    def flops(self) -> int:
        return 2 * self.macs

    @property
    def ratio(self) -> float | None:
        if not self.baseline_macs:  # undefined without a baseline or against zero work
            return None
        return self.macs / self.baseline_macs

    def against(self, baseline: "CostReport") -> "CostReport":
        return CostReport(self.macs, self.params, baseline.macs, baseline.params)


def layer_cost(cfg: LayerConfig) -> CostReport:
    """Analytic conv MACs and parameters for one block variant.

    Per output position each kernel tap costs one MAC, zero-padding taps
    included, which is what SAME-padding cost formulas assume.
    """
    k, c, h, w = cfg.k, cfg.c, cfg.h, cfg.w
    oh, ow = _ceil_div(h, cfg.stride), _ceil_div(w, cfg.stride)
    v = cfg.variant
    if v is BlockVariant.VANILLA_DW:
        macs = k * k * oh * ow * c
        params = k * k * c
    elif v in (BlockVariant.XSEP, BlockVariant.XSEP_BEHIND, BlockVariant.XSEP_PARALLEL):
        macs = (4 + 2 * k) * h * w * c
        params = (4 + 2 * k) * c
    elif v is BlockVariant.XSEP_NO_2X2:
        macs = 2 * k * h * w * c
        params = 2 * k * c
    elif v is BlockVariant.XSEP_DOWNSAMPLE:
        # width-first staging: 2x2 at full res, 1xk halves width, kx1 halves height
        macs = 4 * h * w * c + k * h * ow * c + k * oh * ow * c
        params = (4 + 2 * k) * c
    else:
        raise ValueError(f"unknown variant {v!r}")
    return CostReport(macs=macs, params=params)


def ratio_basic(k: int) -> Fraction:
    """Cost (and parameter) ratio of the separated block to a vanilla k x k
    depthwise layer at stride 1: (4 + 2k) / k^2, exact."""
    if k < 1:
        raise ValueError(f"kernel size must be >= 1, got {k}")
    return Fraction(4 + 2 * k, k * k)


def ratio_downsample(k: int) -> Fraction:
    """Cost ratio of the downsampling block to a vanilla stride-2 k x k
    depthwise layer: (16 + 3k) / k^2, exact."""
    if k < 1:
        raise ValueError(f"kernel size must be >= 1, got {k}")
    return Fraction(16 + 3 * k, k * k)


def downsample_recommended(k: int) -> bool:
    """Replacing a stride-2 depthwise layer only saves work when the ratio
    drops below 1, i.e. for kernels of 7 and up (odd sizes in practice)."""
    return ratio_downsample(k) < 1


# --------------------------------------------------------------------------
# Whole-network accounting


@dataclass(frozen=True)
class NetworkLayer:
    """One entry of a network config: either a depthwise layer costed by this
    module, or an opaque layer whose MACs/params were precomputed."""

    name: str
    kind: str  # "dw" | "opaque"
    c: int
    stride: int = 1
    variant: BlockVariant = BlockVariant.VANILLA_DW
    k: int = 3
    opaque_macs: int = 0
    opaque_params: int = 0


@dataclass(frozen=True)
class NetworkConfig:
    input_dims: tuple[int, int, int]  # (c, h, w)
    layers: tuple[NetworkLayer, ...]
    reference: dict | None = None  # reported totals plus their counting convention


class ConfigError(ValueError):
    """Malformed network config; message names the offending layer/field."""


def _require(obj: dict, field: str, ctx: str):
    if field not in obj:
        raise ConfigError(f"{ctx}: missing field {field!r}")
    return obj[field]


def network_config_from_dict(obj: dict) -> NetworkConfig:
    input_dims = _require(obj, "input", "config")
    if not (isinstance(input_dims, list) and len(input_dims) == 3):
        raise ConfigError(f"config: field 'input' must be [c, h, w], got {input_dims!r}")
    layers = []
    for i, entry in enumerate(_require(obj, "layers", "config")):
        ctx = f"layer {i} ({entry.get('name', '?')})"
        kind = _require(entry, "kind", ctx)
        if kind not in ("dw", "opaque"):
            raise ConfigError(f"{ctx}: field 'kind' must be 'dw' or 'opaque', got {kind!r}")
        name = _require(entry, "name", ctx)
        c = int(_require(entry, "c", ctx))
        stride = int(entry.get("stride", 1))
        if stride not in (1, 2):
            raise ConfigError(f"{ctx}: field 'stride' must be 1 or 2, got {stride}")
        if kind == "dw":
            k = int(_require(entry, "k", ctx))
            try:
                variant = BlockVariant(entry.get("variant", "vanilla_dw"))
            except ValueError as e:
                raise ConfigError(f"{ctx}: field 'variant': {e}") from e
            layers.append(
                NetworkLayer(name=name, kind="dw", c=c, stride=stride, variant=variant, k=k)
            )
        else:
            layers.append(
                NetworkLayer(
                    name=name,
                    kind="opaque",
                    c=c,
                    stride=stride,
                    opaque_macs=int(entry.get("opaque_macs", 0)),
                    opaque_params=int(entry.get("opaque_params", 0)),
                )
            )
    return NetworkConfig(
        input_dims=tuple(int(d) for d in input_dims),  # type: ignore[arg-type]
        layers=tuple(layers),
        reference=obj.get("reference"),
    )


def load_network_config(path: Path | str) -> NetworkConfig:
    p = Path(path)
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: not valid JSON: {e}") from e
    return network_config_from_dict(obj)


@dataclass(frozen=True)
class LayerAnalysis:
    name: str
    kind: str
    baseline_variant: str
    substituted_variant: str
    baseline: CostReport
    substituted: CostReport


@dataclass(frozen=True)
class NetworkAnalysis:
    per_layer: tuple[LayerAnalysis, ...]
    baseline_macs: int
    baseline_params: int
    substituted_macs: int
    substituted_params: int

    @property
    def macs_saving(self) -> float:
        return 1.0 - self.substituted_macs / self.baseline_macs

    @property
    def params_saving(self) -> float:
        return 1.0 - self.substituted_params / self.baseline_params


def analyze_network(
    config: NetworkConfig, substitute_variant: BlockVariant = BlockVariant.XSEP
) -> NetworkAnalysis:
    """Cost the network as configured and under the replacement policy.

    Policy: stride-1 vanilla depthwise layers with k >= 5 become the
    substitute variant - keeping their kernel in the middle of the network,
    dropping to k=3 after the last downsampling layer; stride-2 layers are
    replaced by the downsampling variant only when k >= 7. Everything else,
    opaque entries included, is carried through unchanged.
    """
    if substitute_variant not in (
        BlockVariant.XSEP,
        BlockVariant.XSEP_NO_2X2,
        BlockVariant.XSEP_BEHIND,
        BlockVariant.XSEP_PARALLEL,
    ):
        raise ValueError(f"cannot substitute with variant {substitute_variant.value}")
    c, h, w = config.input_dims
    last_down = max(
        (i for i, layer in enumerate(config.layers) if layer.stride == 2), default=-1
    )
    per_layer = []
    base_macs = base_params = sub_macs = sub_params = 0
    for i, layer in enumerate(config.layers):
        if layer.kind == "opaque":
            rep = CostReport(layer.opaque_macs, layer.opaque_params)
            analysis = LayerAnalysis(layer.name, "opaque", "opaque", "opaque", rep, rep.against(rep))
        else:
            if layer.c != c:
                raise ConfigError(
                    f"layer {i} ({layer.name}): inconsistent dim flow: expects {layer.c} channels, "
                    f"network carries {c}"
                )
            base_cfg = LayerConfig(layer.name, layer.variant, layer.k, layer.c, h, w, layer.stride)
            baseline = layer_cost(base_cfg)
            sub_cfg = base_cfg
            if layer.variant is BlockVariant.VANILLA_DW:
                if layer.stride == 2 and downsample_recommended(layer.k):
                    sub_cfg = LayerConfig(
                        layer.name, BlockVariant.XSEP_DOWNSAMPLE, layer.k, layer.c, h, w, 2
                    )
                elif layer.stride == 1 and layer.k >= 5:
                    new_k = 3 if i > last_down else layer.k
                    sub_cfg = LayerConfig(
                        layer.name, substitute_variant, new_k, layer.c, h, w, 1
                    )
            substituted = layer_cost(sub_cfg).against(baseline)
            analysis = LayerAnalysis(
                layer.name, "dw", base_cfg.variant.value, sub_cfg.variant.value, baseline, substituted
            )
        per_layer.append(analysis)
        base_macs += analysis.baseline.macs
        base_params += analysis.baseline.params
        sub_macs += analysis.substituted.macs
        sub_params += analysis.substituted.params
        c = layer.c
        h, w = _ceil_div(h, layer.stride), _ceil_div(w, layer.stride)
    return NetworkAnalysis(
        per_layer=tuple(per_layer),
        baseline_macs=base_macs,
        baseline_params=base_params,
        substituted_macs=sub_macs,
        substituted_params=sub_params,
    )
