"""Spatially separated depthwise convolution blocks and their verification.

The block under study replaces a large k x k depthwise convolution with a
2x2 depthwise convolution followed by a 1xk / kx1 separated pair, cutting
MACs and parameters from k^2 per channel-pixel to 4 + 2k while growing the
receptive field to k+1. The even 2x2 kernel needs single-sided padding, whose
half-pixel drift is cancelled across layers by a four-direction schedule.

Modules: ``tensor`` (rank-4 arrays), ``padding`` (direction schedules),
``conv`` (depthwise forward/backward plus the naive oracle), ``blocks``
(variant composition, batch norm, receptive fields), ``cost`` (analytic MACs
and params), ``verify`` (gradient checks, equivalence, shift tracing),
``bench`` (CPU timing), ``train_toy`` (end-to-end smoke test), ``cli``.
"""

from .blocks import (
    Activation,
    BatchNormParams,
    BlockSpec,
    BlockState,
    BlockVariant,
    block_backward,
    block_forward,
    effective_kernel,
    init_block,
    receptive_field,
)
from .conv import ConvGeom, DepthwiseWeights, dw_backward_input, dw_backward_weights, dw_forward, naive_reference
from .cost import CostReport, LayerConfig, analyze_network, layer_cost, ratio_basic, ratio_downsample
from .padding import (
    GROUPED_ORIGINAL,
    PadDirection,
    PaddingSchedule,
    grouped_original_pad,
    improved_schedule,
    net_offset,
    same_pad,
)
from .tensor import PadSpec, Tensor4, centroid, crop, impulse, max_abs_diff, pad, zeros
from .verify import equivalence_check, grad_check, mac_count, shift_trace

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "BatchNormParams",
    "BlockSpec",
    "BlockState",
    "BlockVariant",
    "ConvGeom",
    "CostReport",
    "DepthwiseWeights",
    "GROUPED_ORIGINAL",
    "LayerConfig",
    "PadDirection",
    "PadSpec",
    "PaddingSchedule",
    "Tensor4",
    "analyze_network",
    "block_backward",
    "block_forward",
    "centroid",
    "crop",
    "dw_backward_input",
    "dw_backward_weights",
    "dw_forward",
    "effective_kernel",
    "equivalence_check",
    "grad_check",
    "grouped_original_pad",
    "impulse",
    "improved_schedule",
    "init_block",
    "layer_cost",
    "mac_count",
    "max_abs_diff",
    "naive_reference",
    "net_offset",
    "pad",
    "ratio_basic",
    "ratio_downsample",
    "receptive_field",
    "same_pad",
    "shift_trace",
    "zeros",
]
