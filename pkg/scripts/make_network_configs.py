#!/usr/bin/env python3
"""Generate the bundled network configs under configs/.

The main config reconstructs MobileNetV3-Small adapted to 32x32 inputs with
10 classes: stem and first bottleneck at stride 1, all later strides as in
the original, classifier head swapped to 10 classes. Depthwise layers are
emitted as "dw" entries costed by the analyzer; everything else (pointwise
expansions/projections, squeeze-excitation FCs, stem, head, and every batch
norm's parameters) is emitted as precomputed "opaque" entries.

Counting conventions, chosen to match the usual mobile-CNN accounting:
multiply-adds counted once; batch norm, activation, and pooling contribute
no MACs; squeeze-excitation costs only its two FC layers; parameters include
conv weights, batch norm affines, and biases where layers have them.

Run from the repository root: python3 scripts/make_network_configs.py
"""

from __future__ import annotations

import json
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parent.parent / "configs"


def make_divisible(v: float, divisor: int = 8) -> int:
    new_v = max(divisor, int(v + divisor / 2) // divisor * divisor)
    if new_v < 0.9 * v:
        new_v += divisor
    return new_v


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


# (kernel, expansion, out channels, squeeze-excitation, stride)
# First bottleneck runs at stride 1 for the 32x32 adaptation.
BOTTLENECKS = [
    (3, 16, 16, True, 1),
    (3, 72, 24, False, 2),
    (3, 88, 24, False, 1),
    (5, 96, 40, True, 2),
    (5, 240, 40, True, 1),
    (5, 240, 40, True, 1),
    (5, 120, 48, True, 1),
    (5, 144, 48, True, 1),
    (5, 288, 96, True, 2),
    (5, 576, 96, True, 1),
    (5, 576, 96, True, 1),
]


def opaque(name: str, c: int, macs: int, params: int, stride: int = 1) -> dict:
    return {
        "name": name,
        "kind": "opaque",
        "c": c,
        "stride": stride,
        "opaque_macs": macs,
        "opaque_params": params,
    }


def dw(name: str, c: int, k: int, stride: int) -> dict:
    return {"name": name, "kind": "dw", "variant": "vanilla_dw", "c": c, "k": k, "stride": stride}


def mobilenetv3_small(h: int = 32, w: int = 32, classes: int = 10) -> dict:
    layers = []
    cin = 16
    layers.append(opaque("stem_3x3", 16, 3 * 3 * 3 * 16 * h * w, 3 * 3 * 3 * 16 + 2 * 16))
    for idx, (k, exp, out, se, stride) in enumerate(BOTTLENECKS, start=1):
        tag = f"b{idx}"
        if exp != cin:
            layers.append(opaque(f"{tag}_expand", exp, cin * exp * h * w, cin * exp + 2 * exp))
        layers.append(dw(f"{tag}_dw{k}x{k}", exp, k, stride))
        h, w = ceil_div(h, stride), ceil_div(w, stride)
        layers.append(opaque(f"{tag}_dw_bn", exp, 0, 2 * exp))
        if se:
            hidden = make_divisible(exp // 4)
            layers.append(
                opaque(
                    f"{tag}_se",
                    exp,
                    exp * hidden + hidden * exp,
                    exp * hidden + hidden + hidden * exp + exp,
                )
            )
        layers.append(opaque(f"{tag}_project", out, exp * out * h * w, exp * out + 2 * out))
        cin = out
    layers.append(opaque("conv_1x1_576", 576, cin * 576 * h * w, cin * 576 + 2 * 576))
    layers.append(opaque("global_pool", 576, 0, 0))
    layers.append(opaque("classifier_hidden", 1024, 576 * 1024, 576 * 1024 + 1024))
    layers.append(opaque("classifier_logits", classes, 1024 * classes, 1024 * classes + classes))
    return {
        "input": [3, 32, 32],
        "layers": layers,
        "reference": {
            "note": (
                "expected totals for this architecture at 32x32 input, 10 classes; "
                "checked by the cost regression tests at 10% tolerance"
            ),
            "flops_convention": "multiply-adds counted once (MACs)",
            "baseline_flops": 17_510_000,
            "substituted_flops": 16_710_000,
            "baseline_params": 1_520_000,
            "substituted_params": 1_500_000,
        },
    }


def toy_two_layer() -> dict:
    return {
        "input": [48, 16, 16],
        "layers": [
            dw("mid_dw5x5", 48, 5, 1),
            dw("down_dw5x5", 48, 5, 2),
        ],
    }


def main() -> None:
    OUT_DIR.mkdir(exist_ok=True)
    for name, cfg in [
        ("mobilenetv3_small_cifar.json", mobilenetv3_small()),
        ("toy_two_layer.json", toy_two_layer()),
    ]:
        path = OUT_DIR / name
        path.write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
