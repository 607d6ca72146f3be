"""Command-line harness.

Subcommands: analyze (network cost accounting), ratios (replacement cost
ratios over a kernel-size range), verify (oracle suites), bench (CPU micro
benchmark), train-toy (end-to-end training smoke test), and shift (trace a
padding schedule from a JSON file).

Exit codes are a stable contract: 0 success, 1 verification or assertion
failure, 2 usage error. CSV and JSON outputs are byte-stable for fixed seeds
(bench timing values excepted).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .bench import MIN_REPS, run_bench
from .blocks import BlockVariant
from .cost import ConfigError, NetworkAnalysis, analyze_network, load_network_config, ratio_basic, ratio_downsample
from .padding import schedule_from_json
from .train_toy import train
from .verify import SUITES, run_suites, shift_trace

USAGE_ERROR = 2
CHECK_FAILED = 1


def _write_csv(path: Path | None, header: list[str], rows: list[list]) -> None:
    def emit(stream):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)

    if path is None:
        emit(sys.stdout)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            emit(fh)


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_analyze(config_path: Path, out_csv: Path | None, variant: str = "xsep") -> int:
    try:
        substitute = BlockVariant(variant)
    except ValueError:
        print(f"error: unknown variant {variant!r}", file=sys.stderr)
        return USAGE_ERROR
    if not Path(config_path).exists():
        print(f"error: config file not found: {config_path}", file=sys.stderr)
        return USAGE_ERROR
    try:
        config = load_network_config(config_path)
        analysis = analyze_network(config, substitute)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    rows = []
    for layer in analysis.per_layer:
        rows.append(
            [
                layer.name,
                layer.baseline.macs,
                layer.substituted.macs,
                layer.baseline.params,
                layer.substituted.params,
                _fmt(layer.substituted.ratio if layer.substituted.ratio is not None else 1.0),
            ]
        )
    rows.append(
        [
            "TOTAL",
            analysis.baseline_macs,
            analysis.substituted_macs,
            analysis.baseline_params,
            analysis.substituted_params,
            _fmt(analysis.substituted_macs / analysis.baseline_macs),
        ]
    )
    _write_csv(out_csv, ["layer", "baseline_macs", "xsep_macs", "baseline_params", "xsep_params", "ratio"], rows)
    _print_analysis_summary(analysis)
    return 0


def _print_analysis_summary(analysis: NetworkAnalysis) -> None:
    print(f"baseline:    {analysis.baseline_macs} MACs, {analysis.baseline_params} params")
    print(f"substituted: {analysis.substituted_macs} MACs, {analysis.substituted_params} params")
    print(
        f"savings:     {100 * analysis.macs_saving:.2f}% MACs, "
        f"{100 * analysis.params_saving:.2f}% params"
    )


def cmd_ratios(k_min: int, k_max: int, out_csv: Path | None) -> int:
    if not (1 <= k_min <= k_max <= 31):
        print(f"error: need 1 <= k_min <= k_max <= 31, got [{k_min}, {k_max}]", file=sys.stderr)
        return USAGE_ERROR
    rows = []
    for k in range(k_min, k_max + 1):
        basic = ratio_basic(k)
        down = ratio_downsample(k)
        rows.append(
            [
                k,
                _fmt(basic),
                _fmt(down),
                "true" if basic < 1 else "false",
                "true" if down < 1 else "false",
            ]
        )
    _write_csv(
        out_csv,
        ["k", "ratio_basic", "ratio_downsample", "recommend_basic", "recommend_downsample"],
        rows,
    )
    return 0


def cmd_verify(suite: str, seed: int, out_json: Path | None = None) -> int:
    if suite == "all":
        names = list(SUITES)
    elif suite in SUITES:
        names = [suite]
    else:
        print(f"error: unknown suite {suite!r} (choose from all, {', '.join(SUITES)})", file=sys.stderr)
        return USAGE_ERROR
    summary = run_suites(names, seed)
    text = json.dumps(summary, indent=2, sort_keys=True)
    print(text)
    if out_json is not None:
        Path(out_json).write_text(text + "\n", encoding="utf-8")
    if not summary["passed"]:
        failed = [name for name, r in summary["suites"].items() if not r["passed"]]
        print(f"FAILED suites: {', '.join(failed)}", file=sys.stderr)
        return CHECK_FAILED
    return 0


def cmd_bench(
    variants: list[str],
    k: int,
    dims_text: str,
    reps: int,
    out_csv: Path | None,
    *,
    parallel: int = 0,
    dtype: str = "float64",
    seed: int = 0,
) -> int:
    if reps < MIN_REPS:
        print(f"error: reps below minimum ({MIN_REPS})", file=sys.stderr)
        return USAGE_ERROR
    try:
        dims = tuple(int(d) for d in dims_text.lower().split("x"))
        if len(dims) != 4 or any(d < 1 for d in dims):
            raise ValueError
    except ValueError:
        print(f"error: dims must look like 1x16x32x32, got {dims_text!r}", file=sys.stderr)
        return USAGE_ERROR
    seen = []
    for name in variants:
        if name in seen:
            print(f"warning: duplicate variant {name!r} ignored", file=sys.stderr)
            continue
        seen.append(name)
    try:
        parsed = [BlockVariant(name) for name in seen]
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    results = run_bench(parsed, k, dims, reps, parallel=parallel, dtype=dtype, seed=seed)  # type: ignore[arg-type]
    rows = [
        [r.variant, r.k, r.dims_str, r.median_ns, r.macs, _fmt(r.gmacs_per_s), r.reps, r.warmup]
        for r in results
    ]
    _write_csv(
        out_csv,
        ["variant", "k", "dims", "median_ns", "macs", "gmacs_per_s", "reps", "warmup"],
        rows,
    )
    by_name = {r.variant: r for r in results}
    if "xsep" in by_name and "vanilla_dw" in by_name:
        ratio = by_name["xsep"].median_ns / by_name["vanilla_dw"].median_ns
        print(f"time ratio xsep/vanilla_dw: {ratio:.3f}")
    return 0


def cmd_train_toy(epochs: int, seed: int, variant: str, out_csv: Path | None) -> int:
    if epochs < 1:
        print("error: epochs must be >= 1", file=sys.stderr)
        return USAGE_ERROR
    try:
        block_variant = BlockVariant(variant)
    except ValueError:
        print(f"error: unknown variant {variant!r}", file=sys.stderr)
        return USAGE_ERROR
    try:
        history = train(epochs, seed, block_variant)
    except FloatingPointError as e:
        print(f"error: {e}", file=sys.stderr)
        return CHECK_FAILED
    rows = [
        [h.epoch, _fmt(h.train_loss), _fmt(h.train_accuracy), _fmt(h.test_loss), _fmt(h.test_accuracy)]
        for h in history
    ]
    _write_csv(out_csv, ["epoch", "train_loss", "train_accuracy", "test_loss", "test_accuracy"], rows)
    first, last = history[0], history[-1]
    print(
        f"train loss {first.train_loss:.4f} -> {last.train_loss:.4f}, "
        f"test accuracy {last.test_accuracy:.3f}"
    )
    if not last.train_loss < first.train_loss:
        print("error: training did not reduce the loss", file=sys.stderr)
        return CHECK_FAILED
    return 0


def cmd_shift(schedule_path: Path, layers: int | None, dims_text: str | None) -> int:
    if not Path(schedule_path).exists():
        print(f"error: schedule file not found: {schedule_path}", file=sys.stderr)
        return USAGE_ERROR
    try:
        schedule = schedule_from_json(Path(schedule_path).read_text(encoding="utf-8"))
    except (ValueError, KeyError) as e:
        print(f"error: malformed schedule: {e}", file=sys.stderr)
        return USAGE_ERROR
    n_layers = layers if layers is not None else len(schedule)
    if dims_text is None:
        side = max(32, 2 * n_layers + 5)
        dims = (1, 4, side, side)
    else:
        try:
            dims = tuple(int(d) for d in dims_text.lower().split("x"))
            if len(dims) != 4:
                raise ValueError
        except ValueError:
            print(f"error: dims must look like 1x4x32x32, got {dims_text!r}", file=sys.stderr)
            return USAGE_ERROR
    try:
        report = shift_trace(schedule, n_layers, dims)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return CHECK_FAILED
    print(
        json.dumps(
            {
                "start": list(report.start),
                "centroids": [list(c) for c in report.centroids],
                "final_offset": list(report.final_offset),
                "predicted_offset": list(report.predicted_offset),
                "prediction_gap": report.prediction_gap,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xsepconv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="cost a network config, baseline vs substituted")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="per-layer CSV path (default stdout)")
    p.add_argument("--variant", default="xsep", help="substitute variant (default xsep)")

    p = sub.add_parser("ratios", help="replacement cost ratios over a kernel range")
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=9)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("verify", help="run oracle suites")
    p.add_argument("--suite", default="all", help="all|grad|equiv|shift|cost")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="also write the JSON summary here")

    p = sub.add_parser("bench", help="CPU micro-benchmark of the conv stacks")
    p.add_argument("--variant", action="append", default=None,
                   help="repeatable; defaults to vanilla_dw and xsep")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--dims", default="1x16x48x48")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--parallel", type=int, default=0, help="channel-parallel worker count")
    p.add_argument("--dtype", choices=["float64", "float32"], default="float64")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-toy", help="train the oriented-bar toy classifier")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", default="xsep", help="xsep or xsep_no_2x2")
    p.add_argument("--out", type=Path, default=Path("train_toy.csv"))

    p = sub.add_parser("shift", help="trace a padding schedule from JSON")
    p.add_argument("--schedule", type=Path, required=True)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--dims", default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "analyze":
        return cmd_analyze(args.config, args.out, args.variant)
    if args.command == "ratios":
        return cmd_ratios(args.k_min, args.k_max, args.out)
    if args.command == "verify":
        return cmd_verify(args.suite, args.seed, args.out)
    if args.command == "bench":
        variants = args.variant if args.variant else ["vanilla_dw", "xsep"]
        return cmd_bench(
            variants, args.k, args.dims, args.reps, args.out,
            parallel=args.parallel, dtype=args.dtype, seed=args.seed,
        )
    if args.command == "train-toy":
        return cmd_train_toy(args.epochs, args.seed, args.variant, args.out)
    if args.command == "shift":
        return cmd_shift(args.schedule, args.layers, args.dims)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
