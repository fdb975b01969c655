"""Command-line experiment harness.

Subcommands::

    hoc run <config>      train a sweep from a config file, write CSVs + plot
    hoc verify            run the verification suite, write a report
    hoc plot <agg.csv>    render a learning-curve SVG from an aggregate CSV

Exit codes: 0 success, 1 check or run failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment, plotting, verify


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hoc", description="hierarchical option-critic experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a sweep from a config file")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override base_seed")
    p_run.add_argument("--runs", type=int, default=None,
                       help="override num_runs")
    p_run.add_argument("--out", type=Path, default=None,
                       help="override output directory")
    p_run.add_argument("--parallel", type=int, default=1, metavar="K",
                       help="worker processes (outputs are identical "
                            "regardless)")

    p_verify = sub.add_parser("verify", help="run the verification suite")
    p_verify.add_argument("--out", type=Path, default=Path("verification"),
                          help="report directory")
    p_verify.add_argument("--quick", action="store_true",
                          help="smaller statistical sample sizes")

    p_plot = sub.add_parser("plot", help="plot an aggregate CSV")
    p_plot.add_argument("summary", type=Path)
    p_plot.add_argument("--out", type=Path, default=None,
                        help="output SVG path (default: alongside the CSV)")

    args = parser.parse_args(argv)

    if args.command == "run":
        return _cmd_run(args)
    if args.command == "verify":
        return _cmd_verify(args)
    return _cmd_plot(args)


def _cmd_run(args) -> int:
    try:
        spec = experiment.parse_config(args.config)
    except FileNotFoundError:
        print(f"error: no such config file: {args.config}", file=sys.stderr)
        return 2
    except experiment.ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return 2
    if args.seed is not None:
        spec = replace(spec, base_seed=args.seed)
    if args.runs is not None:
        spec = replace(spec, num_runs=args.runs)
    if args.out is not None:
        spec = replace(spec, output_dir=args.out)
    try:
        summary = experiment.run_experiment(spec, parallel=args.parallel)
    except OSError as exc:
        print(f"error: run failed: {exc}", file=sys.stderr)
        return 1
    plot_path = spec.output_dir / f"{spec.label}_curve.svg"
    plotting.emit_plot([summary], plot_path)
    switch = ", ".join(
        f"level {j + 1}: {rate:.4f}" for j, rate in enumerate(summary.switch_rates)
    )
    print(f"{spec.label}: {spec.num_runs} runs x {spec.episodes} episodes")
    print(f"final window mean {summary.metric}: {summary.final_mean:.3f}")
    if switch:
        print(f"option switches per step: {switch}")
    print(f"wrote {spec.output_dir}/")
    return 0


def _cmd_verify(args) -> int:
    results = verify.run_all(quick=args.quick)
    report = verify.format_report(results)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.txt").write_text(report, encoding="utf-8")
    (args.out / "residuals.csv").write_text(
        verify.residual_csv(results), encoding="utf-8"
    )
    print(report, end="")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _cmd_plot(args) -> int:
    try:
        summaries = experiment.read_aggregate_csv(args.summary)
    except FileNotFoundError:
        print(f"error: no such file: {args.summary}", file=sys.stderr)
        return 2
    if not summaries:
        print("error: aggregate CSV holds no series", file=sys.stderr)
        return 1
    out = args.out or args.summary.with_suffix(".svg")
    try:
        plotting.emit_plot(summaries, out)
    except plotting.EmptySummaryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
