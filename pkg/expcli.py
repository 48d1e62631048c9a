"""
Reservoir Mask Workbench - Command Line
Subcommands: run, plot, report, validate-config
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from config import ExperimentConfig, setup_logging
from modules.base import ConfigurationError, UsageError, WorkbenchException
from workbench import ReservoirWorkbench


EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG_ERROR = 2

logger = logging.getLogger("expcli")


def parse_seeds(text: str) -> List[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def cmd_run(args) -> int:
    if args.resume:
        print("Error: resume is not supported; start the run again in a fresh output directory", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    try:
        workbench = ReservoirWorkbench.from_file(args.config, args.out)
        if args.workers is not None:
            workbench.config.suite.workers = args.workers
        if args.log_level:
            workbench.config.suite.log_level = args.log_level.upper()
        workbench.config.suite.validate()
        workbench.run_configs(args.seeds)
    except ConfigurationError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        workbench.prepare_output()
    except OSError as e:
        print(f"Error: output directory {workbench.out_dir} is not writable: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    with workbench:
        report = workbench.run(args.seeds)

    print(f"Report written to {workbench.report_path}")
    if report.failures:
        for result in report.failures:
            print(f"Run {result.label} seed {result.seed} failed: {result.message}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    return EXIT_OK


def cmd_plot(args) -> int:
    setup_logging(args.log_level or "INFO")
    workbench = ReservoirWorkbench(ExperimentConfig())
    try:
        path = workbench.plot(args.csvs, args.out, args.smooth)
    except (UsageError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print(f"Plot written to {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    setup_logging(args.log_level or "WARNING")
    workbench = ReservoirWorkbench(ExperimentConfig())
    try:
        report = workbench.report(args.csvs, args.threshold, args.window)
        fewer = workbench.report(args.scaling_from, args.threshold, args.window) if args.scaling_from else None
        if args.out:
            report.write_csv(args.out)
    except (UsageError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    print(f"threshold={args.threshold} window={args.window}")
    for label in report.labels():
        summary = report.summary(label)
        speedup = report.speedup(label)
        print(f"{label}: median {summary.median}, range [{summary.minimum}, {summary.maximum}], "
              f"spread {summary.spread}, converged {summary.converged}/{summary.runs}"
              + (f", speedup {speedup:.2f}" if speedup is not None else ""))

    if args.check_ordering or fewer is not None:
        problems = report.check_all(fewer)
        for problem in problems:
            print(f"Check failed: {problem}", file=sys.stderr)
        if problems:
            return EXIT_RUN_FAILURE
        print("Convergence checks passed")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    try:
        config = ExperimentConfig.from_file(args.config)
    except ConfigurationError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print(json.dumps(config.to_dict(), indent=2))
    for run in config.run_configs():
        print(f"{run.name}: {run.label}, reservoir {run.reservoir.size_for(run.layout.size)} nodes, "
              f"seeds {run.training.seeds}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Train ESN actor-critic agents with input masks "
                                                 "on a distracting bandit")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run every variant and seed of a config")
    run.add_argument("config", help="Path to the JSON experiment config")
    run.add_argument("--seeds", type=parse_seeds, default=None, help="Comma-separated seed list, e.g. 0,1,2")
    run.add_argument("--out", default=None, help="Output directory (default: suite.out_dir or $EPIC_WORKBENCH_OUT_DIR)")
    run.add_argument("--workers", type=int, default=None, help="Parallel runs")
    run.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    run.add_argument("--resume", action="store_true", help="Not supported; rejected")
    run.set_defaults(func=cmd_run)

    plot = subparsers.add_parser("plot", help="Plot smoothed learning curves into one SVG")
    plot.add_argument("csvs", nargs="+", help="Curve CSV files")
    plot.add_argument("--smooth", type=int, default=100, help="Trailing smoothing window in episodes")
    plot.add_argument("--out", default="curves.svg", help="SVG output path")
    plot.add_argument("--log-level", default=None)
    plot.set_defaults(func=cmd_plot)

    report = subparsers.add_parser("report", help="Episodes-to-threshold report over curve CSVs")
    report.add_argument("csvs", nargs="+", help="Curve CSV files")
    report.add_argument("--threshold", type=float, default=0.9)
    report.add_argument("--window", type=int, default=100)
    report.add_argument("--out", default=None, help="Optional report CSV path")
    report.add_argument("--check-ordering", action="store_true",
                        help="Exit 1 unless masks beat the baseline and EPIC beats layernorm by the expected ratios, "
                             "EPIC u lengths agree, the baseline spread exceeds EPIC's and EPIC suppresses "
                             "noise inputs below feedback")
    report.add_argument("--scaling-from", nargs="+", default=None, metavar="CSV",
                        help="Curves of the same suite with fewer distractors; also checks that EPIC's "
                             "speedup over layernorm holds up (implies --check-ordering)")
    report.add_argument("--log-level", default=None)
    report.set_defaults(func=cmd_report)

    validate = subparsers.add_parser("validate-config", help="Print the resolved config")
    validate.add_argument("config", help="Path to the JSON experiment config")
    validate.set_defaults(func=cmd_validate_config)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG_ERROR if e.code else EXIT_OK
    try:
        return args.func(args)
    except WorkbenchException as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
