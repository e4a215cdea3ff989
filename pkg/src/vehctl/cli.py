"""
Command-line entry point.

Usage:
    vehctl simulate --config configs/nominal.cfg --out runs/nominal
    vehctl compare --config configs/compare.cfg --out runs/compare --workers 3
    vehctl estimate-test --input signal.csv --out runs/estimates
    vehctl gen-track --config configs/nominal.cfg --out runs/track
    vehctl --print-config

Exit codes: 0 success, 1 configuration or usage error, 2 simulation fault.
"""

import argparse
import os
import sys
from pathlib import Path

import pandas as pd

from vehctl import __version__
from vehctl.config import dump_config, load_config
from vehctl.errors import ConfigError, VehctlError
from vehctl.estimation import estimate_frame
from vehctl.harness import (
    ScenarioConfig,
    build_reference,
    compare_controllers,
    read_telemetry,
    run_scenario,
    write_run,
)
from vehctl.reporting import Reporter, emit_plot_data

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAULT = 2

OUT_ENV = "VEHCTL_OUT"
DEFAULT_OUT = "runs"


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"Error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", "-c",
        type=Path,
        default=argparse.SUPPRESS,
        help="Scenario config file (default: built-in defaults)"
    )
    common.add_argument(
        "--out", "-o",
        type=Path,
        default=argparse.SUPPRESS,
        help=f"Output directory (default: ${OUT_ENV} or '{DEFAULT_OUT}')"
    )
    common.add_argument(
        "--seed", "-s",
        type=int,
        default=argparse.SUPPRESS,
        help="Override the scenario seed"
    )
    common.add_argument(
        "--verbose", "-v",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Print progress while simulating"
    )
    common.add_argument(
        "--print-config",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Print the effective configuration and exit"
    )
    return common


def build_parser() -> ArgumentParser:
    common = _common_options()
    parser = ArgumentParser(
        prog="vehctl",
        description="Vehicle trajectory tracking: flatness-based and model-free control",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", parser_class=ArgumentParser)

    commands.add_parser(
        "simulate", parents=[common],
        help="Run one closed-loop scenario",
    )
    compare = commands.add_parser(
        "compare", parents=[common],
        help="Run every controller against every plant variant",
    )
    compare.add_argument(
        "--workers", "-w",
        type=int,
        default=None,
        help="Parallel worker processes (default: [compare] workers)"
    )
    estimate = commands.add_parser(
        "estimate-test", parents=[common],
        help="Run the algebraic estimators over a recorded signal",
    )
    estimate.add_argument(
        "--input", "-i",
        type=Path,
        required=True,
        help="CSV with columns t, y and optionally u"
    )
    commands.add_parser(
        "gen-track", parents=[common],
        help="Write the reference trajectory",
    )
    return parser


def _effective_config(args: argparse.Namespace) -> ScenarioConfig:
    config_path = getattr(args, "config", None)
    config = load_config(config_path) if config_path is not None else ScenarioConfig()
    seed = getattr(args, "seed", None)
    if seed is not None:
        try:
            config = config.with_seed(seed)
        except VehctlError as e:
            raise ConfigError(f"--seed: {e}") from e
    return config


def _out_dir(args: argparse.Namespace) -> Path:
    out = getattr(args, "out", None)
    if out is not None:
        return out
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


# =============================================================================
# Subcommands
# =============================================================================

def cmd_simulate(config: ScenarioConfig, out_dir: Path, verbose: bool) -> int:
    reference = build_reference(config)
    Reporter.print_scenario(config, reference)
    result = run_scenario(config, reference=reference, verbose=verbose)
    write_run(result, out_dir)
    emit_plot_data(result.telemetry, out_dir / "plots")
    Reporter.print_metrics(result.metrics)
    print(f"Artifacts: {out_dir}")
    if not result.metrics.completed:
        print(f"Error: simulation ended early ({result.metrics.status})")
        return EXIT_FAULT
    return EXIT_OK


def cmd_compare(
    config: ScenarioConfig, out_dir: Path, workers: int | None, verbose: bool
) -> int:
    table = compare_controllers(config, workers=workers, out_dir=out_dir, verbose=verbose)
    out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_dir / "comparison.csv", index=False)
    Reporter.print_comparison(table)
    print(f"Comparison table: {out_dir / 'comparison.csv'}")
    return EXIT_OK


def cmd_estimate_test(config: ScenarioConfig, input_path: Path, out_dir: Path) -> int:
    if not input_path.exists():
        raise ConfigError("input not found", str(input_path))
    try:
        frame = read_telemetry(input_path)
        estimates = estimate_frame(frame, config.estimator)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
        raise ConfigError(f"unreadable input: {e}", str(input_path)) from e
    out_dir.mkdir(parents=True, exist_ok=True)
    estimates.to_csv(out_dir / "estimates.csv", index=False)
    print(f"Rows:               {len(estimates):,}")
    print(f"Window span:        {config.estimator.span} s")
    print(f"Estimates:          {out_dir / 'estimates.csv'}")
    return EXIT_OK


def cmd_gen_track(config: ScenarioConfig, out_dir: Path) -> int:
    reference = build_reference(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    reference.to_frame().to_csv(out_dir / "reference.csv", index=False)
    Reporter.print_track(reference)
    print(f"Reference: {out_dir / 'reference.csv'}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG

    try:
        config = _effective_config(args)
        if getattr(args, "print_config", False):
            print(dump_config(config), end="")
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("Error: a subcommand is required", file=sys.stderr)
            return EXIT_CONFIG

        out_dir = _out_dir(args)
        verbose = getattr(args, "verbose", False)
        if args.command == "simulate":
            return cmd_simulate(config, out_dir, verbose)
        if args.command == "compare":
            return cmd_compare(config, out_dir, args.workers, verbose)
        if args.command == "estimate-test":
            return cmd_estimate_test(config, args.input, out_dir)
        return cmd_gen_track(config, out_dir)
    except VehctlError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
