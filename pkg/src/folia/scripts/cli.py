#!/usr/bin/env python3
"""
Command-line driver for folia

Usage:
    folia check-bisubmersion config/examples/cubic_pair.json
    folia algebroid-report config/examples/su2_star.json --point 1,0,0
    folia weinstein config/examples/su2_star.json --point 1,0,0 --csv paths.csv

Exit codes: 0 every verdict passes, 1 a refutation, 2 inconclusive checks,
3 usage or configuration errors.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from folia.components.expr import parse_rational
from folia.utils.errors import ConfigError, FoliaError
from folia.utils.report import EXIT_USAGE, write_csv, write_plot_data

logger = logging.getLogger(__name__)


class FoliaArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the configuration error code"""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_point(text: str):
    """'1,0,1/2' → exact coordinates"""
    try:
        return tuple(parse_rational(part) for part in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("config", help="Job config file (JSON or YAML)")
    shared.add_argument("--degree-bound", type=int, default=None, help="Polynomial degree bound D (default 8)")
    shared.add_argument("--tol", type=float, default=None, help="Residual tolerance (default 1e-6)")
    shared.add_argument("--samples", type=int, default=None, help="Sample count (default 50)")
    shared.add_argument("--seed", type=int, default=None, help="Sampling seed (default 0)")
    shared.add_argument("--output", default=None, help="Report path; stdout when omitted")
    shared.add_argument("--point", type=parse_point, default=None, help="Comma-separated rational point, e.g. 1,0,0")
    shared.add_argument("--plot-data", default=None, help="Write gnuplot-compatible columns to this path")
    shared.add_argument("--csv", default=None, help="Write A-path samples and flow traces as CSV")
    shared.add_argument("--timing", action="store_true", help="Record check timings in the report")
    shared.add_argument("--quiet", action="store_true", help="Only log warnings and errors")

    parser = FoliaArgumentParser(prog="folia", description="Checks for singular foliations, bi-submersions and Lie algebroids.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=FoliaArgumentParser)

    involutivity = commands.add_parser("check-involutivity", parents=[shared], help="Involutivity and fiber data of modules")
    involutivity.add_argument("--module", default=None, help="Only this module")
    commands.add_parser("check-bisubmersion", parents=[shared], help="Foliation and algebraic bi-submersion checks")
    holonomy = commands.add_parser("path-holonomy", parents=[shared], help="Build and verify path-holonomy bi-submersions")
    holonomy.add_argument("--module", default=None, help="Only entries built from this module")
    for name, help_text in (
        ("algebroid-report", "Kernel module, point classes and splittings"),
        ("weinstein", "Weinstein bi-submersion and its diagram checks"),
    ):
        command = commands.add_parser(name, parents=[shared], help=help_text)
        command.add_argument("--algebroid", default=None, help="Only this algebroid")
    commands.add_parser("flows-verify", parents=[shared], help="Flow identities and RK4 order checks")
    return parser


def _validate(args: argparse.Namespace) -> None:
    for flag in ("degree_bound", "samples"):
        value = getattr(args, flag)
        if value is not None and value < 1:
            raise ConfigError(f"--{flag.replace('_', '-')} must be at least 1")
    if args.seed is not None and args.seed < 0:
        raise ConfigError("--seed must be non-negative")
    if args.tol is not None and not args.tol > 0:
        raise ConfigError("--tol must be positive")


def run(args: argparse.Namespace) -> int:
    # the environment configuration raises ValueError on import
    from folia.pipeline.verification_pipeline import PipelineOptions, run_pipeline
    from folia.utils.job_config import load_job_config

    _validate(args)
    overrides = {
        "degree_bound": args.degree_bound,
        "tolerance": args.tol,
        "samples": args.samples,
        "seed": args.seed,
    }
    job = load_job_config(args.config, overrides)
    options = PipelineOptions(
        point=args.point,
        module=getattr(args, "module", None),
        algebroid=getattr(args, "algebroid", None),
        exports=bool(args.plot_data or args.csv),
        timing=args.timing,
    )
    report, blocks = run_pipeline(job, args.command, options)
    if args.output:
        report.write(args.output)
    else:
        sys.stdout.write(report.dumps())
    if args.plot_data:
        write_plot_data(args.plot_data, blocks)
    if args.csv:
        write_csv(args.csv, blocks)
    return report.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else os.getenv("FOLIA_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')
    try:
        return run(args)
    except FoliaError as e:
        print(f"folia: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"folia: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
