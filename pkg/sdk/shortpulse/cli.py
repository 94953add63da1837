"""
Command-line entry point: ``shortpulse <scenario> --config PATH [options]``.

Exit status is 0 when every hard check passed, 1 when a hard check failed
and 2 for configuration or report-writing errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from .config import ENV_LOG_LEVEL, SCENARIOS, ExperimentConfig, apply_overrides, parse_config
from .exceptions import ConfigInvalid, ReportWriteError, ShortPulseError
from .runner import run

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shortpulse",
        description="Short-pulse approximation of the quasilinear Klein-Gordon equation: "
                    "simulations, error energies and epsilon sweeps.",
    )
    sub = parser.add_subparsers(dest="scenario", required=True)
    helps = {
        "simulate-sp": "evolve the short-pulse equation",
        "simulate-kg": "evolve the Klein-Gordon equation and check its energy balances",
        "justify": "error diagnostics for one epsilon",
        "converge": "epsilon sweep and scaling-law fits",
        "balance": "energy balance residual under stride refinement",
    }
    for name in SCENARIOS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", type=str, default=None,
                        help="YAML scenario file (defaults apply when omitted)")
        sp.add_argument("--out", type=str, default=None, help="report directory")
        sp.add_argument("--seed", type=int, default=None, help="perturbation seed")
        sp.add_argument("--threads", type=int, default=None, help="worker processes")
        sp.add_argument("--log-level", type=str, default=None,
                        help=f"logging level (default ${ENV_LOG_LEVEL} or INFO)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    level = (args.log_level or os.getenv(ENV_LOG_LEVEL) or "INFO").upper()
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        config = parse_config(args.config) if args.config else ExperimentConfig()
        config = apply_overrides(config, scenario=args.scenario, output_dir=args.out,
                                 seed=args.seed, threads=args.threads)
    except ConfigInvalid as exc:
        logger.error("invalid configuration: %s", exc)
        return 2

    try:
        manifest = run(config)
    except ReportWriteError as exc:
        logger.error("%s", exc)
        return 2
    except ShortPulseError as exc:
        logger.error("scenario %s failed: %s", config.scenario, exc)
        return 1

    for check in manifest.checks:
        logger.info("%-24s %s%s", check.name, "PASS" if check.passed else "FAIL",
                    "" if check.hard else " (soft)")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
