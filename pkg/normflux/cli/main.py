"""
Command-line entry point.

    python -m normflux <generate|train|finetune|score|evaluate|benchmark>
        [--config FILE] [--set key=value]... [--seed N] --out DIR

Exit codes: 0 success, 2 configuration error, 3 data or file-system error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from ..config import configure_logging
from ..errors import ConfigError, DataError, NormfluxError, NumericError
from .commands import COMMANDS
from .run_config import load_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="normflux",
        description="Multi-modal VAE normative modelling: generate, train, score and evaluate.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        sub = subparsers.add_parser(name, help=(func.__doc__ or "").strip().split("\n")[0])
        sub.add_argument("--config", type=Path, default=None, help="Flat key = value config file")
        sub.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override a config key (repeatable)",
        )
        sub.add_argument("--seed", type=int, default=None, help="Override the seed")
        sub.add_argument("--out", type=Path, required=True, help="Output directory")
        sub.add_argument("--log-level", default=None, help="Logging level (default NORMFLUX_LOG_LEVEL)")
    return parser


def exit_code_for(error: BaseException) -> Optional[int]:
    """Stable exit code for a failure, or None when it is not a handled kind."""
    if isinstance(error, NormfluxError):
        return error.exit_code
    if isinstance(error, ValidationError):
        return ConfigError.exit_code
    if isinstance(error, OSError):
        return DataError.exit_code
    if isinstance(error, (np.linalg.LinAlgError, FloatingPointError)):
        return NumericError.exit_code
    return None


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level.upper() if args.log_level else None)
    try:
        config = load_run_config(args.config, args.overrides, args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](config, args.out)
    except Exception as e:
        code = exit_code_for(e)
        if code is None:
            logger.exception(f"{args.command} failed unexpectedly")
            raise
        logger.error(f"{args.command} failed: {e}")
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
