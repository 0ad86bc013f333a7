# app/main.py

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from app.core.config import get_settings
from app.core.errors import ExitCode, UnmixError

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    from app.cli import benchmark, unmix

    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="python -m app.main",
        description=f"{settings.PROJECT_NAME} {settings.VERSION}: simplex-constrained abundance estimation"
    )
    parser.add_argument("--log-level", type=str.upper, default=None,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-json", action="store_true", help="JSON log lines on stderr")
    subparsers = parser.add_subparsers(dest="command", required=True)
    unmix.add_parser(subparsers)
    benchmark.add_parser(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Exit codes: 0 success, 1 input or configuration error, 2 numerical failure."""
    try:
        settings = get_settings()
    except ValidationError as e:
        print(f"invalid settings: {e}", file=sys.stderr)
        return ExitCode.INPUT_ERROR

    # services read settings at import time, so they load after validation
    from app.services.logging import setup_logging

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return ExitCode.SUCCESS if e.code == 0 else ExitCode.INPUT_ERROR

    setup_logging(settings, level=args.log_level, json_console=args.log_json or None)
    try:
        return args.handler(args)
    except UnmixError as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return e.exit_code
    except Exception:
        logger.exception("Unexpected failure")
        return ExitCode.NUMERICAL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
