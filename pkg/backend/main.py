"""
Admission Mortality Forecast - command-line entry point

Commands: synth, train, evaluate, score, importance, baseline-fit, describe.
Exit codes: 0 ok, 1 usage, 2 data or configuration error, 3 internal error.
"""

# Standard library imports
import argparse
import logging
import sys
import time
from typing import List, Optional

# Third-party imports
from dotenv import load_dotenv
from rich.console import Console

# Local application imports
from commands import COMMAND_MODULES
from commands.common import common_arguments
from models import CommandResult
from mortality import __version__
from mortality.base_config import get_settings, log_activity, log_error, setup_logging
from mortality.errors import (
    BundleIntegrityError,
    BundleVersionError,
    ConfigError,
    DataError,
    LockError,
    ModelError,
    UnsupportedModelError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

USAGE_ERRORS = (UnsupportedModelError, LockError)
DATA_ERRORS = (DataError, ConfigError, ModelError, BundleVersionError, BundleIntegrityError)


class ForecastArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; here usage errors are 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = ForecastArgumentParser(
        prog="mortality-forecast",
        description="One-year mortality forecast at hospital admission",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=ForecastArgumentParser)
    parent = common_arguments()
    for module in COMMAND_MODULES:
        module.register(subparsers, parent)
    return parser


def exit_code_for(error: Exception) -> int:
    if isinstance(error, USAGE_ERRORS):
        return EXIT_USAGE
    if isinstance(error, DATA_ERRORS):
        return EXIT_DATA
    return EXIT_INTERNAL


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    settings = get_settings()
    setup_logging(settings, quiet=args.quiet)
    errors = Console(stderr=True, highlight=False)

    start_time = time.time()
    try:
        result: CommandResult = args.handler(args, settings)
    except KeyboardInterrupt:
        errors.print("interrupted", style="yellow")
        return EXIT_INTERNAL
    except Exception as e:
        code = exit_code_for(e)
        if code == EXIT_INTERNAL:
            logger.exception(f"❌ {args.command} failed with an internal error")
        else:
            logger.debug(f"{args.command} failed: {e}")
        log_error("CLI", args.command, e, {"exit_code": code})
        errors.print(f"error: {e}", style="red", markup=False)
        for note in getattr(e, "__notes__", []):
            errors.print(f"  ({note})", markup=False)
        return code

    result.processing_time_seconds = round(time.time() - start_time, 3)
    log_activity("CLI", f"Command: {args.command}", result.model_dump(mode="json"))
    logger.info(f"✅ {args.command} completed in {result.processing_time_seconds:.2f}s")
    return EXIT_OK


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
