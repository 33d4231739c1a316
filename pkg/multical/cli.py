"""Command-line entry point."""
import argparse
import logging
import sys
from typing import List, Optional

from multical import __version__
from multical.config import Config, config
from multical.exceptions import EXIT_DOMAIN, EXIT_USAGE
from multical.handlers import calibrate, downsample, predict, simulate, stack, verify
from multical.logger import logger
from multical.middlewares.error_handler import run_guarded
from multical.storage import get_storage

HANDLERS = (simulate, downsample, stack, calibrate, predict, verify)


class UsageArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage code on bad arguments."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = UsageArgumentParser(
        prog="multical",
        description="Multi-source Bayesian calibration with GaSP and S-GaSP discrepancy",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, help="Cap on worker threads")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--storage", choices=["file", "memory"], help="Result store backend")
    parser.add_argument("--results-dir", help="Directory for file storage")
    subparsers = parser.add_subparsers(
        dest="command", required=True, parser_class=UsageArgumentParser
    )
    for module in HANDLERS:
        module.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)

    if args.log_level:
        logging.getLogger().setLevel(args.log_level)
    if args.threads is not None:
        if args.threads < 1:
            logger.error("--threads must be at least 1")
            return EXIT_USAGE
        Config.THREADS = args.threads
    if args.storage:
        Config.STORAGE_MODE = args.storage
    if args.results_dir:
        Config.RESULTS_DIR = args.results_dir

    try:
        config.validate()
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_DOMAIN

    storage = get_storage()
    logger.info(f"🔧 multical {__version__}: {args.command} (threads={config.THREADS})")
    return run_guarded(args.handler, args, storage)
