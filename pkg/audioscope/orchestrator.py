"""
AudioScope - Main Orchestrator.

Parses the command line, resolves settings, configures logging and dispatches
to the command groups; every failure becomes an exit code.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from audioscope.commands import COMMAND_GROUPS
from audioscope.config import load_settings, parse_overrides
from audioscope.middleware import handle_errors

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
EXIT_OK = 0
RESERVED = ("command", "handler", "config", "set")


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO), format=LOG_FORMAT, force=True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Flat key=value settings file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Override one setting")
    common.add_argument("--out", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--log-level", dest="log_level", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="audioscope", description="On-screen sound separation toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for group in COMMAND_GROUPS:
        group.register(subparsers, common)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    overrides: Dict[str, object] = parse_overrides(args.set)
    overrides.update({key: value for key, value in vars(args).items() if key not in RESERVED})
    return overrides


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Execute one command.

    Returns:
        0 on success, 1 on validation errors, 2 on runtime failures
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else 1

    def body() -> int:
        settings = load_settings(args.config, _overrides(args))
        configure_logging(settings.log_level)
        settings.write_resolved()
        logger.info(f"Running {args.command} with outputs in {settings.out}")
        result = args.handler(settings)
        sys.stdout.write(json.dumps(result, indent=2, sort_keys=True, default=str) + "\n")
        return EXIT_OK

    return handle_errors(args.command, body)


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(run(argv))
