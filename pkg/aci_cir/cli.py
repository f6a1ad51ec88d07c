"""aci-cir command-line entry point"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from . import __version__
from .config.settings import Settings, settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_UNEXPECTED = 2


def get_settings() -> Settings:
    """Process-wide settings"""
    return settings


def build_parser() -> argparse.ArgumentParser:
    """Parser with every verb registered"""
    from .tools import experiment as experiment_tools
    from .tools import plotting as plotting_tools
    from .tools import validation as validation_tools

    parser = argparse.ArgumentParser(
        prog="aci-cir",
        description="Assimilative causal inference and causal influence ranges for conditional Gaussian systems",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="Logging level (default: ACI_LOG_LEVEL or INFO)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    experiment_tools.register_tools(subparsers, get_settings)
    validation_tools.register_tools(subparsers, get_settings)
    plotting_tools.register_tools(subparsers, get_settings)
    return parser


def exit_code(response: dict) -> int:
    if response.get("success"):
        return EXIT_OK
    if response.get("details", {}).get("unexpected"):
        return EXIT_UNEXPECTED
    return EXIT_FAILED


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr)
    logger.info(f"aci-cir v{__version__}: {args.command}")

    response = args.handler(args)
    if not response.get("success"):
        logger.error(f"{args.command} failed: {response.get('error')}")
    print(json.dumps(response, indent=2, default=str))
    return exit_code(response)


if __name__ == "__main__":
    sys.exit(main())
