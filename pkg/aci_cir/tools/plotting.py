"""Plotting verb for the aci-cir command line"""

import argparse
import logging
from pathlib import Path
from typing import Any, Callable, Dict

from ..resources.plots import plot_series
from ..utils.errors import AciError
from ..utils.formatters import format_error_response, format_success_response

logger = logging.getLogger(__name__)


def register_tools(subparsers, get_settings: Callable):
    """Register the plot verb"""

    def plot_csv(args: argparse.Namespace) -> Dict[str, Any]:
        """Render CSV columns as a deterministic SVG line plot"""
        try:
            out = args.output or str(Path(args.csv).with_suffix(".svg"))
            columns = args.columns.split(",") if args.columns else None
            path = plot_series(args.csv, out, columns=columns, x=args.x, title=args.title or "")
            return format_success_response({"svg": str(path), "columns": columns or "all"}, "plot")
        except AciError as e:
            return format_error_response(str(e), "plot", {"kind": type(e).__name__})
        except Exception as e:
            logger.exception("plot failed")
            return format_error_response(f"Unexpected error: {e}", "plot", {"unexpected": True})

    plot = subparsers.add_parser("plot", help="Plot columns of a CSV artifact as SVG")
    plot.add_argument("csv", help="CSV file with a time column")
    plot.add_argument("--output", help="SVG path (default: CSV path with .svg)")
    plot.add_argument("--columns", help="Comma-separated columns (default: all numeric)")
    plot.add_argument("--x", default="t", help="Column for the horizontal axis")
    plot.add_argument("--title", help="Figure title")
    plot.set_defaults(handler=plot_csv)
