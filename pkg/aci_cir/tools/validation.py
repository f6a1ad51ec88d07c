"""Acceptance-suite verb for the aci-cir command line"""

import argparse
import logging
from pathlib import Path
from typing import Any, Callable, Dict

from ..acceptance import all_gating_passed, run_validation, skipped_case_studies, validation_frame
from ..resources.artifacts import write_frame
from ..utils.errors import AciError
from ..utils.formatters import format_error_response, format_success_response

logger = logging.getLogger(__name__)

VALIDATE_DESCRIPTION = (
    "Run the core oracle checks. The long case-study checks are skipped unless "
    "--include-case-studies is given; among them the climate CIR band checks are gating, "
    "so a plain run does not establish them."
)


def register_tools(subparsers, get_settings: Callable):
    """Register the validate verb"""

    def validate_suite(args: argparse.Namespace) -> Dict[str, Any]:
        """Run the oracle suite; succeeds iff every gating check that ran holds"""
        try:
            results = run_validation(include_case_studies=args.include_case_studies)
            frame = validation_frame(results)
            skipped = skipped_case_studies(args.include_case_studies)
            report: Dict[str, Any] = {
                "checks": [
                    {
                        "name": r.name,
                        "value": r.value,
                        "bound": r.bound,
                        "passed": r.passed,
                        "gating": r.gating,
                        "detail": r.detail,
                    }
                    for r in results
                ],
                "skipped": [{"name": c.name, "gating": c.gating} for c in skipped],
            }
            skipped_gating = [c.name for c in skipped if c.gating]
            if skipped_gating:
                report["note"] = (
                    f"gating case-study checks not run: {', '.join(skipped_gating)}; "
                    "pass --include-case-studies to run them"
                )
            if args.out_dir:
                report["report"] = str(write_frame(frame, Path(args.out_dir) / "validation.csv"))
            if all_gating_passed(results):
                return format_success_response(report, "validate")
            failed = [r.name for r in results if r.gating and not r.passed]
            return format_error_response(f"acceptance checks failed: {', '.join(failed)}", "validate", report)
        except AciError as e:
            return format_error_response(str(e), "validate", {"kind": type(e).__name__})
        except Exception as e:
            logger.exception("validate failed")
            return format_error_response(f"Unexpected error: {e}", "validate", {"unexpected": True})

    validate = subparsers.add_parser(
        "validate",
        help="Run the acceptance suite (case-study checks only with --include-case-studies)",
        description=VALIDATE_DESCRIPTION,
    )
    validate.add_argument("--out-dir", help="Directory for validation.csv")
    validate.add_argument(
        "--include-case-studies",
        action="store_true",
        help="Also run the long climate and multiscale checks, including the gating climate CIR bands",
    )
    validate.set_defaults(handler=validate_suite)
