"""Simulation and analysis verbs for the aci-cir command line"""

import argparse
import logging
from pathlib import Path
from typing import Any, Callable, Dict

from ..config.experiment import ExperimentConfig, load_experiment
from ..config.presets import PRESET_NAMES, load_preset
from ..causality.causal_queries import ConditioningMode
from ..dynamics.models import build_model
from ..experiment import (
    ExperimentResult,
    run_experiment,
    run_metadata,
    run_queries,
    simulate_experiment,
    write_artifacts,
)
from ..resources import artifacts
from ..utils.errors import AciError
from ..utils.formatters import format_error_response, format_series_summary, format_success_response

logger = logging.getLogger(__name__)


def add_run_options(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    """Options shared by the verbs that run an experiment"""
    parser.add_argument("--config", required=config_required, help="TOML experiment file")
    parser.add_argument("--out-dir", help="Artifact directory (overrides [output] out_dir)")
    parser.add_argument("--seed", type=int, help="Simulation seed")
    parser.add_argument("--dt", type=float, help="Simulation step")
    parser.add_argument("--lag-cap", type=int, help="Maximum smoother lag in analysis steps")
    parser.add_argument("--exact-cir", action="store_true", default=None, help="Also compute exact ε-averaged lengths")
    parser.add_argument(
        "--conditioning-mode",
        choices=[m.value for m in ConditioningMode],
        help="Conditioning mode for every query",
    )


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    return config.with_overrides(
        seed=args.seed,
        dt=args.dt,
        lag_cap=args.lag_cap,
        exact_cir=args.exact_cir,
        conditioning_mode=args.conditioning_mode,
        out_dir=args.out_dir,
    )


def _summary(result: ExperimentResult) -> Dict[str, Any]:
    return {
        "model": result.config.model.name,
        "seed": result.config.simulation.seed,
        "steps": result.trajectory.n_steps,
        "out_dir": str(result.out_dir) if result.out_dir else None,
        "artifacts": [str(p) for p in result.artifacts],
        "queries": {
            name: {"mode": qr.mode.value, **format_series_summary(qr.series.to_frame())}
            for name, qr in result.results.items()
        },
    }


def register_tools(subparsers, get_settings: Callable):
    """Register simulate, analyze and reproduce verbs"""

    def simulate_trajectory(args: argparse.Namespace) -> Dict[str, Any]:
        """Simulate the configured model and write the trajectory with its metadata"""
        try:
            config = _apply_overrides(load_experiment(args.config), args)
            out = Path(config.output.out_dir or get_settings().artifacts_dir)
            traj = simulate_experiment(config)
            path = artifacts.write_trajectory_csv(traj, out / "trajectory.csv")
            meta = artifacts.write_metadata(
                run_metadata(config, ExperimentResult(config=config, trajectory=traj)), out / artifacts.METADATA_FILE
            )
            return format_success_response(
                {"trajectory": str(path), "metadata": str(meta), "steps": traj.n_steps, "dt": traj.dt},
                "simulate",
            )
        except AciError as e:
            return format_error_response(str(e), "simulate", {"kind": type(e).__name__})
        except Exception as e:
            logger.exception("simulate failed")
            return format_error_response(f"Unexpected error: {e}", "simulate", {"unexpected": True})

    def analyze_experiment(args: argparse.Namespace) -> Dict[str, Any]:
        """Run every configured query, from a stored trajectory when one is given"""
        try:
            config = _apply_overrides(load_experiment(args.config), args)
            out = config.output.out_dir or get_settings().artifacts_dir
            if args.trajectory:
                base = build_model(config.model.name, config.model.params)
                traj = artifacts.read_trajectory_csv(
                    args.trajectory, base.observed_names, base.hidden_names
                )
                result = ExperimentResult(config=config, trajectory=traj)
                result.results = run_queries(config, traj)
                result.out_dir = Path(out)
                result.artifacts = write_artifacts(result, out)
            else:
                result = run_experiment(config, out)
            return format_success_response(_summary(result), "analyze")
        except AciError as e:
            return format_error_response(str(e), "analyze", {"kind": type(e).__name__})
        except Exception as e:
            logger.exception("analyze failed")
            return format_error_response(f"Unexpected error: {e}", "analyze", {"unexpected": True})

    def reproduce_preset(args: argparse.Namespace) -> Dict[str, Any]:
        """Run a named case-study preset"""
        try:
            config = load_preset(args.preset)
            config = _apply_overrides(config, args)
            out = config.output.out_dir or str(Path(get_settings().artifacts_dir) / args.preset)
            result = run_experiment(config, out)
            return format_success_response({"preset": args.preset, **_summary(result)}, "reproduce")
        except AciError as e:
            return format_error_response(str(e), "reproduce", {"kind": type(e).__name__})
        except Exception as e:
            logger.exception("reproduce failed")
            return format_error_response(f"Unexpected error: {e}", "reproduce", {"unexpected": True})

    simulate = subparsers.add_parser("simulate", help="Simulate a configured model")
    add_run_options(simulate)
    simulate.set_defaults(handler=simulate_trajectory)

    analyze = subparsers.add_parser("analyze", help="Run the ACI/CIR analysis of a configured experiment")
    add_run_options(analyze)
    analyze.add_argument("--trajectory", help="Trajectory CSV to analyze instead of simulating")
    analyze.set_defaults(handler=analyze_experiment)

    reproduce = subparsers.add_parser("reproduce", help="Run a named case-study preset")
    reproduce.add_argument("preset", choices=PRESET_NAMES)
    add_run_options(reproduce, config_required=False)
    reproduce.set_defaults(handler=reproduce_preset)
