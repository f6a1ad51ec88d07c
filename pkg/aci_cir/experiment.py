"""Experiment orchestration: simulate once, run every query, write artifacts"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from . import __version__
from .assimilation.online_smoother import replay
from .causality.causal_queries import CausalQuery, QueryResult, apply_conditioning, run_query
from .config.experiment import ExperimentConfig
from .dynamics.models import build_model
from .dynamics.sde_sim import CgnsModel, Trajectory, simulate
from .resources import artifacts
from .resources.plots import plot_query_figure
from .utils.formatters import format_trajectory_frame, trajectory_labels

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trajectory: Trajectory
    results: Dict[str, QueryResult] = field(default_factory=dict)
    out_dir: Optional[Path] = None
    artifacts: List[Path] = field(default_factory=list)


def simulate_experiment(config: ExperimentConfig) -> Trajectory:
    """Simulate from t = −burn_in and keep the window [0, t_end] on the simulation grid"""
    sim = config.simulation
    model = build_model(config.model.name, config.model.params)
    n_burn = int(round(sim.burn_in / sim.dt))
    n_keep = int(round(sim.t_end / sim.dt))
    x0 = np.zeros(model.dim_obs) if sim.x0 is None else np.asarray(sim.x0, dtype=float)
    y0 = np.zeros(model.dim_hid) if sim.y0 is None else np.asarray(sim.y0, dtype=float)
    traj = simulate(model, x0, y0, sim.dt, n_burn + n_keep, sim.seed, t0=-n_burn * sim.dt)
    return traj.window(0.0, n_keep * sim.dt)


def prepare_query(
    config: ExperimentConfig, name: str, traj: Trajectory
) -> Tuple[CgnsModel, Trajectory, CausalQuery]:
    """Model, analysis path and query for one configured query"""
    model = query_model(config, name)
    path = traj.repartition(model.observed_names).subsample(config.analysis.subsample)
    return model, path, config.queries[name].to_query(name)


def query_model(config: ExperimentConfig, name: str) -> CgnsModel:
    """The configured model under the observation partition of one query"""
    section = config.queries[name]
    observe = tuple(section.observe) if section.observe else None
    return build_model(config.model.name, config.model.params, observe=observe)


def run_queries(config: ExperimentConfig, traj: Trajectory) -> Dict[str, QueryResult]:
    """Run all queries; with more than one worker they share the trajectory read-only"""
    options = config.analysis_options()
    jobs = {name: prepare_query(config, name, traj) for name in config.queries}

    def work(name: str) -> QueryResult:
        model, path, query = jobs[name]
        return run_query(model, path, query, options)

    workers = min(config.analysis.workers, len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, jobs))
        return dict(zip(jobs, outcomes))
    return {name: work(name) for name in jobs}


def run_metadata(config: ExperimentConfig, result: ExperimentResult) -> Dict[str, object]:
    """Sidecar entries; the ``*_names`` keys name the indexed CSV columns"""
    filter_names = {name: list(query_model(config, name).hidden_names) for name in config.queries}
    return {
        "version": __version__,
        "git": artifacts.git_describe(),
        "model": config.model.name,
        "seed": config.simulation.seed,
        "dt": config.simulation.dt,
        "analysis_dt": config.simulation.dt * config.analysis.subsample,
        "params": config.model.params,
        **artifacts.trajectory_names(result.trajectory),
        "filter_names": filter_names,
        "conditioning_modes": {name: r.mode.value for name, r in result.results.items()},
        "jitter": config.analysis.jitter,
        "exact_cir": config.analysis.exact_cir,
        "config": config.model_dump(mode="json"),
    }


def write_artifacts(result: ExperimentResult, out_dir: Union[str, Path]) -> List[Path]:
    """Write trajectory, per-query series, optional filter/bank/figure files and metadata"""
    config, traj = result.config, result.trajectory
    out = Path(out_dir)
    written: List[Path] = []
    if config.output.trajectory:
        written.append(artifacts.write_trajectory_csv(traj, out / "trajectory.csv"))

    frames = {}
    for name, qr in result.results.items():
        frames[qr.series.label or name] = qr.series.to_frame()
        written.append(artifacts.write_cir_csv(qr.series, out / f"cir_{name}.csv"))
        model, path, query = prepare_query(config, name, traj)
        if config.output.filter:
            written.append(artifacts.write_filter_csv(qr.filter, out / f"filter_{name}.csv"))
            written.append(artifacts.write_smoother_csv(qr.smoother, out / f"smoother_{name}.csv"))
        if config.output.bank_snapshot:
            conditioned = apply_conditioning(model, query.with_mode(qr.mode))
            a = config.analysis
            bank = None
            for bank in replay(conditioned, path, qr.filter, a.lag_cap, a.lag_tolerance):
                pass
            if bank is not None:
                written.append(artifacts.write_bank_snapshot(bank, out / f"bank_{name}.csv"))

    if config.output.plots:
        trajectory_frame = format_trajectory_frame(traj.times, traj.x_path, traj.y_path)
        stride = config.analysis.subsample
        written.append(
            plot_query_figure(
                trajectory_frame.iloc[::stride].reset_index(drop=True),
                frames,
                config.analysis.windows,
                out / "figure.svg",
                title=config.model.name,
                labels=trajectory_labels(traj.observed_names, traj.hidden_names),
            )
        )

    meta = artifacts.write_metadata(run_metadata(config, result), out / artifacts.METADATA_FILE)
    written.append(meta)
    logger.info(f"Wrote {len(written)} artifacts to {out}")
    return written


def run_experiment(
    config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None
) -> ExperimentResult:
    """Simulate, analyze every query and write artifacts when an output directory is known"""
    traj = simulate_experiment(config)
    result = ExperimentResult(config=config, trajectory=traj)
    result.results = run_queries(config, traj)
    target = out_dir or config.output.out_dir
    if target:
        result.out_dir = Path(target)
        result.artifacts = write_artifacts(result, target)
    return result
