"""Named experiment presets for the case studies"""

from typing import Any, Callable, Dict, List, Optional

from ..utils.errors import ConfigurationError
from .experiment import ExperimentConfig, parse_experiment

CASE_STUDY_ANALYSIS = {"subsample": 10, "stride": 10}
CASE_STUDY_SEED = 2024
CASE_STUDY_BURN_IN = 10.0


def _simulation(
    t_end: float, dt: float = 1e-3, x0: Optional[List[float]] = None, y0: Optional[List[float]] = None
) -> Dict[str, Any]:
    """Case-study simulation section; states left out start at zero"""
    sim: Dict[str, Any] = {"dt": dt, "t_end": t_end, "seed": CASE_STUDY_SEED}
    sim["burn_in"] = CASE_STUDY_BURN_IN
    if x0 is not None:
        sim["x0"] = x0
    if y0 is not None:
        sim["y0"] = y0
    return sim


def _climate(epsilon: float, windows) -> Dict[str, Any]:
    return {
        "model": {"name": "climate", "params": {"epsilon": epsilon}},
        "simulation": _simulation(110.0, x0=[0.0], y0=[0.0, 0.0]),
        "analysis": {**CASE_STUDY_ANALYSIS, "windows": windows},
        "queries": {
            "y_to_x_given_gamma": {
                "cause": ["y"],
                "effect": ["x"],
                "conditioning_hidden": ["gamma"],
                "label": "y→x|γ",
            },
            "gamma_to_y_given_x": {
                "cause": ["gamma"],
                "effect": ["y"],
                "conditioning_observed": ["x"],
                "observe": ["x", "y"],
                "label": "γ→y|x",
            },
        },
    }


def _multiscale() -> Dict[str, Any]:
    return {
        "model": {"name": "multiscale"},
        "simulation": _simulation(100.0, x0=[0.0, 0.0], y0=[0.0, 0.0]),
        "analysis": {**CASE_STUDY_ANALYSIS, "windows": [[50.0, 100.0]]},
        "queries": {
            "joint": {"cause": ["y1", "y2"], "effect": ["x1", "x2"], "label": "(y1,y2)→(x1,x2)"},
            "y2_to_x2": {
                "cause": ["y2"],
                "effect": ["x2"],
                "conditioning_observed": ["x1"],
                "conditioning_hidden": ["y1"],
                "label": "y2→x2|(x1,y1)",
            },
            "y1_to_x1": {
                "cause": ["y1"],
                "effect": ["x1"],
                "conditioning_observed": ["x2"],
                "conditioning_hidden": ["y2"],
                "label": "y1→x1|(x2,y2)",
            },
        },
    }


def _lorenz84() -> Dict[str, Any]:
    return {
        "model": {"name": "lorenz84"},
        # observed (y, z) = (0, 0), hidden zonal flow x = 1
        "simulation": _simulation(150.0, x0=[0.0, 0.0], y0=[1.0]),
        "analysis": {**CASE_STUDY_ANALYSIS, "windows": [[0.0, 150.0]]},
        "queries": {
            "x_to_y_given_z": {"cause": ["x"], "effect": ["y"], "conditioning_observed": ["z"], "label": "x→y|z"},
            "x_to_z_given_y": {"cause": ["x"], "effect": ["z"], "conditioning_observed": ["y"], "label": "x→z|y"},
        },
    }


def _reduced_linear() -> Dict[str, Any]:
    return {
        "model": {
            "name": "reduced-linear",
            "params": {"f_y": {"amplitude": 1.0, "period": 20.0}},
        },
        "simulation": _simulation(100.0, dt=5e-3),
        "analysis": {"subsample": 1, "stride": 10, "windows": [[0.0, 100.0]]},
        "queries": {"y_to_x": {"cause": ["y"], "effect": ["x"], "label": "y→x"}},
    }


PRESETS: Dict[str, Callable[[], Dict[str, Any]]] = {
    "climate-eps001": lambda: _climate(0.01, [[38.0, 53.0], [73.0, 83.0], [95.0, 105.0]]),
    "climate-eps01": lambda: _climate(0.1, [[10.0, 40.0], [65.0, 105.0]]),
    "multiscale-default": _multiscale,
    "lorenz84-default": _lorenz84,
    "reduced-linear": _reduced_linear,
}

PRESET_NAMES = tuple(PRESETS)


def load_preset(name: str) -> ExperimentConfig:
    """Validated experiment for a named preset"""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset '{name}'; choose one of {', '.join(PRESET_NAMES)}")
    return parse_experiment(PRESETS[name](), source=f"preset {name}")
