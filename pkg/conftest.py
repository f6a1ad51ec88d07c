"""Shared fixtures for the aci-cir test suite"""

import numpy as np
import pytest

from aci_cir.assimilation.cgns_filter import run_filter
from aci_cir.assimilation.online_smoother import complete_smoother
from aci_cir.dynamics.models import ReducedLinearParams, linear_model, reduced_linear_model
from aci_cir.dynamics.sde_sim import simulate


@pytest.fixture
def reduced_model():
    return reduced_linear_model(ReducedLinearParams())


@pytest.fixture
def uncoupled_model():
    """Hidden state never enters the observed drift and the noises are independent"""
    return linear_model(lambda_x=[[0.0]], lambda_y=[[-1.0]], sigma_x1=[[1.0]], sigma_y2=[[1.0]], name="uncoupled")


@pytest.fixture
def two_state_model():
    return linear_model(
        lambda_x=[[1.0, 0.5], [0.0, 1.0]],
        lambda_y=[[-1.0, 0.3], [-0.2, -0.8]],
        sigma_x1=np.eye(2),
        sigma_y2=np.diag([1.0, 0.8]),
        name="linear-2x2",
    )


@pytest.fixture
def reduced_run(reduced_model):
    """Short reduced-model path with its filter and complete smoother"""
    traj = simulate(reduced_model, np.zeros(1), np.zeros(1), 0.01, 300, seed=7)
    filt = run_filter(reduced_model, traj)
    smoother = complete_smoother(filt, reduced_model, traj, lag_cap=300, lag_tolerance=1e-8)
    return traj, filt, smoother


@pytest.fixture
def tiny_experiment():
    """Mapping for a fast reduced-model experiment"""
    return {
        "model": {"name": "reduced-linear"},
        "simulation": {"dt": 0.01, "t_end": 1.0, "seed": 3, "burn_in": 0.2},
        "analysis": {"stride": 5, "lag_cap": 200, "windows": [[0.0, 1.0]]},
        "queries": {"y_to_x": {"cause": ["y"], "effect": ["x"], "label": "y→x"}},
    }


TINY_TOML = """\
[model]
name = "reduced-linear"

[simulation]
dt = 0.01
t_end = 1.0
seed = 3
burn_in = 0.2

[analysis]
stride = 5
lag_cap = 200

[queries.y_to_x]
cause = ["y"]
effect = ["x"]
"""


@pytest.fixture
def tiny_toml(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML, encoding="utf-8")
    return path
