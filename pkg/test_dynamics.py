"""Tests for simulation and the case-study models"""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from aci_cir.dynamics.models import (
    ClimateParams,
    Lorenz84Params,
    MultiscaleParams,
    ReducedLinearParams,
    build_model,
    climate_model,
    equilibrium_aci,
    equilibrium_stats,
    linear_model,
    lorenz84_model,
    multiscale_model,
    parse_params,
)
from aci_cir.dynamics.sde_sim import Trajectory, euler_maruyama_step, noise_increments, simulate
from aci_cir.utils.errors import BlowupError, ConfigurationError, ValidationError


class TestEulerMaruyama:
    def test_zero_dynamics_leave_state_unchanged(self):
        model = linear_model(lambda_x=[[0.0]], lambda_y=[[0.0]], sigma_x1=[[0.0]], sigma_y2=[[0.0]])
        x, y = euler_maruyama_step(model, 0.0, np.array([0.3]), np.array([-1.2]), 0.1, np.ones(1), np.ones(1))
        assert_array_equal(x, [0.3])
        assert_array_equal(y, [-1.2])

    def test_ou_drift_step(self, uncoupled_model):
        _, y = euler_maruyama_step(uncoupled_model, 0.0, np.zeros(1), np.array([2.0]), 0.01, np.zeros(1), np.zeros(1))
        assert_allclose(y, [1.98])

    def test_blowup_reports_index(self):
        model = linear_model(lambda_x=[[1.0]], lambda_y=[[1e3]], sigma_x1=[[1.0]], sigma_y2=[[1.0]])
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(BlowupError) as info:
                simulate(model, np.zeros(1), np.ones(1), 1.0, 500, seed=0)
        assert info.value.index is not None
        assert info.value.index < 500


class TestSimulate:
    def test_same_seed_same_path(self, reduced_model):
        a = simulate(reduced_model, np.zeros(1), np.zeros(1), 0.01, 200, seed=11)
        b = simulate(reduced_model, np.zeros(1), np.zeros(1), 0.01, 200, seed=11)
        assert_array_equal(a.x_path, b.x_path)
        assert_array_equal(a.y_path, b.y_path)

    def test_different_seed_different_path(self, reduced_model):
        a = simulate(reduced_model, np.zeros(1), np.zeros(1), 0.01, 50, seed=1)
        b = simulate(reduced_model, np.zeros(1), np.zeros(1), 0.01, 50, seed=2)
        assert not np.array_equal(a.x_path, b.x_path)

    def test_zero_steps(self, reduced_model):
        traj = simulate(reduced_model, np.array([0.5]), np.array([-0.5]), 0.01, 0, seed=0)
        assert traj.n_steps == 0
        assert_array_equal(traj.x_path, [[0.5]])
        assert_array_equal(traj.y_path, [[-0.5]])

    def test_dimension_mismatch(self, reduced_model):
        with pytest.raises(ValidationError):
            simulate(reduced_model, np.zeros(2), np.zeros(1), 0.01, 10, seed=0)

    def test_negative_steps(self, reduced_model):
        with pytest.raises(ValidationError):
            simulate(reduced_model, np.zeros(1), np.zeros(1), 0.01, -1, seed=0)

    def test_increments_are_prefix_stable(self):
        long = noise_increments(1, 100, 0.01, seed=5)
        short = noise_increments(1, 40, 0.01, seed=5)
        assert_array_equal(long[:, :40], short)

    def test_channels_do_not_depend_on_each_other(self):
        wide = noise_increments(3, 40, 0.01, seed=5)
        narrow = noise_increments(2, 100, 0.01, seed=5)
        assert_array_equal(wide[:2], narrow[:, :40])
        assert not np.array_equal(wide[0], wide[1])

    def test_climate_run_stays_finite(self):
        model = climate_model(ClimateParams())
        traj = simulate(model, np.array([1.0]), np.array([0.0, 1.0]), 1e-3, 2000, seed=2024)
        assert np.all(np.isfinite(traj.x_path))
        assert traj.hidden_names == ("y", "gamma")

    @pytest.mark.slow
    def test_ou_stationary_variance(self, uncoupled_model):
        traj = simulate(uncoupled_model, np.zeros(1), np.zeros(1), 0.01, 1_000_000, seed=1)
        assert abs(traj.y_path[1000:, 0].var() / 0.5 - 1.0) < 0.04


class TestTrajectory:
    def _traj(self):
        x = np.arange(11, dtype=float).reshape(-1, 1)
        y = np.stack([10 * x[:, 0], -x[:, 0]], axis=1)
        return Trajectory(dt=0.1, t0=-0.5, x_path=x, y_path=y, observed_names=("a",), hidden_names=("b", "c"))

    def test_window_keeps_grid_points_inside(self):
        w = self._traj().window(0.0, 0.3)
        assert w.t0 == pytest.approx(0.0)
        assert_array_equal(w.x_path[:, 0], [5.0, 6.0, 7.0, 8.0])

    def test_empty_window(self):
        with pytest.raises(ValidationError):
            self._traj().window(2.0, 3.0)

    def test_subsample(self):
        s = self._traj().subsample(5)
        assert s.dt == pytest.approx(0.5)
        assert_array_equal(s.x_path[:, 0], [0.0, 5.0, 10.0])

    def test_repartition_moves_hidden_to_observed(self):
        r = self._traj().repartition(["a", "c"])
        assert r.observed_names == ("a", "c")
        assert r.hidden_names == ("b",)
        assert_array_equal(r.x_path[:, 1], -np.arange(11.0))
        assert_array_equal(r.y_path[:, 0], 10 * np.arange(11.0))

    def test_repartition_needs_truth(self):
        traj = Trajectory(dt=0.1, t0=0.0, x_path=np.zeros((3, 1)), observed_names=("a",))
        with pytest.raises(ValidationError):
            traj.repartition(["b"])

    def test_rejects_nonfinite_path(self):
        with pytest.raises(ValidationError):
            Trajectory(dt=0.1, t0=0.0, x_path=np.array([[0.0], [np.nan]]))


class TestModels:
    def test_climate_drift(self):
        c = climate_model(ClimateParams()).coefficients(0.0, np.array([1.0]))
        assert_allclose(c.f_x, [2.0 / 3.0])
        assert_allclose(c.lambda_x, [[-4.0, 0.0]])
        assert_allclose(c.lambda_y[0, 1], 1.0)

    def test_climate_observing_y(self):
        model = climate_model(ClimateParams(), observe=("x", "y"))
        assert model.hidden_names == ("gamma",)
        c = model.coefficients(0.0, np.array([1.0, 0.5]))
        assert_allclose(c.lambda_x, [[0.0], [1.0]])
        assert_allclose(c.f_x[0], 2.0 / 3.0 - 4.0 * 0.5)

    def test_lorenz84_forcing_and_drift(self):
        p = Lorenz84Params()
        assert p.forcing(0.0) == pytest.approx(11.0)
        c = lorenz84_model(p).coefficients(0.0, np.array([1.0, 0.0]))
        assert_allclose(c.f_y, [-1.0 + 0.25 * 11.0])
        assert_allclose(c.lambda_x, [[1.0], [4.0]])

    def test_multiscale_coupling(self):
        model = multiscale_model(MultiscaleParams())
        c = model.coefficients(0.0, np.array([1.0, 0.0]))
        assert c.lambda_x[0, 0] == pytest.approx(1.6)
        cancel = model.coefficients(0.0, np.array([1.0 / 0.6, 0.0]))
        assert cancel.sigma_x2[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_equilibrium_closed_forms(self):
        stats = equilibrium_stats(ReducedLinearParams())
        assert stats.filter_var == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-6)
        assert stats.smoother_var == pytest.approx(0.353553, abs=1e-6)
        assert stats.gain == pytest.approx(math.sqrt(2.0), abs=1e-6)

    def test_equilibrium_aci_is_log_ratio(self):
        p = ReducedLinearParams()
        stats = equilibrium_stats(p)
        value = equilibrium_aci(p)
        assert value.total == pytest.approx(0.5 * math.log(stats.filter_var / stats.smoother_var))
        assert value.signal + value.dispersion == pytest.approx(value.total)

    def test_equilibrium_needs_coupling(self):
        with pytest.raises(ValidationError):
            equilibrium_stats(ReducedLinearParams(lambda_x=0.0))

    @hsettings(max_examples=60, deadline=None)
    @given(
        lambda_x=st.floats(0.1, 5.0),
        lambda_y=st.floats(-5.0, -0.1),
        sigma_x=st.floats(0.1, 5.0),
        sigma_y=st.floats(0.1, 5.0),
    )
    def test_smoother_never_exceeds_filter(self, lambda_x, lambda_y, sigma_x, sigma_y):
        p = ReducedLinearParams(lambda_x=lambda_x, lambda_y=lambda_y, sigma_x=sigma_x, sigma_y=sigma_y)
        stats = equilibrium_stats(p)
        assert 0.0 < stats.smoother_var <= stats.filter_var * (1.0 + 1e-6)

    def test_build_model_rejects_unknown(self):
        with pytest.raises(ConfigurationError):
            build_model("lorenz63")

    def test_build_model_rejects_unsupported_partition(self):
        with pytest.raises(ValidationError):
            build_model("lorenz84", observe=["x", "y"])

    def test_parse_params_reports_field(self):
        with pytest.raises(ConfigurationError, match="epsilon"):
            parse_params("climate", {"epsilon": 2.0})
