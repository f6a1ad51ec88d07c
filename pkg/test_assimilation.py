"""Tests for the conditional Gaussian filter and the online smoother"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from aci_cir.acceptance import check_rts_agreement
from aci_cir.assimilation.cgns_filter import (
    AuxMatrices,
    GaussianState,
    analysis_gram_inverse,
    build_aux,
    covariance_precision,
    filter_step,
    forecast,
    gram,
    initial_state,
    run_filter,
)
from aci_cir.assimilation.online_smoother import (
    BoundaryResult,
    SmootherBank,
    bank_advance,
    complete_smoother,
    replay,
)
from aci_cir.dynamics.models import (
    ClimateParams,
    ReducedLinearParams,
    climate_model,
    equilibrium_stats,
    linear_model,
)
from aci_cir.dynamics.sde_sim import Trajectory, simulate
from aci_cir.oracle import kalman_rts
from aci_cir.utils.errors import BankIndexError, ConfigurationError, ValidationError


class TestGram:
    def test_identity(self):
        empty = np.zeros((2, 0))
        assert_array_equal(gram(np.eye(2), empty, np.eye(2), empty), np.eye(2))

    def test_scalar_second_block(self):
        sigma = np.array([[0.7]])
        zero = np.zeros((1, 0))
        assert_allclose(gram(zero, sigma, zero, sigma), [[0.49]])

    def test_channel_mismatch(self):
        with pytest.raises(ValidationError):
            gram(np.eye(2), np.eye(2), np.ones((2, 3)), np.eye(2))

    def test_singular_observation_noise(self):
        model = linear_model(lambda_x=[[1.0]], lambda_y=[[-1.0]], sigma_x1=[[0.0]], sigma_y2=[[1.0]])
        c = model.coefficients(0.0, np.zeros(1))
        with pytest.raises(ConfigurationError, match="singular"):
            analysis_gram_inverse(model, c, 0.0)


class TestFilter:
    def test_zero_gain_is_moment_propagation(self, uncoupled_model):
        prior = GaussianState(np.array([0.4]), np.array([[0.9]]))
        updated = filter_step(uncoupled_model, 0.0, np.zeros(1), np.array([0.3]), prior, 0.01)
        predicted = forecast(uncoupled_model, 0.0, np.zeros(1), prior, 0.01)
        assert_allclose(updated.mean, predicted.mean)
        assert_allclose(updated.cov, predicted.cov)
        assert_allclose(updated.mean, [0.4 * 0.99])
        assert_allclose(updated.cov, [[0.9 + (-1.8 + 1.0) * 0.01]])

    def test_zero_steps(self, reduced_model):
        traj = Trajectory(dt=0.01, t0=0.0, x_path=np.zeros((1, 1)))
        init = GaussianState(np.array([0.2]), np.array([[1.5]]))
        filt = run_filter(reduced_model, traj, init)
        assert len(filt) == 1
        assert filt.aux == []
        assert_array_equal(filt.means[0], [0.2])
        assert_array_equal(filt.covs[0], [[1.5]])

    def test_filter_variance_reaches_riccati_value(self, reduced_model):
        traj = simulate(reduced_model, np.zeros(1), np.zeros(1), 0.01, 3000, seed=3)
        filt = run_filter(reduced_model, traj)
        expected = equilibrium_stats(ReducedLinearParams()).filter_var
        assert filt.covs[-1, 0, 0] == pytest.approx(expected, rel=1e-3)

    def test_covariances_stay_symmetric_psd(self, two_state_model):
        traj = simulate(two_state_model, np.zeros(2), np.zeros(2), 0.01, 300, seed=1)
        filt = run_filter(two_state_model, traj)
        assert_allclose(filt.covs, np.swapaxes(filt.covs, 1, 2))
        assert np.all(np.linalg.eigvalsh(filt.covs) >= 0.0)

    def test_dimension_mismatch(self, reduced_model, two_state_model):
        traj = simulate(two_state_model, np.zeros(2), np.zeros(2), 0.01, 5, seed=1)
        with pytest.raises(ValidationError):
            run_filter(reduced_model, traj)

    def test_neutralized_coordinate_has_zero_gain_column(self, two_state_model):
        conditioned = two_state_model.with_neutralized([1])
        c = conditioned.coefficients(0.0, np.zeros(2))
        inverse = analysis_gram_inverse(conditioned, c, 0.0)
        assert_array_equal(inverse[:, 1], 0.0)
        assert_array_equal(inverse[1, :], 0.0)
        aux = build_aux(conditioned, 0.0, np.zeros(2), GaussianState(np.zeros(2), np.eye(2)), 0.01)
        assert_array_equal(aux.K[1], 0.0)

    def test_rejects_misshapen_initial_state(self, reduced_model):
        traj = Trajectory(dt=0.01, t0=0.0, x_path=np.zeros((3, 1)))
        with pytest.raises(ValidationError, match="initial covariance"):
            run_filter(reduced_model, traj, GaussianState(np.zeros(1), np.eye(2)))


class TestStiffGain:
    """Large initial covariance against a sharp observation: the first explicit step overshoots"""

    def _climate_prior(self):
        model = climate_model(ClimateParams(epsilon=0.01))
        return model, initial_state(model, 0.0, np.zeros(1))

    def test_overshooting_step_keeps_positive_variance(self):
        model, prior = self._climate_prior()
        updated = filter_step(model, 0.0, np.zeros(1), np.array([0.05]), prior, 0.01, index=0)
        w = np.linalg.eigvalsh(updated.cov)
        assert w[0] > 0.0
        assert 0.0 < updated.cov[0, 0] < prior.cov[0, 0]
        assert np.all(np.isfinite(updated.mean))

    def test_ordinary_step_matches_explicit_update(self, reduced_model):
        prior = GaussianState(np.array([0.3]), np.array([[0.5]]))
        updated = filter_step(reduced_model, 0.0, np.zeros(1), np.array([0.02]), prior, 0.01)
        innovation = 0.02 - 0.3 * 0.01
        gain = 0.5
        assert_allclose(updated.mean, [0.3 - 0.3 * 0.01 + gain * innovation])
        assert_allclose(updated.cov, [[0.5 + (-1.0 + 1.0 - 0.25) * 0.01]])

    def test_precision_of_singular_covariance(self):
        assert_allclose(covariance_precision(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
        R = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert_allclose(covariance_precision(R) @ R, np.eye(2), atol=1e-12)

    def test_aux_from_clipped_covariance_is_finite(self):
        model, _ = self._climate_prior()
        aux = build_aux(model, 0.0, np.array([0.5]), GaussianState(np.zeros(2), np.diag([0.0, 1.5])), 0.01)
        for matrix in aux:
            assert np.all(np.isfinite(matrix))

    @pytest.mark.parametrize("epsilon", [0.1, 0.01])
    def test_climate_filter_and_smoother_stay_finite(self, epsilon):
        model = climate_model(ClimateParams(epsilon=epsilon))
        traj = simulate(model, np.zeros(1), np.zeros(2), 1e-3, 3000, seed=2024).subsample(10)
        filt = run_filter(model, traj)
        assert np.all(np.isfinite(filt.covs))
        assert np.all(np.linalg.eigvalsh(filt.covs) >= -1e-10)
        smoother = complete_smoother(filt, model, traj, lag_cap=300, lag_tolerance=1e-8)
        assert np.all(np.isfinite(smoother.means))
        assert np.all(np.isfinite(smoother.covs))


class TestSmootherBank:
    def _aux(self, l=1):
        eye, zero = np.eye(l), np.zeros((l, l))
        return AuxMatrices(E=0.5 * eye, F=np.zeros((l, 1)), Gx=zero, Gy=zero, H=zero, K=np.zeros((1, l)), gram_inv=np.eye(1))

    def test_zero_innovation_leaves_entries_unchanged(self):
        f0 = GaussianState(np.array([0.3]), np.array([[0.8]]))
        f1 = GaussianState(np.array([0.1]), np.array([[0.6]]))
        bank = SmootherBank(1, lag_cap=10, lag_tolerance=0.0).start(f0)
        boundary = BoundaryResult(GaussianState(f0.mean.copy(), f0.cov.copy()), np.zeros(1), np.zeros((1, 1)))
        bank_advance(bank, self._aux(), boundary, f0, f1)
        assert_array_equal(bank.entry(0).mean, f0.mean)
        assert_array_equal(bank.entry(0).cov, f0.cov)
        assert_array_equal(bank.entry(1).mean, f1.mean)

    def test_update_matrices_compose(self):
        f = GaussianState(np.zeros(1), np.eye(1))
        bank = SmootherBank(1, lag_cap=10, lag_tolerance=0.0).start(f)
        boundary = BoundaryResult(f, np.zeros(1), np.zeros((1, 1)))
        for n in (1, 2, 3):
            bank.advance(n, self._aux(), boundary, f, f)
        assert_allclose(bank.updates[:, 0, 0], [0.125, 0.25, 0.5, 1.0])

    def test_out_of_order_advance(self):
        f = GaussianState(np.zeros(1), np.eye(1))
        bank = SmootherBank(1).start(f)
        boundary = BoundaryResult(f, np.zeros(1), np.zeros((1, 1)))
        with pytest.raises(BankIndexError):
            bank.advance(2, self._aux(), boundary, f, f)
        with pytest.raises(BankIndexError):
            bank.start(f)
        with pytest.raises(BankIndexError):
            bank.entry(5)

    def test_tolerance_eviction(self):
        f = GaussianState(np.zeros(1), np.eye(1))
        bank = SmootherBank(1, lag_cap=100, lag_tolerance=0.2).start(f)
        boundary = BoundaryResult(f, np.zeros(1), np.zeros((1, 1)))
        for n in (1, 2, 3):
            bank.advance(n, self._aux(), boundary, f, f)
        # D for j=0 after three steps is 1/8 < 0.2
        assert bank.first_index == 1
        assert [(e.j, e.by_cap) for e in bank.evicted] == [(0, False)]

    def test_cap_eviction(self):
        f = GaussianState(np.zeros(1), np.eye(1))
        bank = SmootherBank(1, lag_cap=2, lag_tolerance=0.0).start(f)
        boundary = BoundaryResult(f, np.zeros(1), np.zeros((1, 1)))
        for n in range(1, 4):
            bank.advance(n, self._aux(), boundary, f, f)
        assert list(bank.indices) == [1, 2, 3]
        assert bank.evicted[0].j == 0 and bank.evicted[0].by_cap

    def test_compaction_preserves_retained_values(self, two_state_model):
        traj = simulate(two_state_model, np.zeros(2), np.zeros(2), 0.01, 60, seed=4)
        filt = run_filter(two_state_model, traj)
        small = replay(two_state_model, traj, filt, lag_cap=2, lag_tolerance=0.0)
        large = replay(two_state_model, traj, filt, lag_cap=100, lag_tolerance=0.0)
        for a, b in zip(small, large):
            for j in a.indices:
                assert_allclose(a.entry(j).mean, b.entry(j).mean, rtol=1e-12, atol=1e-14)
                assert_allclose(a.entry(j).cov, b.entry(j).cov, rtol=1e-12, atol=1e-14)

    def test_snapshot_columns(self, two_state_model):
        traj = simulate(two_state_model, np.zeros(2), np.zeros(2), 0.01, 10, seed=4)
        filt = run_filter(two_state_model, traj)
        bank = None
        for bank in replay(two_state_model, traj, filt, lag_cap=4, lag_tolerance=0.0):
            pass
        frame = bank.snapshot()
        assert list(frame.columns) == ["j", "n", "mu_0", "mu_1", "R_00", "R_01", "R_11", "normD"]
        assert list(frame["j"]) == [6, 7, 8, 9, 10]
        assert frame["normD"].iloc[-1] == pytest.approx(math.sqrt(2.0))


class TestCompleteSmoother:
    def test_endpoint_equals_filter(self, reduced_run):
        _, filt, smoother = reduced_run
        assert_array_equal(smoother.means[-1], filt.means[-1])
        assert_array_equal(smoother.covs[-1], filt.covs[-1])

    def test_smoother_variance_below_filter(self, reduced_run):
        _, filt, smoother = reduced_run
        inner = slice(50, -50)
        assert smoother.covs[inner, 0, 0].mean() < filt.covs[inner, 0, 0].mean()

    def test_zero_coupling_smoother_is_filter(self, uncoupled_model):
        traj = simulate(uncoupled_model, np.zeros(1), np.zeros(1), 0.01, 200, seed=2)
        filt = run_filter(uncoupled_model, traj)
        smoother = complete_smoother(filt, uncoupled_model, traj)
        assert_array_equal(smoother.means, filt.means)
        assert_array_equal(smoother.covs, filt.covs)

    def test_cap_flags_frozen_entries(self, reduced_model):
        traj = simulate(reduced_model, np.zeros(1), np.zeros(1), 0.01, 50, seed=2)
        filt = run_filter(reduced_model, traj)
        smoother = complete_smoother(filt, reduced_model, traj, lag_cap=10, lag_tolerance=0.0)
        assert smoother.capped[:40].all()
        assert not smoother.capped[41:].any()

    def test_matches_kalman_rts_oracle(self, two_state_model):
        traj = simulate(two_state_model, np.zeros(2), np.zeros(2), 0.005, 800, seed=9)
        filt = run_filter(two_state_model, traj)
        smoother = complete_smoother(filt, two_state_model, traj, lag_cap=801, lag_tolerance=1e-12)
        kf, rts = kalman_rts(two_state_model, traj)
        bound = 20 * traj.dt
        assert np.max(np.abs(filt.covs - kf.covs)) < bound
        assert np.max(np.abs(smoother.covs - rts.covs)) < bound
        assert np.max(np.abs(smoother.means - rts.means)) < bound * max(1.0, np.max(np.abs(rts.means)))

    def test_rts_acceptance_check(self):
        assert check_rts_agreement(n_steps=500, dt=0.01).passed

    def test_equilibrium_smoother_variance(self, reduced_model):
        dt = 0.01
        traj = simulate(reduced_model, np.zeros(1), np.zeros(1), dt, 3000, seed=5)
        filt = run_filter(reduced_model, traj)
        smoother = complete_smoother(filt, reduced_model, traj, lag_cap=1000, lag_tolerance=1e-6)
        inner = (traj.times >= 10.0) & (traj.times <= 20.0)
        expected = equilibrium_stats(ReducedLinearParams()).smoother_var
        assert smoother.covs[inner, 0, 0].mean() == pytest.approx(expected, rel=0.05)
