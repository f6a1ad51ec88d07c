"""Tests for relative entropy, CIR lengths and profiles, and causal queries"""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from aci_cir.acceptance import check_conditioning_limit, check_endpoint_identities
from aci_cir.assimilation.cgns_filter import GaussianState, analysis_gram_inverse, run_filter
from aci_cir.assimilation.online_smoother import complete_smoother, replay
from aci_cir.causality.causal_queries import (
    CausalQuery,
    ConditioningMode,
    ScaledObservationNoise,
    apply_conditioning,
    limit_consistency,
    resolve_query,
    run_query,
)
from aci_cir.causality.cir import (
    AnalysisOptions,
    CirSeries,
    backward_cir_profile,
    backward_length_approx,
    backward_length_exact,
    backward_length_subjective,
    build_cir_series,
    forward_cir_profile,
    forward_cir_profiles,
    forward_length_approx,
    forward_length_exact,
    forward_length_subjective,
    weak_evidence,
)
from aci_cir.causality.info_metrics import aci_metric, batch_relative_entropy, gauss_relative_entropy, marginal
from aci_cir.dynamics.models import Lorenz84Params, linear_model, lorenz84_model
from aci_cir.dynamics.sde_sim import simulate
from aci_cir.oracle import eps_quadrature_length, gaussian_kl_quadrature
from aci_cir.utils.errors import DegenerateReferenceError, GramCouplingError, NumericalError, ValidationError


def _gauss(mean, cov):
    return GaussianState(np.atleast_1d(np.asarray(mean, dtype=float)), np.atleast_2d(np.asarray(cov, dtype=float)))


class TestRelativeEntropy:
    def test_identical(self):
        p = _gauss([1.0, -2.0], [[2.0, 0.3], [0.3, 1.0]])
        assert gauss_relative_entropy(p, p) == (0.0, 0.0, 0.0)

    def test_mean_shift(self):
        value = gauss_relative_entropy(_gauss(1.0, 1.0), _gauss(0.0, 1.0))
        assert value.total == pytest.approx(0.5)
        assert value.signal == pytest.approx(0.5)
        assert value.dispersion == pytest.approx(0.0, abs=1e-15)

    def test_variance_ratio(self):
        value = gauss_relative_entropy(_gauss(0.0, 2.0), _gauss(0.0, 1.0))
        assert value.total == pytest.approx(0.5 * (1.0 - math.log(2.0)), abs=1e-12)
        assert value.total == pytest.approx(0.153426, abs=1e-6)

    def test_agrees_with_quadrature(self):
        p = _gauss([0.5, -0.2], [[1.2, 0.4], [0.4, 0.7]])
        q = _gauss([-0.3, 0.1], [[0.9, -0.2], [-0.2, 1.5]])
        assert gauss_relative_entropy(p, q).total == pytest.approx(gaussian_kl_quadrature(p, q), abs=1e-6)

    def test_invariant_under_affine_maps(self):
        p = _gauss([0.5, -0.2], [[1.2, 0.4], [0.4, 0.7]])
        q = _gauss([-0.3, 0.1], [[0.9, -0.2], [-0.2, 1.5]])
        A, b = np.array([[2.0, 1.0], [0.0, 3.0]]), np.array([5.0, -1.0])

        def move(g):
            return GaussianState(A @ g.mean + b, A @ g.cov @ A.T)

        assert gauss_relative_entropy(move(p), move(q)).total == pytest.approx(gauss_relative_entropy(p, q).total)

    def test_degenerate_reference(self):
        with pytest.raises(DegenerateReferenceError):
            gauss_relative_entropy(_gauss(0.0, 1.0), _gauss(1.0, 0.0))

    def test_jitter_regularizes_reference(self):
        value = gauss_relative_entropy(_gauss(0.0, 1.0), _gauss(1.0, 0.0), jitter=1.0)
        assert value.signal == pytest.approx(0.5)

    def test_singular_compared_covariance(self):
        with pytest.raises(NumericalError):
            gauss_relative_entropy(_gauss(0.0, 0.0), _gauss(1.0, 1.0))

    def test_batch_shape_mismatch(self):
        with pytest.raises(ValidationError):
            batch_relative_entropy(np.zeros((2, 1)), np.ones((2, 1, 1)), np.zeros((3, 1)), np.ones((3, 1, 1)))

    def test_aci_compares_smoother_to_filter(self):
        filt, smooth = _gauss(0.0, 1.0), _gauss(1.0, 1.0)
        assert aci_metric(filt, smooth).total == pytest.approx(0.5)


class TestMarginal:
    def test_full_index_set(self):
        g = _gauss([1.0, 2.0], [[2.0, 1.0], [1.0, 1.0]])
        m = marginal(g, [0, 1])
        assert_array_equal(m.mean, g.mean)
        assert_array_equal(m.cov, g.cov)

    def test_principal_submatrix(self):
        m = marginal(_gauss([0.0, 0.0], [[2.0, 1.0], [1.0, 1.0]]), [1])
        assert_array_equal(m.mean, [0.0])
        assert_array_equal(m.cov, [[1.0]])

    def test_rejects_bad_indices(self):
        with pytest.raises(ValidationError):
            marginal(_gauss([0.0, 0.0], np.eye(2)), [0, 0])
        with pytest.raises(ValidationError):
            marginal(_gauss([0.0, 0.0], np.eye(2)), [2])


class TestForwardLengths:
    def test_single_head(self):
        assert forward_length_approx([2.0, 0.0, 0.0, 0.0], 0.1) == pytest.approx(0.1)
        assert forward_length_exact([2.0, 0.0, 0.0, 0.0], 0.1) == pytest.approx(0.1)

    def test_plateau(self):
        profile = [0.3] * 6 + [0.0]
        assert forward_length_approx(profile, 0.5) == pytest.approx(3.0)
        assert forward_length_exact(profile, 0.5) == pytest.approx(3.0)

    def test_single_point(self):
        assert forward_length_exact([0.7], 1.0) == 0.0
        assert forward_length_approx([0.7], 1.0) == 0.0

    def test_non_monotone(self):
        profile = [1.0, 0.0, 1.0, 0.0]
        assert forward_length_subjective(profile, 1.0, 0.5) == pytest.approx(3.0)
        assert forward_length_exact(profile, 1.0) == pytest.approx(3.0)
        assert forward_length_approx(profile, 1.0) == pytest.approx(2.0)

    def test_threshold_above_peak(self):
        assert forward_length_subjective([0.4, 0.2, 0.0], 1.0, 0.4) == 0.0

    def test_zero_profile(self):
        assert forward_length_exact([0.0, 0.0], 1.0) == 0.0
        assert forward_length_approx([0.0, 0.0], 1.0) == 0.0

    def test_rejects_bad_input(self):
        with pytest.raises(ValidationError):
            forward_length_approx([], 1.0)
        with pytest.raises(ValidationError):
            forward_length_approx([1.0, np.nan], 1.0)
        with pytest.raises(ValidationError):
            forward_length_approx([1.0], 0.0)
        with pytest.raises(ValidationError):
            forward_length_exact([1.0, 0.0], 1.0, eps_grid="uniform")


class TestBackwardLengths:
    def test_newest_only(self):
        profile = [0.0, 0.0, 0.0, 0.6]
        assert backward_length_approx(profile, 0.2) == pytest.approx(0.2)
        assert backward_length_exact(profile, 0.2) == pytest.approx(0.2)

    def test_nondecreasing(self):
        profile = [0.0, 0.2, 0.5, 1.0]
        assert backward_length_subjective(profile, 1.0, 0.5) == pytest.approx(1.0)
        assert backward_length_approx(profile, 1.0) == pytest.approx(1.7)
        assert backward_length_exact(profile, 1.0) == pytest.approx(1.7)
        assert eps_quadrature_length(profile, 1.0, 3.0, "backward") == pytest.approx(1.7)

    def test_negative_threshold(self):
        assert backward_length_subjective([0.0, 0.5], 1.0, -0.1) == 0.0

    def test_zero_profile(self):
        assert backward_length_approx([0.0, 0.0, 0.0], 1.0) == 0.0
        assert backward_length_exact([0.0, 0.0, 0.0], 1.0) == 0.0

    def test_recentred_on_first_value(self):
        assert backward_length_approx([0.5, 0.5, 1.5], 1.0) == pytest.approx(1.0)

    def test_horizon_clip(self):
        assert backward_length_approx([0.0, 1.0, 1.0, 1.0], 1.0, horizon=2.0) == pytest.approx(2.0)


@hsettings(max_examples=100, deadline=None)
@given(
    values=st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 10.0)), min_size=2, max_size=30),
    dt=st.floats(0.001, 1.0),
)
def test_forward_bounds_and_oracle(values, dt):
    profile = np.array(values)
    profile[-1] = 0.0
    exact = forward_length_exact(profile, dt)
    horizon = (profile.size - 1) * dt
    assert forward_length_approx(profile, dt) <= exact + 1e-9
    assert exact == pytest.approx(eps_quadrature_length(profile, dt, horizon, "forward"), abs=1e-9)
    descending = np.sort(profile)[::-1]
    assert forward_length_approx(descending, dt) == pytest.approx(forward_length_exact(descending, dt), abs=1e-6)


@hsettings(max_examples=100, deadline=None)
@given(
    values=st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 10.0)), min_size=1, max_size=30),
    dt=st.floats(0.001, 1.0),
)
def test_backward_bounds_and_oracle(values, dt):
    profile = np.array(values)
    exact = backward_length_exact(profile, dt)
    horizon = (profile.size - 1) * dt
    assert backward_length_approx(profile, dt) >= exact - 1e-9
    assert exact == pytest.approx(eps_quadrature_length(profile, dt, np.inf, "backward"), abs=1e-9)
    assert exact <= horizon + 1e-9
    rising = np.cumsum(profile) - profile[0]
    assert backward_length_approx(rising, dt) == pytest.approx(backward_length_exact(rising, dt), abs=1e-6)


def test_weak_evidence():
    assert weak_evidence(1e-6, 1e-4)
    assert not weak_evidence(1e-2, 1e-4)


class TestProfiles:
    def test_forward_profile_starts_at_aci_and_ends_at_zero(self, reduced_model, reduced_run):
        traj, filt, smoother = reduced_run
        j = 120
        profile = forward_cir_profile(reduced_model, traj, filt, smoother, j, lag_cap=300, lag_tolerance=1e-8)
        assert profile.size == traj.n_steps + 1 - j
        assert profile[-1] == 0.0
        assert profile[0] == pytest.approx(aci_metric(filt.state(j), smoother.state(j)).total, rel=1e-10)

    def test_batched_profiles_match_single(self, reduced_model, reduced_run):
        traj, filt, smoother = reduced_run
        profiles = forward_cir_profiles(reduced_model, traj, filt, smoother, stride=100, lag_cap=300, lag_tolerance=1e-8)
        assert len(profiles) == 4
        single = forward_cir_profile(reduced_model, traj, filt, smoother, 100, lag_cap=300, lag_tolerance=1e-8)
        assert_allclose(profiles[1], single, rtol=1e-10, atol=1e-14)

    def test_backward_profile_starts_at_zero(self, reduced_model, reduced_run):
        traj, filt, _ = reduced_run
        for bank in replay(reduced_model, traj, filt, lag_cap=50, lag_tolerance=1e-8):
            profile = backward_cir_profile(bank)
            assert profile.size == bank.n_current + 1
            assert profile[0] == 0.0

    def test_zero_coupling_profiles_vanish(self, uncoupled_model):
        traj = simulate(uncoupled_model, np.zeros(1), np.zeros(1), 0.01, 120, seed=3)
        filt = run_filter(uncoupled_model, traj)
        smoother = complete_smoother(filt, uncoupled_model, traj)
        for profile in forward_cir_profiles(uncoupled_model, traj, filt, smoother, stride=30):
            assert_array_equal(profile, 0.0)
        for bank in replay(uncoupled_model, traj, filt):
            assert_array_equal(backward_cir_profile(bank), 0.0)

    def test_forward_profile_index_range(self, reduced_model, reduced_run):
        traj, filt, smoother = reduced_run
        with pytest.raises(ValidationError):
            forward_cir_profile(reduced_model, traj, filt, smoother, traj.n_steps + 1)

    def test_endpoint_identities_check(self):
        assert check_endpoint_identities(n_steps=200).passed


class TestCirSeries:
    def test_series_columns_and_bounds(self, reduced_model, reduced_run):
        traj, filt, smoother = reduced_run
        options = AnalysisOptions(lag_cap=300, lag_tolerance=1e-8, stride=20, exact=True)
        series = build_cir_series(reduced_model, traj, filt, smoother, [0], options, label="y→x")
        assert len(series) == 16
        frame = series.to_frame()
        assert list(frame.columns) == [
            "t", "aci", "aci_signal", "aci_dispersion", "tau_f_approx", "tau_b_approx",
            "tau_f_exact", "tau_b_exact", "Mf", "Mb", "flags",
        ]
        assert np.all(series.aci_total >= 0.0)
        assert_allclose(series.aci_total, series.aci_signal + series.aci_dispersion)
        horizons = traj.t_end - series.t
        assert np.all(series.tau_forward_approx <= horizons + 1e-12)
        assert np.all(series.tau_forward_approx <= series.tau_forward_exact + 1e-9)
        assert np.all(series.tau_backward_exact <= series.tau_backward_approx + 1e-9)
        assert series.aci_total[-1] == 0.0
        assert series.tau_backward_approx[0] == 0.0

    def test_aci_matches_pointwise_metric(self, reduced_model, reduced_run):
        traj, filt, smoother = reduced_run
        series = build_cir_series(reduced_model, traj, filt, smoother, [0], AnalysisOptions(stride=50))
        for i, j in enumerate(range(0, traj.n_steps + 1, 50)):
            assert series.aci_total[i] == pytest.approx(aci_metric(filt.state(j), smoother.state(j)).total)

    def test_frame_round_trip(self, reduced_model, reduced_run):
        traj, filt, smoother = reduced_run
        series = build_cir_series(reduced_model, traj, filt, smoother, [0], AnalysisOptions(stride=50))
        again = CirSeries.from_frame(series.to_frame(), label="copy")
        assert_array_equal(again.aci_total, series.aci_total)
        assert again.flags == series.flags
        assert again.tau_forward_exact is None

    def test_lag_cap_flag(self, reduced_model, reduced_run):
        traj, filt, _ = reduced_run
        smoother = complete_smoother(filt, reduced_model, traj, lag_cap=20, lag_tolerance=0.0)
        options = AnalysisOptions(lag_cap=20, lag_tolerance=0.0, stride=100)
        series = build_cir_series(reduced_model, traj, filt, smoother, [0], options)
        assert "lag_cap" in series.flags[0]
        assert "lag_cap" not in series.flags[-1]

    def test_zero_coupling_is_weak(self, uncoupled_model):
        traj = simulate(uncoupled_model, np.zeros(1), np.zeros(1), 0.01, 100, seed=3)
        filt = run_filter(uncoupled_model, traj)
        smoother = complete_smoother(filt, uncoupled_model, traj)
        series = build_cir_series(uncoupled_model, traj, filt, smoother, [0], AnalysisOptions(stride=25))
        assert_array_equal(series.aci_total, 0.0)
        assert all("weak_forward" in f and "weak_backward" in f for f in series.flags)

    def test_options_validation(self):
        with pytest.raises(ValidationError):
            AnalysisOptions(stride=0)
        with pytest.raises(ValidationError):
            AnalysisOptions(lag_cap=0)


@pytest.fixture
def coupled_noise_model():
    """Two observations whose noises share a channel"""
    return linear_model(
        lambda_x=[[1.0], [0.5]],
        lambda_y=[[-1.0]],
        sigma_x1=[[1.0, 0.0], [0.5, 1.0]],
        sigma_y2=[[1.0]],
        name="coupled",
    )


@pytest.fixture
def lorenz_path():
    model = lorenz84_model(Lorenz84Params())
    traj = simulate(model, np.zeros(2), np.ones(1), 1e-3, 1000, seed=2024).subsample(10)
    return model, traj


class TestQueries:
    def test_resolution_completes_conditioners(self, lorenz_path):
        model, _ = lorenz_path
        resolved = resolve_query(model, CausalQuery(cause=("x",), effect=("y",)))
        assert resolved.cause_indices == (0,)
        assert resolved.effect_indices == (0,)
        assert resolved.conditioning_observed == (1,)

    def test_resolution_errors(self, lorenz_path):
        model, _ = lorenz_path
        with pytest.raises(ValidationError):
            resolve_query(model, CausalQuery(cause=("w",)))
        with pytest.raises(ValidationError):
            resolve_query(model, CausalQuery(cause=("x",), effect=("y",), conditioning_observed=("y",)))
        with pytest.raises(ValidationError):
            CausalQuery(cause=())

    def test_uncovered_observed_variable(self):
        model = linear_model(lambda_x=np.ones((3, 1)), lambda_y=[[-1.0]], sigma_x1=np.eye(3), sigma_y2=[[1.0]])
        query = CausalQuery(cause=("y_0",), effect=("x_0",), conditioning_observed=("x_1",))
        with pytest.raises(ValidationError, match="neither effect nor conditioner"):
            resolve_query(model, query)

    def test_empty_conditioning_keeps_model(self, reduced_model):
        assert apply_conditioning(reduced_model, CausalQuery(cause=("y",))) is reduced_model

    def test_exact_limit_zeroes_gain_column(self, lorenz_path):
        model, _ = lorenz_path
        conditioned = apply_conditioning(model, CausalQuery(cause=("x",), effect=("y",), conditioning_observed=("z",)))
        assert conditioned.neutralized == (1,)
        c = conditioned.coefficients(0.0, np.array([1.0, 0.5]))
        assert_array_equal(analysis_gram_inverse(conditioned, c, 0.0)[:, 1], 0.0)

    def test_large_noise_scales_rows(self, lorenz_path):
        model, _ = lorenz_path
        query = CausalQuery(cause=("x",), effect=("y",), mode=ConditioningMode.LARGE_NOISE, noise_scale=100.0)
        conditioned = apply_conditioning(model, query)
        assert isinstance(conditioned.evaluator, ScaledObservationNoise)
        base = model.coefficients(0.0, np.array([1.0, 0.5]))
        scaled = conditioned.coefficients(0.0, np.array([1.0, 0.5]))
        assert_allclose(scaled.sigma_x1[1], 100.0 * base.sigma_x1[1])
        assert_allclose(scaled.sigma_x1[0], base.sigma_x1[0])

    def test_large_noise_converges_to_exact_limit(self):
        assert check_conditioning_limit(t_end=1.0).passed

    def test_limit_consistency_shrinks(self, lorenz_path):
        model, traj = lorenz_path
        query = CausalQuery(cause=("x",), effect=("y",))
        table = limit_consistency(model, traj, query, scales=(1e2, 1e6), options=AnalysisOptions(stride=10))
        assert list(table["scale"]) == [1e2, 1e6]
        assert table["sup_gap"].iloc[1] <= table["sup_gap"].iloc[0]

    def test_coupled_noise_requires_opt_in(self, coupled_noise_model):
        traj = simulate(coupled_noise_model, np.zeros(2), np.zeros(1), 0.01, 40, seed=1)
        query = CausalQuery(cause=("y_0",), effect=("x_0",))
        with pytest.raises(GramCouplingError):
            run_query(coupled_noise_model, traj, query, AnalysisOptions(stride=10))
        fallback = CausalQuery(cause=("y_0",), effect=("x_0",), allow_large_noise_fallback=True)
        result = run_query(coupled_noise_model, traj, fallback, AnalysisOptions(stride=10))
        assert result.mode is ConditioningMode.LARGE_NOISE

    def test_hidden_conditioner_is_marginalized(self, two_state_model):
        traj = simulate(two_state_model, np.zeros(2), np.zeros(2), 0.01, 100, seed=5)
        joint = run_query(two_state_model, traj, CausalQuery(cause=("y_0", "y_1")), AnalysisOptions(stride=20))
        single = run_query(two_state_model, traj, CausalQuery(cause=("y_0",)), AnalysisOptions(stride=20))
        expected = [
            aci_metric(marginal(joint.filter.state(j), [0]), marginal(joint.smoother.state(j), [0])).total
            for j in range(0, 101, 20)
        ]
        assert_allclose(single.series.aci_total, expected, rtol=1e-10, atol=1e-14)

    def test_trajectory_must_match_partition(self, lorenz_path, reduced_model):
        _, traj = lorenz_path
        with pytest.raises(ValidationError):
            run_query(reduced_model, traj, CausalQuery(cause=("y",)))
