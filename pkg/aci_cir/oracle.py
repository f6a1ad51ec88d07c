"""Reference implementations used to validate the primary pipeline

* ``kalman_rts``: textbook discrete Kalman filter and Rauch-Tung-Striebel
  smoother on the Euler-Maruyama discretization of a linear model.
* ``kl_quadrature``: relative entropy by trapezoid quadrature on a grid.
* ``eps_quadrature_length``: objective CIR lengths by literal integration of
  the subjective length over every threshold interval.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.integrate import trapezoid
from scipy.stats import multivariate_normal

from .assimilation.cgns_filter import FilterSeries, GaussianState, gram, initial_state
from .assimilation.online_smoother import SmootherSeries
from .dynamics.sde_sim import CgnsModel, Trajectory
from .utils.errors import NumericalError, ValidationError
from .utils.validation import validate_positive, validate_profile

logger = logging.getLogger(__name__)


def _solve_right(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a·b⁻¹ for symmetric PSD b, with a pseudo-inverse when b is singular"""
    try:
        factor = linalg.cho_factor(b, lower=True)
        return linalg.cho_solve(factor, a.T).T
    except linalg.LinAlgError:
        return a @ np.linalg.pinv(b)


def kalman_rts(
    model: CgnsModel, traj: Trajectory, init: Optional[GaussianState] = None
) -> Tuple[FilterSeries, SmootherSeries]:
    """Kalman filter and RTS smoother for the hidden state of a linear model.

    Observations are the drift-corrected increments zⱼ = xⱼ₊₁ − xⱼ − fˣΔt
    with zⱼ = ΛˣΔt·yⱼ + vⱼ. Correlated process and observation noise are
    decorrelated before the recursion. The returned filter series holds the
    one-step predictions p(yⱼ | x₀..xⱼ), which is the quantity the
    continuous-time filter approximates at index j.

    Raises:
        ValidationError: On a dimension mismatch or a conditioned model.
        NumericalError: If the observation noise covariance is singular.
    """
    if model.neutralized:
        raise ValidationError("the Kalman oracle does not support neutralized observations")
    if traj.x_path.shape[1] != model.dim_obs:
        raise ValidationError(
            f"trajectory observes {traj.x_path.shape[1]} variables, model {model.name} expects {model.dim_obs}"
        )
    init = init or initial_state(model, traj.t0, traj.x_path[0])
    n, l, dt = traj.n_steps, model.dim_hid, traj.dt
    times, x = traj.times, traj.x_path
    eye = np.eye(l)

    prior_means = np.empty((n + 1, l))
    prior_covs = np.empty((n + 1, l, l))
    post_means = np.empty((n, l))
    post_covs = np.empty((n, l, l))
    transitions = np.empty((n, l, l))
    prior_means[0], prior_covs[0] = init.mean, init.cov

    for j in range(n):
        c = model.coefficients(times[j], x[j])
        sxx = gram(c.sigma_x1, c.sigma_x2, c.sigma_x1, c.sigma_x2)
        syx = gram(c.sigma_y1, c.sigma_y2, c.sigma_x1, c.sigma_x2)
        syy = gram(c.sigma_y1, c.sigma_y2, c.sigma_y1, c.sigma_y2)
        try:
            sxx_factor = linalg.cho_factor(sxx, lower=True)
        except linalg.LinAlgError as e:
            raise NumericalError(f"observation noise is singular at index {j}", index=j, time=times[j]) from e

        H = c.lambda_x * dt
        z = x[j + 1] - x[j] - c.f_x * dt
        C = linalg.cho_solve(sxx_factor, syx.T).T
        A = eye + c.lambda_y * dt - C @ H
        Q = (syy - C @ syx.T) * dt

        m, P = prior_means[j], prior_covs[j]
        S = H @ P @ H.T + sxx * dt
        K = _solve_right(P @ H.T, S)
        m_post = m + K @ (z - H @ m)
        IKH = eye - K @ H
        P_post = IKH @ P @ IKH.T + K @ (sxx * dt) @ K.T

        post_means[j], post_covs[j] = m_post, P_post
        transitions[j] = A
        prior_means[j + 1] = A @ m_post + c.f_y * dt + C @ z
        P_next = A @ P_post @ A.T + Q
        prior_covs[j + 1] = 0.5 * (P_next + P_next.T)

    smooth_means = prior_means.copy()
    smooth_covs = prior_covs.copy()
    for j in range(n - 1, -1, -1):
        A = transitions[j]
        J = _solve_right(post_covs[j] @ A.T, prior_covs[j + 1])
        smooth_means[j] = post_means[j] + J @ (smooth_means[j + 1] - prior_means[j + 1])
        cov = post_covs[j] + J @ (smooth_covs[j + 1] - prior_covs[j + 1]) @ J.T
        smooth_covs[j] = 0.5 * (cov + cov.T)

    logger.debug(f"Kalman/RTS oracle over {n} steps for {model.name}")
    return (
        FilterSeries(times=times, means=prior_means, covs=prior_covs, aux=[]),
        SmootherSeries(times=times, means=smooth_means, covs=smooth_covs, capped=np.zeros(n + 1, dtype=bool)),
    )


def kl_quadrature(
    p_density: np.ndarray, q_density: np.ndarray, axes: Sequence[np.ndarray], log_densities: bool = False
) -> float:
    """∫ p log(p/q) by the trapezoid rule over a 1-D or 2-D tensor grid.

    With ``log_densities`` the inputs are log-densities, which avoids
    underflow in the tails.

    Raises:
        ValidationError: On mismatched grids or where q vanishes but p does not.
    """
    p = np.asarray(p_density, dtype=float)
    q = np.asarray(q_density, dtype=float)
    axes = [np.asarray(a, dtype=float) for a in axes]
    if p.shape != q.shape or p.shape != tuple(a.size for a in axes) or len(axes) not in (1, 2):
        raise ValidationError("densities must share a 1-D or 2-D grid matching the given axes")

    if log_densities:
        integrand = np.exp(p) * (p - q)
    else:
        if np.any((p > 0) & (q <= 0)):
            raise ValidationError("q vanishes where p is positive; relative entropy is infinite")
        integrand = np.zeros_like(p)
        mask = p > 0
        integrand[mask] = p[mask] * np.log(p[mask] / q[mask])

    for axis in reversed(axes):
        integrand = trapezoid(integrand, axis, axis=-1)
    return float(integrand)


def gaussian_kl_quadrature(
    p: GaussianState, q: GaussianState, half_width: float = 12.0, points: int = 601
) -> float:
    """Relative entropy of two 1-D or 2-D Gaussians by quadrature.

    The grid is centred between the means and reaches ``half_width``
    standard deviations of the widest direction of either Gaussian.
    """
    p_mean = np.atleast_1d(np.asarray(p.mean, dtype=float))
    q_mean = np.atleast_1d(np.asarray(q.mean, dtype=float))
    l = p_mean.size
    if l not in (1, 2):
        raise ValidationError(f"quadrature supports 1-D and 2-D Gaussians, got dimension {l}")
    spread = max(float(np.linalg.eigvalsh(np.atleast_2d(c)).max()) for c in (p.cov, q.cov))
    centre = 0.5 * (p_mean + q_mean)
    reach = half_width * np.sqrt(spread) + 0.5 * float(np.max(np.abs(p_mean - q_mean)))
    axes = [np.linspace(centre[i] - reach, centre[i] + reach, points) for i in range(l)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    log_p = multivariate_normal(p_mean, np.atleast_2d(p.cov)).logpdf(mesh)
    log_q = multivariate_normal(q_mean, np.atleast_2d(q.cov)).logpdf(mesh)
    return kl_quadrature(np.reshape(log_p, mesh.shape[:-1]), np.reshape(log_q, mesh.shape[:-1]), axes, True)


def eps_quadrature_length(profile: Sequence[float], dt: float, horizon: float, direction: str) -> float:
    """Objective CIR length by integrating the subjective length over ε ∈ (0, M].

    The subjective length is evaluated literally at the midpoint of every
    interval between consecutive distinct deficit values.
    """
    validate_positive(dt, "dt")
    p = validate_profile(profile)
    if direction == "forward":
        g = np.abs(p)
    elif direction == "backward":
        g = np.abs(p - p[0])
    else:
        raise ValidationError(f"direction must be 'forward' or 'backward', got '{direction}'")

    peak = float(g.max())
    if peak == 0.0:
        return 0.0
    last = g.size - 1
    levels = np.unique(np.concatenate([[0.0], g]))
    total = 0.0
    for lo, hi in zip(levels[:-1], levels[1:]):
        eps = 0.5 * (lo + hi)
        if direction == "forward":
            exceed = [m for m in range(g.size) if g[m] > eps]
            length = min(exceed[-1] + 1, last) * dt if exceed else 0.0
        else:
            below = [j for j in range(g.size) if g[j] <= eps]
            length = (last - below[-1]) * dt
        total += (hi - lo) * length
    return min(total / peak, horizon)
