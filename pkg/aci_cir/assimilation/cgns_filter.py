"""Discrete closed-form filter for conditionally Gaussian nonlinear systems"""

import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np
from scipy import linalg

from ..config.settings import settings
from ..dynamics.sde_sim import CgnsModel, Coefficients, Trajectory
from ..utils.errors import (
    BlowupError,
    ConfigurationError,
    GramCouplingError,
    NumericalError,
    ValidationError,
)
from ..utils.validation import validate_square, validate_vector

logger = logging.getLogger(__name__)


class GaussianState(NamedTuple):
    """Posterior mean and covariance of the hidden state at one time"""

    mean: np.ndarray
    cov: np.ndarray


class AuxMatrices(NamedTuple):
    """Per-step matrices shared by the smoother recursions"""

    E: np.ndarray  # l×l
    F: np.ndarray  # l×k
    Gx: np.ndarray  # k×l
    Gy: np.ndarray  # l×l
    H: np.ndarray  # l×l
    K: np.ndarray  # k×l
    gram_inv: np.ndarray  # k×k


@dataclass
class FilterSeries:
    """Filter posteriors at every grid point plus the auxiliary matrices of every step"""

    times: np.ndarray
    means: np.ndarray  # (N+1, l)
    covs: np.ndarray  # (N+1, l, l)
    aux: List[AuxMatrices]

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def n_steps(self) -> int:
        return self.means.shape[0] - 1

    def state(self, j: int) -> GaussianState:
        return GaussianState(self.means[j], self.covs[j])


def gram(A1: np.ndarray, A2: np.ndarray, B1: np.ndarray, B2: np.ndarray) -> np.ndarray:
    """Channel-summed cross Gram matrix A1·B1ᵀ + A2·B2ᵀ"""
    A1, A2, B1, B2 = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A1, A2, B1, B2))
    if A1.shape[1] != B1.shape[1] or A2.shape[1] != B2.shape[1]:
        raise ValidationError(
            f"noise channel counts disagree: {A1.shape}/{B1.shape} and {A2.shape}/{B2.shape}"
        )
    return A1 @ B1.T + A2 @ B2.T


def analysis_gram_inverse(
    model: CgnsModel, c: Coefficients, t: float, index: Optional[int] = None
) -> np.ndarray:
    """Inverse observational Gram used in every gain-bearing term.

    Rows and columns of neutralized observed coordinates are zero, so those
    coordinates never inform the update. This requires the Gram to have no
    coupling between kept and neutralized blocks.

    Raises:
        ConfigurationError: If the (kept block of the) Gram is not positive definite.
        GramCouplingError: If kept and neutralized blocks are coupled.
    """
    g = gram(c.sigma_x1, c.sigma_x2, c.sigma_x1, c.sigma_x2)
    k = g.shape[0]
    keep = [i for i in range(k) if i not in model.neutralized]
    result = np.zeros((k, k))
    if not keep:
        return result
    if model.neutralized:
        drop = list(model.neutralized)
        coupling = g[np.ix_(keep, drop)]
        scale = np.sqrt(np.outer(np.diag(g)[keep], np.diag(g)[drop]))
        if np.any(np.abs(coupling) > settings.gram_coupling_tolerance * np.maximum(scale, 1e-300)):
            raise GramCouplingError(
                f"{model.name}: observation noise couples kept and neutralized coordinates "
                f"at t={t:.6g} (index {index}); use large-noise conditioning"
            )
    sub = g[np.ix_(keep, keep)]
    try:
        factor = linalg.cho_factor(sub, lower=True)
    except linalg.LinAlgError as e:
        raise ConfigurationError(
            f"{model.name}: observational Gram matrix is singular at t={t:.6g} (index {index})"
        ) from e
    result[np.ix_(keep, keep)] = linalg.cho_solve(factor, np.eye(len(keep)))
    return result


def _finalize(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    if w[0] < 0.0:
        logger.debug(f"Clipping negative covariance eigenvalue {w[0]:.3e}")
        cov = (v * np.maximum(w, 0.0)) @ v.T
        cov = 0.5 * (cov + cov.T)
    return cov


def _propagate(c: Coefficients, state: GaussianState, dt: float):
    mean, cov = state
    syy = gram(c.sigma_y1, c.sigma_y2, c.sigma_y1, c.sigma_y2)
    mean_next = mean + (c.lambda_y @ mean + c.f_y) * dt
    cov_rate = c.lambda_y @ cov + cov @ c.lambda_y.T + syy
    return mean_next, cov_rate


def forecast(
    model: CgnsModel, t: float, x: np.ndarray, state: GaussianState, dt: float
) -> GaussianState:
    """One-step moment propagation without the observation update"""
    c = model.coefficients(t, x)
    mean_next, cov_rate = _propagate(c, state, dt)
    return GaussianState(mean_next, _finalize(state.cov + cov_rate * dt))


MAX_SUBSTEP_HALVINGS = 12


def _explicit_update(
    c: Coefficients,
    gram_inv: np.ndarray,
    syx: np.ndarray,
    state: GaussianState,
    dx: np.ndarray,
    dt: float,
):
    mean_next, cov_rate = _propagate(c, state, dt)
    cross = state.cov @ c.lambda_x.T + syx
    innovation = dx - (c.lambda_x @ state.mean + c.f_x) * dt
    gain = cross @ gram_inv
    return mean_next + gain @ innovation, state.cov + (cov_rate - gain @ cross.T) * dt


def _loses_definiteness(cov: np.ndarray) -> bool:
    if not np.all(np.isfinite(cov)):
        return False
    sym = 0.5 * (cov + cov.T)
    floor = settings.psd_tolerance * max(float(np.trace(np.abs(sym))), 1.0)
    return bool(np.linalg.eigvalsh(sym)[0] < -floor)


def _substepped_update(
    c: Coefficients,
    gram_inv: np.ndarray,
    syx: np.ndarray,
    prior: GaussianState,
    dx: np.ndarray,
    dt: float,
):
    """Split the step into 2, 4, … equal parts with the increment spread evenly.

    Coefficients stay frozen at the step start. Returns the first split whose
    intermediate covariances all stay positive semidefinite, else the finest.
    """
    for halvings in range(1, MAX_SUBSTEP_HALVINGS + 1):
        parts = 2**halvings
        state = prior
        ok = True
        for _ in range(parts):
            mean, cov = _explicit_update(c, gram_inv, syx, state, dx / parts, dt / parts)
            if _loses_definiteness(cov):
                ok = False
            state = GaussianState(mean, 0.5 * (cov + cov.T))
        if ok:
            return state.mean, state.cov, parts
    return state.mean, state.cov, parts


def filter_step(
    model: CgnsModel,
    t_j: float,
    x_j: np.ndarray,
    x_next: np.ndarray,
    prior: GaussianState,
    dt: float,
    index: Optional[int] = None,
) -> GaussianState:
    """Assimilate the increment x_next − x_j into the posterior of y.

    Coefficients are evaluated at (t_j, x_j); the gain uses the
    correlated-noise cross term Σʸ∘Σˣ. A step whose explicit covariance
    update would lose positive semidefiniteness is repeated on a finer split
    of the same interval; any remaining negative eigenvalue is clipped.

    Raises:
        ConfigurationError: If the observational Gram matrix is singular.
        BlowupError: If the updated moments are not finite.
    """
    c = model.coefficients(t_j, x_j)
    gram_inv = analysis_gram_inverse(model, c, t_j, index)
    syx = gram(c.sigma_y1, c.sigma_y2, c.sigma_x1, c.sigma_x2)
    dx = x_next - x_j

    mean_next, cov_next = _explicit_update(c, gram_inv, syx, prior, dx, dt)
    if _loses_definiteness(cov_next):
        mean_next, cov_next, parts = _substepped_update(c, gram_inv, syx, prior, dx, dt)
        logger.debug(
            f"{model.name}: covariance update split into {parts} parts at t={t_j:.6g} (index {index})"
        )

    if not (np.all(np.isfinite(mean_next)) and np.all(np.isfinite(cov_next))):
        raise BlowupError(
            f"{model.name}: filter update is not finite at t={t_j:.6g} (index {index})",
            index=index,
            time=t_j,
        )
    return GaussianState(mean_next, _finalize(cov_next))


def covariance_precision(R: np.ndarray) -> np.ndarray:
    """Inverse of a filter covariance; directions clipped to zero variance get zero precision"""
    w, v = np.linalg.eigh(0.5 * (R + R.T))
    floor = settings.psd_tolerance * max(float(np.sum(np.abs(w))), 1.0)
    if w[0] > floor:
        return linalg.cho_solve(linalg.cho_factor(R, lower=True), np.eye(R.shape[0]))
    degenerate = int(np.sum(w <= floor))
    logger.debug(f"Covariance has {degenerate} degenerate direction(s); using pseudo-inverse")
    inv_w = np.zeros_like(w)
    inv_w[w > floor] = 1.0 / w[w > floor]
    return (v * inv_w) @ v.T


def build_aux(
    model: CgnsModel,
    t: float,
    x: np.ndarray,
    state: GaussianState,
    dt: float,
    index: Optional[int] = None,
) -> AuxMatrices:
    """Auxiliary matrices E, F, Gˣ, Gʸ, H, K at one step from the filter covariance there"""
    c = model.coefficients(t, x)
    gram_inv = analysis_gram_inverse(model, c, t, index)
    R = state.cov
    l = R.shape[0]
    if not np.all(np.isfinite(R)):
        raise NumericalError(
            f"{model.name}: filter covariance is not finite at t={t:.6g} (index {index})",
            index=index,
            time=t,
        )
    R_inv = covariance_precision(R)

    sxy = gram(c.sigma_x1, c.sigma_x2, c.sigma_y1, c.sigma_y2)
    syy = gram(c.sigma_y1, c.sigma_y2, c.sigma_y1, c.sigma_y2)
    Gx = c.lambda_x + sxy @ R_inv
    Gy = c.lambda_y + syy @ R_inv
    H = R_inv @ (c.lambda_y @ R + R @ c.lambda_y.T + syy)
    K = gram_inv @ Gx
    E = np.eye(l) + (sxy.T @ gram_inv @ Gx - Gy) * dt
    KRK = K @ R @ K.T
    F = -R @ (
        K.T
        + (Gx.T @ K @ R @ K.T - R_inv @ H.T @ R @ K.T + c.lambda_y.T @ K.T) * dt
        - c.lambda_x.T @ (gram_inv + KRK * dt)
    )
    return AuxMatrices(E=E, F=F, Gx=Gx, Gy=Gy, H=H, K=K, gram_inv=gram_inv)


def initial_state(model: CgnsModel, t0: float, x0: np.ndarray) -> GaussianState:
    """Zero mean with a covariance from the stationary hidden variance at (t0, x0).

    Uses trace/l of the continuous Lyapunov solution when Λʸ is stable, else 1.
    """
    c = model.coefficients(t0, x0)
    l = model.dim_hid
    scale = 1.0
    if np.all(np.linalg.eigvals(c.lambda_y).real < 0):
        syy = gram(c.sigma_y1, c.sigma_y2, c.sigma_y1, c.sigma_y2)
        stationary = linalg.solve_continuous_lyapunov(c.lambda_y, -syy)
        candidate = float(np.trace(stationary)) / l
        if np.isfinite(candidate) and candidate > 0:
            scale = candidate
    return GaussianState(np.zeros(l), scale * np.eye(l))


def run_filter(
    model: CgnsModel, traj: Trajectory, init: Optional[GaussianState] = None
) -> FilterSeries:
    """Filter the whole observed path and cache the auxiliary matrices of every step"""
    if traj.x_path.shape[1] != model.dim_obs:
        raise ValidationError(
            f"trajectory observes {traj.x_path.shape[1]} variables, model {model.name} expects {model.dim_obs}"
        )
    if init is None:
        init = initial_state(model, traj.t0, traj.x_path[0])
    else:
        init = GaussianState(
            validate_vector(init.mean, model.dim_hid, "initial mean"),
            validate_square(init.cov, model.dim_hid, "initial covariance"),
        )

    n, l, dt = traj.n_steps, model.dim_hid, traj.dt
    times = traj.times
    means = np.empty((n + 1, l))
    covs = np.empty((n + 1, l, l))
    means[0], covs[0] = init.mean, init.cov
    aux: List[AuxMatrices] = []
    state = GaussianState(means[0], covs[0])
    for j in range(n):
        t, x = times[j], traj.x_path[j]
        aux.append(build_aux(model, t, x, state, dt, index=j))
        state = filter_step(model, t, x, traj.x_path[j + 1], state, dt, index=j)
        means[j + 1], covs[j + 1] = state

    logger.info(f"Filtered {model.name} over {n} steps (dt={dt:g})")
    return FilterSeries(times=times, means=means, covs=covs, aux=aux)
