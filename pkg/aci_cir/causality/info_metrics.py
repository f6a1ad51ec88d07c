"""Gaussian relative entropy with its signal-dispersion split, and the ACI metric"""

from typing import NamedTuple, Sequence, Tuple

import numpy as np

from ..assimilation.cgns_filter import GaussianState
from ..utils.errors import DegenerateReferenceError, NumericalError, ValidationError
from ..utils.validation import validate_indices


class EntropyValue(NamedTuple):
    """Relative entropy in nats; total = signal + dispersion"""

    total: float
    signal: float
    dispersion: float


def batch_relative_entropy(
    p_means: np.ndarray,
    p_covs: np.ndarray,
    q_means: np.ndarray,
    q_covs: np.ndarray,
    jitter: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Relative entropies KL(pᵢ ‖ qᵢ) over a leading batch axis.

    The dispersion is computed from the eigenvalues of L⁻¹R_pL⁻ᵀ, with L the
    Cholesky factor of R_q, so no determinant is ever formed. Pairs whose
    arrays are identical give exactly zero.

    Returns:
        Arrays (total, signal, dispersion), each of the batch length.

    Raises:
        DegenerateReferenceError: If some R_q is not positive definite.
    """
    p_means = np.asarray(p_means, dtype=float)
    q_means = np.asarray(q_means, dtype=float)
    p_covs = np.asarray(p_covs, dtype=float)
    q_covs = np.asarray(q_covs, dtype=float)
    if p_means.shape != q_means.shape or p_covs.shape != q_covs.shape:
        raise ValidationError(
            f"Gaussian dimensions differ: means {p_means.shape}/{q_means.shape}, "
            f"covariances {p_covs.shape}/{q_covs.shape}"
        )
    m, l = p_means.shape
    signal = np.zeros(m)
    dispersion = np.zeros(m)

    same = np.all(p_means == q_means, axis=1) & np.all(p_covs == q_covs, axis=(1, 2))
    idx = np.flatnonzero(~same)
    if idx.size:
        ref = q_covs[idx]
        if jitter > 0.0:
            ref = ref + jitter * np.eye(l)
        if not np.all(np.isfinite(ref)):
            raise DegenerateReferenceError("reference covariance contains nonfinite entries")
        try:
            chol = np.linalg.cholesky(ref)
        except np.linalg.LinAlgError as e:
            raise DegenerateReferenceError("reference covariance is not positive definite") from e

        diff = (p_means[idx] - q_means[idx])[..., None]
        z = np.linalg.solve(chol, diff)
        signal[idx] = 0.5 * np.sum(z**2, axis=(1, 2))

        half = np.linalg.solve(chol, p_covs[idx])
        congruent = np.linalg.solve(chol, np.swapaxes(half, 1, 2))
        congruent = 0.5 * (congruent + np.swapaxes(congruent, 1, 2))
        eig = np.linalg.eigvalsh(congruent)
        if np.any(eig <= 0.0):
            raise NumericalError("compared covariance is singular; relative entropy is infinite")
        u = eig - 1.0
        dispersion[idx] = np.maximum(0.5 * np.sum(u - np.log1p(u), axis=1), 0.0)

    return signal + dispersion, signal, dispersion


def gauss_relative_entropy(p: GaussianState, q: GaussianState, jitter: float = 0.0) -> EntropyValue:
    """KL(p ‖ q) for Gaussians in nats with signal and dispersion parts"""
    p_mean, q_mean = np.atleast_1d(p.mean), np.atleast_1d(q.mean)
    p_cov, q_cov = np.atleast_2d(p.cov), np.atleast_2d(q.cov)
    total, signal, dispersion = batch_relative_entropy(
        p_mean[None], p_cov[None], q_mean[None], q_cov[None], jitter=jitter
    )
    return EntropyValue(float(total[0]), float(signal[0]), float(dispersion[0]))


def aci_metric(filter_j: GaussianState, smoother_jN: GaussianState, jitter: float = 0.0) -> EntropyValue:
    """Information the full record adds about y(tⱼ): KL(smoother ‖ filter).

    A strictly positive value marks y(tⱼ) as an assimilative cause of x.
    """
    return gauss_relative_entropy(smoother_jN, filter_j, jitter=jitter)


def marginal(state: GaussianState, indices: Sequence[int]) -> GaussianState:
    """Marginal of a Gaussian on a subset of coordinates"""
    mean = np.atleast_1d(state.mean)
    idx = list(validate_indices(indices, mean.shape[0], "marginal indices"))
    return GaussianState(mean[idx].copy(), np.atleast_2d(state.cov)[np.ix_(idx, idx)].copy())
