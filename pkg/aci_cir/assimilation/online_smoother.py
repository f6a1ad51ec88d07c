"""Online forward-in-time smoother with adaptive lag truncation

Each new observation xⁿ updates every retained lagged smoother estimate
μₛ^{j,n}, Rₛ^{j,n} through the one-step-lagged (boundary) smoother and the
update matrices D^{j,n−2} = Eʲ⋯E^{n−2}. Entries whose update matrix has
decayed below a tolerance, or whose lag exceeds the cap, are frozen and
evicted; their value at eviction is final.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd

from ..config.settings import settings
from ..causality.info_metrics import batch_relative_entropy
from ..dynamics.sde_sim import CgnsModel, Trajectory
from ..utils.errors import BankIndexError, NumericalError, ValidationError
from ..utils.formatters import gaussian_columns
from .cgns_filter import AuxMatrices, FilterSeries, GaussianState, forecast

logger = logging.getLogger(__name__)


class BoundaryResult(NamedTuple):
    """One-step-lagged smoother μₛ^{n−1,n}, Rₛ^{n−1,n} with its residual terms"""

    state: GaussianState
    residual_mean: np.ndarray  # b^{n−1}
    residual_cov: np.ndarray  # P^{n−1}_n


class EvictedEntry(NamedTuple):
    j: int
    mean: np.ndarray
    cov: np.ndarray
    by_cap: bool


def boundary_smoother(
    aux_prev: AuxMatrices,
    filt_prev: GaussianState,
    filt_next: GaussianState,
    x_prev: np.ndarray,
    x_next: np.ndarray,
    model: CgnsModel,
    t_prev: float,
    dt: float,
) -> BoundaryResult:
    """Smoother for y^{n−1} given observations up to n.

    When the step carries no information about y (K and F vanish), the
    previous filter state is returned unchanged.
    """
    c = model.coefficients(t_prev, x_prev)
    E, F = aux_prev.E, aux_prev.F
    mean_prev, cov_prev = filt_prev
    advance = np.eye(E.shape[0]) + c.lambda_y * dt
    innovation = x_next - x_prev - (c.lambda_x @ mean_prev + c.f_x) * dt

    b = mean_prev - E @ (advance @ mean_prev + c.f_y * dt) + F @ innovation
    P = cov_prev - E @ advance @ cov_prev - F @ c.lambda_x @ cov_prev * dt

    if not np.any(aux_prev.K) and not np.any(F):
        return BoundaryResult(GaussianState(mean_prev.copy(), cov_prev.copy()), b, P)

    mean = E @ filt_next.mean + b
    cov = E @ filt_next.cov @ E.T + P
    cov = 0.5 * (cov + cov.T)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise NumericalError(f"{model.name}: boundary smoother is not finite at t={t_prev:.6g}", time=t_prev)
    return BoundaryResult(GaussianState(mean, cov), b, P)


class SmootherBank:
    """Rolling store of lagged smoother statistics for j in [first_index, n_current].

    Storage is a flat buffer twice the lag capacity; the retained block is a
    contiguous slice that is moved to the front when it reaches the end.
    Besides the current estimates the bank keeps, per entry, the increment
    applied by the latest step, so the previous (lagged) estimates remain
    available as ``means - step_means``.
    """

    def __init__(
        self,
        dim_hid: int,
        lag_cap: Optional[int] = None,
        lag_tolerance: Optional[float] = None,
    ):
        self.dim_hid = dim_hid
        self.lag_cap = settings.lag_cap if lag_cap is None else int(lag_cap)
        self.lag_tolerance = settings.lag_tolerance if lag_tolerance is None else float(lag_tolerance)
        if self.lag_cap < 1:
            raise ValidationError(f"lag_cap must be >= 1, got {self.lag_cap}")

        size = 2 * (self.lag_cap + 2)
        l = dim_hid
        self._mean = np.zeros((size, l))
        self._cov = np.zeros((size, l, l))
        self._update = np.zeros((size, l, l))
        self._step_mean = np.zeros((size, l))
        self._step_cov = np.zeros((size, l, l))
        self._lo = 0
        self._hi = 0

        self.first_index = 0
        self.n_current = -1
        self.boundary: Optional[BoundaryResult] = None
        self.evicted: List[EvictedEntry] = []

    def __len__(self) -> int:
        return self._hi - self._lo

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.first_index, self.first_index + len(self))

    @property
    def means(self) -> np.ndarray:
        return self._mean[self._lo : self._hi]

    @property
    def covs(self) -> np.ndarray:
        return self._cov[self._lo : self._hi]

    @property
    def updates(self) -> np.ndarray:
        """Update matrices D^{j,n−1} ready for the next step"""
        return self._update[self._lo : self._hi]

    @property
    def step_means(self) -> np.ndarray:
        return self._step_mean[self._lo : self._hi]

    @property
    def step_covs(self) -> np.ndarray:
        return self._step_cov[self._lo : self._hi]

    def entry(self, j: int) -> GaussianState:
        pos = self._position(j)
        return GaussianState(self._mean[pos].copy(), self._cov[pos].copy())

    def lagged(self, j: int) -> GaussianState:
        """Estimate of y^j before the latest observation was assimilated"""
        pos = self._position(j)
        return GaussianState(
            self._mean[pos] - self._step_mean[pos], self._cov[pos] - self._step_cov[pos]
        )

    def _position(self, j: int) -> int:
        if not self.first_index <= j <= self.n_current:
            raise BankIndexError(
                f"index {j} not retained; bank holds [{self.first_index}, {self.n_current}]"
            )
        return self._lo + j - self.first_index

    def _append(self, state: GaussianState, step_mean: np.ndarray, step_cov: np.ndarray) -> None:
        if self._hi == self._mean.shape[0]:
            count = len(self)
            for buf in (self._mean, self._cov, self._update, self._step_mean, self._step_cov):
                buf[:count] = buf[self._lo : self._hi]
            self._lo, self._hi = 0, count
        pos = self._hi
        self._mean[pos] = state.mean
        self._cov[pos] = state.cov
        self._update[pos] = np.eye(self.dim_hid)
        self._step_mean[pos] = step_mean
        self._step_cov[pos] = step_cov
        self._hi += 1

    def start(self, filt0: GaussianState) -> "SmootherBank":
        """Initialize with the filter state at index 0"""
        if self.n_current != -1:
            raise BankIndexError("bank already started")
        self._append(filt0, np.zeros(self.dim_hid), np.zeros((self.dim_hid, self.dim_hid)))
        self.n_current = 0
        return self

    def advance(
        self,
        n: int,
        aux_prev: AuxMatrices,
        boundary: BoundaryResult,
        filt_prev: GaussianState,
        filt_next: GaussianState,
        forecast_next: Optional[GaussianState] = None,
    ) -> "SmootherBank":
        """Assimilate observation n into every retained entry and append entry n.

        ``forecast_next`` is the one-step forecast of yⁿ from data up to n−1;
        it serves as the lagged estimate of the newest entry.
        """
        if n != self.n_current + 1:
            raise BankIndexError(f"bank at n={self.n_current} cannot advance to n={n}")
        self.evicted = []
        self.boundary = boundary

        delta_mean = boundary.state.mean - filt_prev.mean
        delta_cov = boundary.state.cov - filt_prev.cov
        D = self.updates
        step_mean = np.einsum("mij,j->mi", D, delta_mean)
        step_cov = D @ delta_cov @ np.swapaxes(D, 1, 2)
        step_cov = 0.5 * (step_cov + np.swapaxes(step_cov, 1, 2))
        self.means[:] += step_mean
        self.covs[:] += step_cov
        self.step_means[:] = step_mean
        self.step_covs[:] = step_cov
        self.updates[:] = D @ aux_prev.E

        if forecast_next is None:
            self._append(filt_next, np.zeros(self.dim_hid), np.zeros((self.dim_hid, self.dim_hid)))
        else:
            self._append(
                filt_next, filt_next.mean - forecast_next.mean, filt_next.cov - forecast_next.cov
            )
        self.n_current = n
        self._evict()
        return self

    def _evict(self) -> None:
        n = self.n_current
        while len(self) > 1:
            pos = self._lo
            j = self.first_index
            by_cap = n - j > self.lag_cap
            small = np.linalg.norm(self._update[pos]) < self.lag_tolerance
            if not (by_cap or small):
                break
            self.evicted.append(
                EvictedEntry(j, self._mean[pos].copy(), self._cov[pos].copy(), by_cap and not small)
            )
            self._lo += 1
            self.first_index += 1
        if self.evicted:
            logger.debug(f"Evicted {len(self.evicted)} entries at n={n}; oldest retained j={self.first_index}")

    def backward_profile(self, cause: Optional[Sequence[int]] = None, jitter: float = 0.0) -> np.ndarray:
        """Backward deficits |Pʲ − P⁰| over j = 0..n at the current step.

        Pʲ is the relative entropy of the current estimate of yʲ against its
        estimate before the latest observation; evicted entries have Pʲ = 0.
        """
        idx = list(range(self.dim_hid)) if cause is None else list(cause)
        sel = np.ix_(range(len(self)), idx, idx)
        means = self.means[:, idx]
        covs = self.covs[sel]
        values, _, _ = batch_relative_entropy(
            means, covs, means - self.step_means[:, idx], covs - self.step_covs[sel], jitter=jitter
        )
        reference = values[0] if self.first_index == 0 else 0.0
        profile = np.full(self.n_current + 1, abs(reference))
        profile[self.first_index :] = np.abs(values - reference)
        return profile

    def snapshot(self) -> pd.DataFrame:
        """Retained entries as rows ``j,n,mu_*,R_*,normD`` (R row-major upper triangle)"""
        columns = gaussian_columns(self.means, self.covs)
        frame = pd.DataFrame({"j": self.indices, "n": self.n_current, **columns})
        frame["normD"] = np.linalg.norm(self.updates, axis=(1, 2))
        return frame


def bank_advance(
    bank: SmootherBank,
    aux_prev: AuxMatrices,
    boundary: BoundaryResult,
    filt_prev: GaussianState,
    filt_next: GaussianState,
    forecast_next: Optional[GaussianState] = None,
) -> SmootherBank:
    """Advance ``bank`` by one observation (see SmootherBank.advance)"""
    return bank.advance(bank.n_current + 1, aux_prev, boundary, filt_prev, filt_next, forecast_next)


def replay(
    model: CgnsModel,
    traj: Trajectory,
    filt: FilterSeries,
    lag_cap: Optional[int] = None,
    lag_tolerance: Optional[float] = None,
) -> Iterator[SmootherBank]:
    """Run the online smoother over a filtered path, yielding the bank after each step.

    The same bank object is yielded every time and mutated in place.
    """
    if len(filt) != traj.n_steps + 1:
        raise ValidationError("filter series and trajectory lengths differ")
    bank = SmootherBank(model.dim_hid, lag_cap, lag_tolerance)
    bank.start(filt.state(0))
    yield bank
    times, x, dt = traj.times, traj.x_path, traj.dt
    for n in range(1, traj.n_steps + 1):
        prev, nxt = filt.state(n - 1), filt.state(n)
        aux = filt.aux[n - 1]
        boundary = boundary_smoother(aux, prev, nxt, x[n - 1], x[n], model, times[n - 1], dt)
        predicted = forecast(model, times[n - 1], x[n - 1], prev, dt)
        bank.advance(n, aux, boundary, prev, nxt, predicted)
        yield bank


@dataclass
class SmootherSeries:
    """Complete smoother μₛ^{j,N}, Rₛ^{j,N} with flags for entries frozen by the lag cap"""

    times: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    capped: np.ndarray

    def __len__(self) -> int:
        return self.means.shape[0]

    def state(self, j: int) -> GaussianState:
        return GaussianState(self.means[j], self.covs[j])


def complete_smoother(
    filt: FilterSeries,
    model: CgnsModel,
    traj: Trajectory,
    lag_cap: Optional[int] = None,
    lag_tolerance: Optional[float] = None,
) -> SmootherSeries:
    """Smoother statistics given all data at every grid point"""
    n_total = traj.n_steps + 1
    means = np.empty((n_total, model.dim_hid))
    covs = np.empty((n_total, model.dim_hid, model.dim_hid))
    capped = np.zeros(n_total, dtype=bool)

    bank = None
    for bank in replay(model, traj, filt, lag_cap, lag_tolerance):
        for entry in bank.evicted:
            means[entry.j], covs[entry.j], capped[entry.j] = entry.mean, entry.cov, entry.by_cap
    assert bank is not None
    means[bank.indices] = bank.means
    covs[bank.indices] = bank.covs

    if capped.any():
        logger.warning(f"{int(capped.sum())} smoother entries were frozen by the lag cap {bank.lag_cap}")
    logger.info(f"Smoothed {model.name} over {traj.n_steps} steps")
    return SmootherSeries(times=traj.times, means=means, covs=covs, capped=capped)
