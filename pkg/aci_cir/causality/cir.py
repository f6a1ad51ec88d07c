"""Causal influence range (CIR) profiles, lengths and per-time series

A forward profile tracks how far ahead the observation record keeps
informing a cause at one time; a backward profile tracks how far back
in time causes still inform the current observation. Lengths are
ε-averaged threshold durations normalized by the largest deficit, so
they are objective (free of a threshold choice).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from ..assimilation.cgns_filter import FilterSeries
from ..assimilation.online_smoother import SmootherBank, SmootherSeries, replay
from ..config.settings import settings
from ..dynamics.sde_sim import CgnsModel, Trajectory
from ..utils.errors import ValidationError
from ..utils.validation import validate_positive, validate_profile
from .info_metrics import batch_relative_entropy

logger = logging.getLogger(__name__)

EPS_GRID_POLICIES = ("staircase",)


def _deficit(profile: Sequence[float]) -> np.ndarray:
    return np.abs(validate_profile(profile))


def _check_grid(eps_grid: str) -> None:
    if eps_grid not in EPS_GRID_POLICIES:
        raise ValidationError(f"unknown ε-grid policy '{eps_grid}'; expected one of {EPS_GRID_POLICIES}")


def weak_evidence(max_deficit: float, threshold: Optional[float] = None) -> bool:
    """True when the largest deficit is too small for a trustworthy length"""
    threshold = settings.weak_evidence_threshold if threshold is None else threshold
    return bool(max_deficit < threshold)


# Forward direction


def forward_length_subjective(profile: Sequence[float], dt: float, eps: float) -> float:
    """Smallest lag after which the deficit stays at or below ``eps``"""
    p = _deficit(profile)
    validate_positive(dt, "dt")
    above = np.flatnonzero(p > eps)
    if above.size == 0:
        return 0.0
    return min(int(above[-1]) + 1, p.size - 1) * dt


def forward_length_approx(profile: Sequence[float], dt: float) -> float:
    """Area under the deficit over its maximum, bounded by the profile horizon"""
    p = _deficit(profile)
    validate_positive(dt, "dt")
    peak = p.max()
    if peak == 0.0:
        return 0.0
    return float(min(dt * p.sum() / peak, (p.size - 1) * dt))


def forward_length_exact(profile: Sequence[float], dt: float, eps_grid: str = "staircase") -> float:
    """ε-average of the subjective length over (0, max deficit].

    The subjective length is a staircase in ε with steps at the profile
    values, so the average is evaluated from the suffix maxima without any
    quadrature. Never below the approximate length.
    """
    _check_grid(eps_grid)
    p = _deficit(profile)
    validate_positive(dt, "dt")
    peak = p.max()
    if peak == 0.0:
        return 0.0
    suffix_max = np.maximum.accumulate(p[::-1])[::-1]
    return float(dt * (suffix_max.sum() - p[-1]) / peak)


# Backward direction


def _recentered(profile: Sequence[float]) -> np.ndarray:
    p = validate_profile(profile)
    return np.abs(p - p[0])


def backward_length_subjective(profile: Sequence[float], dt: float, eps: float) -> float:
    """Span back from the newest index to the last index whose deficit is at most ``eps``"""
    g = _recentered(profile)
    validate_positive(dt, "dt")
    if eps < 0:
        return 0.0
    last = int(np.flatnonzero(g <= eps)[-1])
    return (g.size - 1 - last) * dt


def _clip(value: float, horizon: Optional[float]) -> float:
    return float(value if horizon is None else min(value, horizon))


def backward_length_approx(profile: Sequence[float], dt: float, horizon: Optional[float] = None) -> float:
    """Normalized area of the recentered backward deficit"""
    g = _recentered(profile)
    validate_positive(dt, "dt")
    peak = g.max()
    if peak == 0.0:
        return 0.0
    return _clip(dt * g.sum() / peak, horizon)


def backward_length_exact(
    profile: Sequence[float], dt: float, horizon: Optional[float] = None, eps_grid: str = "staircase"
) -> float:
    """ε-average of the backward subjective length, from suffix minima"""
    _check_grid(eps_grid)
    g = _recentered(profile)
    validate_positive(dt, "dt")
    peak = g.max()
    if peak == 0.0:
        return 0.0
    suffix_min = np.minimum.accumulate(g[::-1])[::-1]
    return _clip(dt * suffix_min.sum() / peak, horizon)


def backward_cir_profile(
    bank: SmootherBank, cause: Optional[Sequence[int]] = None, jitter: float = 0.0
) -> np.ndarray:
    """Backward deficit profile at the bank's current time n, over j = 0..n.

    Entry j holds |P^j − P^0| with P^j the relative entropy between the
    lagged smoother of yʲ after and before observation n. Evicted entries
    have P^j = 0.
    """
    return bank.backward_profile(cause, jitter)


def forward_deficits(
    lagged_means: np.ndarray,
    lagged_covs: np.ndarray,
    final_means: np.ndarray,
    final_covs: np.ndarray,
    jitter: float = 0.0,
) -> np.ndarray:
    """Forward deficits KL(final ‖ lagged) for a batch of lagged estimates"""
    values, _, _ = batch_relative_entropy(final_means, final_covs, lagged_means, lagged_covs, jitter=jitter)
    return values


def forward_cir_profile(
    model: CgnsModel,
    traj: Trajectory,
    filt: FilterSeries,
    final: SmootherSeries,
    j: int,
    cause: Optional[Sequence[int]] = None,
    lag_cap: Optional[int] = None,
    lag_tolerance: Optional[float] = None,
    jitter: float = 0.0,
) -> np.ndarray:
    """Forward deficit profile of index j over n = j..N from a replay of the smoother.

    After j leaves the bank its estimate is final, so the remaining tail is zero.
    """
    n_total = traj.n_steps + 1
    if not 0 <= j < n_total:
        raise ValidationError(f"index {j} outside [0, {n_total - 1}]")
    idx = list(range(model.dim_hid)) if cause is None else list(cause)
    profile = np.zeros(n_total - j)
    for bank in replay(model, traj, filt, lag_cap, lag_tolerance):
        n = bank.n_current
        if n < j:
            continue
        if j < bank.first_index:
            break
        lagged = bank.entry(j)
        profile[n - j] = forward_deficits(
            lagged.mean[idx][None],
            lagged.cov[np.ix_(idx, idx)][None],
            final.means[j, idx][None],
            final.covs[j][np.ix_(idx, idx)][None],
            jitter,
        )[0]
    return profile


@dataclass
class AnalysisOptions:
    """Knobs for the two-pass CIR computation; defaults come from settings"""

    lag_cap: int = field(default_factory=lambda: settings.lag_cap)
    lag_tolerance: float = field(default_factory=lambda: settings.lag_tolerance)
    stride: int = field(default_factory=lambda: settings.analysis_stride)
    exact: bool = False
    weak_threshold: float = field(default_factory=lambda: settings.weak_evidence_threshold)
    jitter: float = field(default_factory=lambda: settings.covariance_jitter)

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ValidationError(f"analysis stride must be >= 1, got {self.stride}")
        if self.lag_cap < 1:
            raise ValidationError(f"lag_cap must be >= 1, got {self.lag_cap}")
        if self.lag_tolerance < 0:
            raise ValidationError(f"lag_tolerance must be >= 0, got {self.lag_tolerance}")


@dataclass
class CirSeries:
    """Per-analysis-time ACI and CIR results for one query"""

    t: np.ndarray
    aci_total: np.ndarray
    aci_signal: np.ndarray
    aci_dispersion: np.ndarray
    tau_forward_approx: np.ndarray
    tau_backward_approx: np.ndarray
    max_deficit_forward: np.ndarray
    max_deficit_backward: np.ndarray
    flags: List[str]
    tau_forward_exact: Optional[np.ndarray] = None
    tau_backward_exact: Optional[np.ndarray] = None
    label: str = ""

    def __len__(self) -> int:
        return self.t.shape[0]

    def to_frame(self) -> pd.DataFrame:
        """Columns ``t,aci,aci_signal,aci_dispersion,tau_f_approx,tau_b_approx[,tau_f_exact,tau_b_exact],Mf,Mb,flags``"""
        columns = {
            "t": self.t,
            "aci": self.aci_total,
            "aci_signal": self.aci_signal,
            "aci_dispersion": self.aci_dispersion,
            "tau_f_approx": self.tau_forward_approx,
            "tau_b_approx": self.tau_backward_approx,
        }
        if self.tau_forward_exact is not None:
            columns["tau_f_exact"] = self.tau_forward_exact
        if self.tau_backward_exact is not None:
            columns["tau_b_exact"] = self.tau_backward_exact
        columns["Mf"] = self.max_deficit_forward
        columns["Mb"] = self.max_deficit_backward
        columns["flags"] = self.flags
        return pd.DataFrame(columns)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, label: str = "") -> "CirSeries":
        flags = frame["flags"].fillna("").astype(str).tolist()
        return cls(
            t=frame["t"].to_numpy(),
            aci_total=frame["aci"].to_numpy(),
            aci_signal=frame["aci_signal"].to_numpy(),
            aci_dispersion=frame["aci_dispersion"].to_numpy(),
            tau_forward_approx=frame["tau_f_approx"].to_numpy(),
            tau_backward_approx=frame["tau_b_approx"].to_numpy(),
            max_deficit_forward=frame["Mf"].to_numpy(),
            max_deficit_backward=frame["Mb"].to_numpy(),
            flags=flags,
            tau_forward_exact=frame["tau_f_exact"].to_numpy() if "tau_f_exact" in frame else None,
            tau_backward_exact=frame["tau_b_exact"].to_numpy() if "tau_b_exact" in frame else None,
            label=label,
        )


class _ForwardAccumulator:
    """Streams forward deficits of analysis entries while the bank replays"""

    def __init__(
        self, n_total: int, stride: int, final: SmootherSeries, cause: List[int], keep: bool, jitter: float
    ):
        self.analysis_idx = np.arange(0, n_total, stride)
        self.stride = stride
        self.final_means = final.means[:, cause]
        self.final_covs = final.covs[np.ix_(range(len(final)), cause, cause)]
        self.cause = cause
        self.keep = keep
        self.jitter = jitter
        m = self.analysis_idx.size
        self.total = np.zeros(m)
        self.peak = np.zeros(m)
        self._slots: List[np.ndarray] = []
        self._values: List[np.ndarray] = []

    def observe(self, bank: SmootherBank) -> None:
        j = bank.indices
        on_grid = j % self.stride == 0
        if not on_grid.any():
            return
        rows = np.flatnonzero(on_grid)
        entries = j[rows]
        slots = entries // self.stride
        covs = bank.covs[np.ix_(rows, self.cause, self.cause)]
        values = forward_deficits(
            bank.means[np.ix_(rows, self.cause)], covs, self.final_means[entries], self.final_covs[entries], self.jitter
        )
        self.total[slots] += values
        np.maximum.at(self.peak, slots, values)
        if self.keep:
            self._slots.append(slots)
            self._values.append(values)

    def profiles(self, n_total: int, full: bool = False) -> List[np.ndarray]:
        """Forward profile of every analysis entry.

        Values after eviction are zero. With ``full`` the profile spans
        n = j..N; otherwise it stops at the first zero after the retained part.
        """
        m = self.analysis_idx.size
        if self._slots:
            slots = np.concatenate(self._slots)
            order = np.argsort(slots, kind="stable")
            bounds = np.searchsorted(slots[order], np.arange(m + 1))
            ordered = np.concatenate(self._values)[order]
        else:
            bounds, ordered = np.zeros(m + 1, dtype=int), np.zeros(0)
        result = []
        for i, j in enumerate(self.analysis_idx):
            prefix = ordered[bounds[i] : bounds[i + 1]]
            length = n_total - int(j)
            if full:
                result.append(np.concatenate([prefix, np.zeros(length - prefix.size)]))
            else:
                result.append(np.concatenate([prefix, [0.0]]) if prefix.size < length else prefix)
        return result


def forward_cir_profiles(
    model: CgnsModel,
    traj: Trajectory,
    filt: FilterSeries,
    final: SmootherSeries,
    cause: Optional[Sequence[int]] = None,
    stride: int = 1,
    lag_cap: Optional[int] = None,
    lag_tolerance: Optional[float] = None,
    jitter: float = 0.0,
) -> List[np.ndarray]:
    """Full forward profiles at the analysis times 0, stride, 2·stride, … in one replay"""
    if stride < 1:
        raise ValidationError(f"analysis stride must be >= 1, got {stride}")
    cause = list(range(model.dim_hid)) if cause is None else list(cause)
    n_total = traj.n_steps + 1
    acc = _ForwardAccumulator(n_total, stride, final, cause, True, jitter)
    for bank in replay(model, traj, filt, lag_cap, lag_tolerance):
        acc.observe(bank)
    return acc.profiles(n_total, full=True)


def build_cir_series(
    model: CgnsModel,
    traj: Trajectory,
    filt: FilterSeries,
    final: SmootherSeries,
    cause: Sequence[int],
    options: Optional[AnalysisOptions] = None,
    label: str = "",
) -> CirSeries:
    """ACI and CIR lengths at every analysis time from a second replay of the smoother.

    ``final`` is the complete smoother from a first replay. Forward profiles
    compare each retained lagged estimate with its final value; backward
    profiles are taken from the bank at each analysis time.
    """
    options = options or AnalysisOptions()
    cause = list(cause)
    dt, n_total = traj.dt, traj.n_steps + 1
    analysis_idx = np.arange(0, n_total, options.stride)
    m = analysis_idx.size

    acc = _ForwardAccumulator(n_total, options.stride, final, cause, options.exact, options.jitter)
    tau_bwd = np.zeros(m)
    tau_bwd_exact = np.zeros(m) if options.exact else None
    peak_bwd = np.zeros(m)
    slot = 0
    for bank in replay(model, traj, filt, options.lag_cap, options.lag_tolerance):
        acc.observe(bank)
        if slot < m and bank.n_current == analysis_idx[slot]:
            profile = backward_cir_profile(bank, cause, options.jitter)
            recentered = np.abs(profile - profile[0])
            peak_bwd[slot] = recentered.max()
            horizon = bank.n_current * dt
            tau_bwd[slot] = backward_length_approx(profile, dt, horizon)
            if tau_bwd_exact is not None:
                tau_bwd_exact[slot] = backward_length_exact(profile, dt, horizon)
            slot += 1

    # first entry of every forward profile is the ACI itself
    filt_means = filt.means[np.ix_(analysis_idx, cause)]
    filt_covs = filt.covs[np.ix_(analysis_idx, cause, cause)]
    aci_total, aci_signal, aci_dispersion = batch_relative_entropy(
        acc.final_means[analysis_idx], acc.final_covs[analysis_idx], filt_means, filt_covs, jitter=options.jitter
    )

    horizons = (n_total - 1 - analysis_idx) * dt
    peak_fwd = acc.peak
    with np.errstate(divide="ignore", invalid="ignore"):
        tau_fwd = np.where(peak_fwd > 0, dt * acc.total / np.where(peak_fwd > 0, peak_fwd, 1.0), 0.0)
    tau_fwd = np.minimum(tau_fwd, horizons)

    tau_fwd_exact = None
    if options.exact:
        tau_fwd_exact = np.zeros(m)
        for i, profile in enumerate(acc.profiles(n_total)):
            tau_fwd_exact[i] = min(forward_length_exact(profile, dt), horizons[i])

    flags = []
    for i, j in enumerate(analysis_idx):
        marks = []
        if weak_evidence(peak_fwd[i], options.weak_threshold):
            marks.append("weak_forward")
        if weak_evidence(peak_bwd[i], options.weak_threshold):
            marks.append("weak_backward")
        if final.capped[j]:
            marks.append("lag_cap")
        flags.append("|".join(marks))

    logger.info(f"CIR series{f' {label}' if label else ''}: {m} analysis times, exact={options.exact}")
    return CirSeries(
        t=traj.times[analysis_idx],
        aci_total=aci_total,
        aci_signal=aci_signal,
        aci_dispersion=aci_dispersion,
        tau_forward_approx=tau_fwd,
        tau_backward_approx=tau_bwd,
        max_deficit_forward=peak_fwd,
        max_deficit_backward=peak_bwd,
        flags=flags,
        tau_forward_exact=tau_fwd_exact,
        tau_backward_exact=tau_bwd_exact,
        label=label,
    )
