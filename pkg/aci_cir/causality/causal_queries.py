"""Causal queries: resolution, conditioning and execution"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..assimilation.cgns_filter import FilterSeries, run_filter
from ..assimilation.online_smoother import SmootherSeries, complete_smoother
from ..config.settings import settings
from ..dynamics.sde_sim import CgnsModel, Coefficients, Evaluator, Trajectory
from ..utils.errors import GramCouplingError, ValidationError
from ..utils.validation import validate_names, validate_positive
from .cir import AnalysisOptions, CirSeries, build_cir_series

logger = logging.getLogger(__name__)


class ConditioningMode(str, Enum):
    """How observed conditioners are kept out of the analysis update"""

    EXACT_LIMIT = "exact-limit"
    LARGE_NOISE = "large-noise"


@dataclass(frozen=True)
class CausalQuery:
    """A query ``cause → effect | conditioners`` stated with variable names.

    Observed variables outside ``effect`` are conditioners; hidden variables
    outside ``cause`` are marginalized.
    """

    cause: Tuple[str, ...]
    effect: Tuple[str, ...] = ()
    conditioning_observed: Tuple[str, ...] = ()
    conditioning_hidden: Tuple[str, ...] = ()
    mode: ConditioningMode = ConditioningMode.EXACT_LIMIT
    noise_scale: float = field(default_factory=lambda: settings.large_noise_scale)
    allow_large_noise_fallback: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        for name in ("cause", "effect", "conditioning_observed", "conditioning_hidden"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "mode", ConditioningMode(self.mode))
        if not self.cause:
            raise ValidationError("a causal query needs at least one cause variable")
        validate_positive(self.noise_scale, "noise_scale")

    @property
    def title(self) -> str:
        if self.label:
            return self.label
        cond = self.conditioning_observed + self.conditioning_hidden
        text = f"({','.join(self.cause)})→({','.join(self.effect) or '·'})"
        return f"{text}|({','.join(cond)})" if cond else text

    def with_mode(self, mode: ConditioningMode, noise_scale: Optional[float] = None) -> "CausalQuery":
        return CausalQuery(
            cause=self.cause,
            effect=self.effect,
            conditioning_observed=self.conditioning_observed,
            conditioning_hidden=self.conditioning_hidden,
            mode=mode,
            noise_scale=self.noise_scale if noise_scale is None else noise_scale,
            allow_large_noise_fallback=self.allow_large_noise_fallback,
            label=self.label,
        )


class ResolvedQuery(NamedTuple):
    """Index form of a query against one model"""

    cause_indices: Tuple[int, ...]
    effect_indices: Tuple[int, ...]
    conditioning_observed: Tuple[int, ...]
    conditioning_hidden: Tuple[int, ...]


def resolve_query(model: CgnsModel, query: CausalQuery) -> ResolvedQuery:
    """Translate names to indices and complete the conditioning sets.

    Raises:
        ValidationError: On unknown names, overlapping sets, or an effect
            and observed-conditioning split that does not cover the
            observed variables.
    """
    observed, hidden = model.observed_names, model.hidden_names
    cause = validate_names(query.cause, hidden, "cause")
    effect = validate_names(query.effect or observed, observed, "effect")
    cond_obs = validate_names(query.conditioning_observed, observed, "conditioning_observed")
    cond_hid = validate_names(query.conditioning_hidden, hidden, "conditioning_hidden")

    if set(effect) & set(cond_obs):
        raise ValidationError(f"{query.title}: effect and observed conditioners overlap")
    if set(cause) & set(cond_hid):
        raise ValidationError(f"{query.title}: cause and hidden conditioners overlap")
    remainder = tuple(i for i in range(model.dim_obs) if i not in effect and i not in cond_obs)
    if query.conditioning_observed and remainder:
        missing = [observed[i] for i in remainder]
        raise ValidationError(f"{query.title}: observed variables {missing} are neither effect nor conditioner")
    cond_obs = tuple(sorted(cond_obs + remainder))
    if not query.conditioning_hidden:
        cond_hid = tuple(i for i in range(model.dim_hid) if i not in cause)
    return ResolvedQuery(cause, effect, cond_obs, cond_hid)


class ScaledObservationNoise:
    """Coefficient evaluator with the observation noise rows of some coordinates scaled"""

    def __init__(self, evaluator: Evaluator, rows: Sequence[int], scale: float):
        self.evaluator = evaluator
        self.rows = list(rows)
        self.scale = float(scale)

    def __call__(self, t: float, x: np.ndarray) -> Coefficients:
        c = self.evaluator(t, x)
        sigma_x1 = np.array(c.sigma_x1, dtype=float)
        sigma_x2 = np.array(c.sigma_x2, dtype=float)
        sigma_x1[self.rows] *= self.scale
        sigma_x2[self.rows] *= self.scale
        return c._replace(sigma_x1=sigma_x1, sigma_x2=sigma_x2)


def apply_conditioning(model: CgnsModel, query: CausalQuery) -> CgnsModel:
    """Model whose analysis update ignores the observed conditioners.

    Exact-limit mode zeroes the conditioners' part of the inverse
    observational Gram in every gain-bearing term while keeping the
    forecast dynamics. Large-noise mode scales their observation noise by
    ``query.noise_scale`` and leaves the pipeline otherwise untouched.
    Simulation is unaffected in both modes.
    """
    resolved = resolve_query(model, query)
    rows = resolved.conditioning_observed
    if not rows:
        return model
    if query.mode is ConditioningMode.EXACT_LIMIT:
        logger.debug(f"{query.title}: neutralizing observed {[model.observed_names[i] for i in rows]}")
        return model.with_neutralized(rows)
    logger.debug(f"{query.title}: scaling observation noise of {list(rows)} by {query.noise_scale:g}")
    return model.with_evaluator(
        ScaledObservationNoise(model.evaluator, rows, query.noise_scale), neutralized=()
    )


@dataclass
class QueryResult:
    """Everything one query produced; ``mode`` is the conditioning mode actually used"""

    query: CausalQuery
    mode: ConditioningMode
    series: CirSeries
    filter: FilterSeries
    smoother: SmootherSeries


def _execute(
    model: CgnsModel, traj: Trajectory, query: CausalQuery, options: AnalysisOptions
) -> QueryResult:
    resolved = resolve_query(model, query)
    conditioned = apply_conditioning(model, query)
    filt = run_filter(conditioned, traj)
    final = complete_smoother(filt, conditioned, traj, options.lag_cap, options.lag_tolerance)
    series = build_cir_series(
        conditioned, traj, filt, final, resolved.cause_indices, options, label=query.title
    )
    return QueryResult(query=query, mode=query.mode, series=series, filter=filt, smoother=final)


def run_query(
    model: CgnsModel,
    traj: Trajectory,
    query: CausalQuery,
    options: Optional[AnalysisOptions] = None,
) -> QueryResult:
    """Condition, filter, smooth and compute the ACI/CIR series of one query.

    Raises:
        ValidationError: If the trajectory does not observe the model's observed variables.
        GramCouplingError: If exact-limit conditioning meets coupled noise and
            the query does not allow the large-noise fallback.
    """
    options = options or AnalysisOptions()
    if tuple(traj.observed_names) != tuple(model.observed_names):
        raise ValidationError(
            f"trajectory observes {traj.observed_names}, model {model.name} expects {model.observed_names}"
        )
    try:
        result = _execute(model, traj, query, options)
    except GramCouplingError as e:
        if query.mode is not ConditioningMode.EXACT_LIMIT or not query.allow_large_noise_fallback:
            raise
        logger.warning(f"{query.title}: {e}; falling back to large-noise conditioning (s={query.noise_scale:g})")
        result = _execute(model, traj, query.with_mode(ConditioningMode.LARGE_NOISE), options)
    weak = sum(1 for f in result.series.flags if "weak" in f)
    logger.info(f"Query {query.title} done ({result.mode.value}); {weak}/{len(result.series)} times flagged weak")
    return result


def limit_consistency(
    model: CgnsModel,
    traj: Trajectory,
    query: CausalQuery,
    scales: Sequence[float] = (1e2, 1e4, 1e6, 1e8),
    options: Optional[AnalysisOptions] = None,
) -> pd.DataFrame:
    """Sup-norm gap between large-noise ACI series and the exact-limit series, per scale"""
    options = options or AnalysisOptions()
    exact = run_query(model, traj, query.with_mode(ConditioningMode.EXACT_LIMIT), options).series
    rows = []
    for s in scales:
        approx = run_query(model, traj, query.with_mode(ConditioningMode.LARGE_NOISE, s), options).series
        gap = float(np.max(np.abs(approx.aci_total - exact.aci_total)))
        peak = float(np.max(np.abs(exact.aci_total)))
        rows.append({"scale": float(s), "sup_gap": gap, "relative_gap": gap / peak if peak > 0 else gap})
    return pd.DataFrame(rows)
