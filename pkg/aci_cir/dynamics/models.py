"""Case-study models and the closed-form equilibrium of the reduced linear model"""

import logging
import math
from typing import Any, Callable, Dict, NamedTuple, Optional, Sequence, Tuple, Type

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from ..causality.info_metrics import EntropyValue
from ..utils.errors import ConfigurationError, ValidationError
from .sde_sim import CgnsModel, Coefficients

logger = logging.getLogger(__name__)


class Sinusoid(BaseModel):
    """Forcing ``offset + amplitude * sin(2πt/period + phase)``"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    offset: float = 0.0
    amplitude: float = 0.0
    period: float = Field(default=1.0, gt=0)
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        if self.amplitude == 0.0:
            return self.offset
        return self.offset + self.amplitude * math.sin(2.0 * math.pi * t / self.period + self.phase)


class _Params(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ClimateParams(_Params):
    """Slow-fast climate model with multiplicative noise through γ"""

    epsilon: float = Field(default=0.01, gt=0, lt=1)
    d_x: float = Field(default=1.0 / 3.0, gt=0)
    alpha: float = Field(default=4.0, gt=0)
    sigma_x: float = Field(default=0.2, gt=0)
    d_y: float = Field(default=0.2, gt=0)
    beta: float = -0.8
    sigma_y: float = Field(default=0.3, gt=0)
    d_gamma: float = Field(default=0.5, gt=0)
    gamma_bar: float = 1.0
    sigma_gamma: float = Field(default=2.0, gt=0)


class MultiscaleParams(_Params):
    """Four-dimensional multiscale model with energy-conserving interactions"""

    a1: float = 1.0
    c1: float = 1.0 / 3.0
    m: float = 0.5
    m1: float = 0.5
    m2: float = -1.5
    i11: float = 0.6
    i12: float = 0.0
    i21: float = 0.0
    i22: float = 2.5
    l11: float = 1.0
    l12: float = 0.0
    l21: float = 0.0
    l22: float = 1.5
    sigma_x1: float = Field(default=0.15, gt=0)
    sigma_x2: float = Field(default=0.3, gt=0)
    c2: float = 0.4
    gamma1: float = Field(default=0.5, gt=0)
    gamma2: float = Field(default=1.2, gt=0)
    epsilon: float = Field(default=0.1, gt=0)
    n: float = 4.0
    sigma_y1: float = Field(default=1.0, ge=0)
    sigma_y2: float = Field(default=2.0, ge=0)
    f1x: Sinusoid = Sinusoid()
    f2x: Sinusoid = Sinusoid(offset=4.0, amplitude=2.0, period=18.0)
    f1y: Sinusoid = Sinusoid(offset=1.0)
    f2y: Sinusoid = Sinusoid(offset=-1.0)


class Lorenz84Params(_Params):
    """Noisy Lorenz-84 model with seasonal forcing of the zonal flow"""

    a: float = Field(default=0.25, gt=0, lt=1)
    b: float = 4.0
    g: float = 1.0
    sigma_x: float = Field(default=0.2, gt=0)
    sigma_y: float = Field(default=0.2, gt=0)
    sigma_z: float = Field(default=0.2, gt=0)
    forcing: Sinusoid = Sinusoid(offset=8.0, amplitude=3.0, period=73.0, phase=math.pi / 2)


class ReducedLinearParams(_Params):
    """Scalar conditionally linear model with state-independent feedbacks"""

    lambda_x: float = 1.0
    lambda_y: float = Field(default=-1.0, lt=0)
    sigma_x: float = Field(default=1.0, gt=0)
    sigma_y: float = Field(default=1.0, gt=0)
    f_x: Sinusoid = Sinusoid()
    f_y: Sinusoid = Sinusoid()


def _echo(params: BaseModel) -> Dict[str, Any]:
    return params.model_dump()


def climate_model(p: ClimateParams, observe: Optional[Sequence[str]] = None) -> CgnsModel:
    """Climate model with x observed and (y, γ) hidden.

    ``observe=("x", "y")`` gives the partition used for γ→y queries, with γ
    as the only hidden variable.
    """
    observe = tuple(observe or ("x",))
    inv_sqrt_eps = 1.0 / math.sqrt(p.epsilon)
    damp_y = p.d_y / p.epsilon

    if observe == ("x",):

        def evaluate(t: float, x: np.ndarray) -> Coefficients:
            x0 = x[0]
            return Coefficients(
                lambda_x=np.array([[-p.alpha, 0.0]]),
                f_x=np.array([x0 - p.d_x * x0**3]),
                sigma_x1=np.array([[p.sigma_x]]),
                sigma_x2=np.zeros((1, 2)),
                lambda_y=np.array([[-damp_y, x0], [0.0, -p.d_gamma]]),
                f_y=np.array([p.beta, p.d_gamma * p.gamma_bar]),
                sigma_y1=np.zeros((2, 1)),
                sigma_y2=np.diag([p.sigma_y * inv_sqrt_eps, p.sigma_gamma]),
            )

        return CgnsModel(
            name="climate",
            dim_obs=1,
            dim_hid=2,
            dim_noise1=1,
            dim_noise2=2,
            evaluator=evaluate,
            observed_names=("x",),
            hidden_names=("y", "gamma"),
            params=_echo(p),
        )

    if observe == ("x", "y"):

        def evaluate_xy(t: float, x: np.ndarray) -> Coefficients:
            x0, y0 = x[0], x[1]
            return Coefficients(
                lambda_x=np.array([[0.0], [x0]]),
                f_x=np.array([x0 - p.d_x * x0**3 - p.alpha * y0, p.beta - damp_y * y0]),
                sigma_x1=np.diag([p.sigma_x, p.sigma_y * inv_sqrt_eps]),
                sigma_x2=np.zeros((2, 1)),
                lambda_y=np.array([[-p.d_gamma]]),
                f_y=np.array([p.d_gamma * p.gamma_bar]),
                sigma_y1=np.zeros((1, 2)),
                sigma_y2=np.array([[p.sigma_gamma]]),
            )

        return CgnsModel(
            name="climate",
            dim_obs=2,
            dim_hid=1,
            dim_noise1=2,
            dim_noise2=1,
            evaluator=evaluate_xy,
            observed_names=("x", "y"),
            hidden_names=("gamma",),
            params=_echo(p),
        )

    raise ValidationError(f"climate model supports observing ('x',) or ('x', 'y'), got {observe}")


def multiscale_model(p: MultiscaleParams) -> CgnsModel:
    """Multiscale model with observed (x₁, x₂) and hidden (y₁, y₂).

    The y-channel noises also force the x equations with multiplicative
    amplitudes, so the cross Gram Σˣ∘Σʸ is nonzero.
    """
    inv_sqrt_eps = 1.0 / math.sqrt(p.epsilon)
    s1, s2 = p.sigma_y1 / p.gamma1, p.sigma_y2 / p.gamma2

    def evaluate(t: float, x: np.ndarray) -> Coefficients:
        x1, x2 = x[0], x[1]
        interaction = p.m + p.m1 * x1 + p.m2 * x2
        return Coefficients(
            lambda_x=np.array(
                [
                    [p.i11 * x1 + p.l11, p.i12 * x1 + p.l12],
                    [p.i21 * x2 + p.l21, p.i22 * x2 + p.l22],
                ]
            ),
            f_x=np.array(
                [
                    p.a1 * x1 - p.c1 * x1**3 - x2 * interaction + p.f1x(t),
                    -p.c2 * x2 + x1 * interaction + p.f2x(t),
                ]
            ),
            sigma_x1=np.diag([p.sigma_x1, p.sigma_x2]),
            sigma_x2=np.array(
                [
                    [s1 * (p.l11 - p.i11 * x1), s2 * (p.l12 - p.i12 * x1)],
                    [s1 * (p.l21 - p.i21 * x2), s2 * (p.l22 - p.i22 * x2)],
                ]
            ),
            lambda_y=np.array([[-p.gamma1 / p.epsilon, p.n], [-p.n, -p.gamma2 / p.epsilon]]),
            f_y=np.array(
                [
                    -p.l11 * x1 - p.l21 * x2 - p.i11 * x1**2 - p.i21 * x2**2 + p.f1y(t),
                    -p.l12 * x1 - p.l22 * x2 - p.i12 * x1**2 - p.i22 * x2**2 + p.f2y(t),
                ]
            ),
            sigma_y1=np.zeros((2, 2)),
            sigma_y2=np.diag([p.sigma_y1 * inv_sqrt_eps, p.sigma_y2 * inv_sqrt_eps]),
        )

    return CgnsModel(
        name="multiscale",
        dim_obs=2,
        dim_hid=2,
        dim_noise1=2,
        dim_noise2=2,
        evaluator=evaluate,
        observed_names=("x1", "x2"),
        hidden_names=("y1", "y2"),
        params=_echo(p),
    )


def lorenz84_model(p: Lorenz84Params) -> CgnsModel:
    """Lorenz-84 with the wave phases (y, z) observed and the zonal flow x hidden"""

    def evaluate(t: float, x: np.ndarray) -> Coefficients:
        y, z = x[0], x[1]
        return Coefficients(
            lambda_x=np.array([[y - p.b * z], [p.b * y + z]]),
            f_x=np.array([-y + p.g, -z]),
            sigma_x1=np.diag([p.sigma_y, p.sigma_z]),
            sigma_x2=np.zeros((2, 1)),
            lambda_y=np.array([[-p.a]]),
            f_y=np.array([-(y**2) - z**2 + p.a * p.forcing(t)]),
            sigma_y1=np.zeros((1, 2)),
            sigma_y2=np.array([[p.sigma_x]]),
        )

    return CgnsModel(
        name="lorenz84",
        dim_obs=2,
        dim_hid=1,
        dim_noise1=2,
        dim_noise2=1,
        evaluator=evaluate,
        observed_names=("y", "z"),
        hidden_names=("x",),
        params=_echo(p),
    )


def reduced_linear_model(p: ReducedLinearParams) -> CgnsModel:
    """Scalar model dx = (λˣy + fˣ)dt + σˣdW₁, dy = (λʸy + fʸ)dt + σʸdW₂"""
    lambda_x = np.array([[p.lambda_x]])
    lambda_y = np.array([[p.lambda_y]])
    sigma_x1 = np.array([[p.sigma_x]])
    sigma_y2 = np.array([[p.sigma_y]])
    zero = np.zeros((1, 1))

    def evaluate(t: float, x: np.ndarray) -> Coefficients:
        return Coefficients(
            lambda_x=lambda_x,
            f_x=np.array([p.f_x(t)]),
            sigma_x1=sigma_x1,
            sigma_x2=zero,
            lambda_y=lambda_y,
            f_y=np.array([p.f_y(t)]),
            sigma_y1=zero,
            sigma_y2=sigma_y2,
        )

    return CgnsModel(
        name="reduced-linear",
        dim_obs=1,
        dim_hid=1,
        dim_noise1=1,
        dim_noise2=1,
        evaluator=evaluate,
        observed_names=("x",),
        hidden_names=("y",),
        params=_echo(p),
    )


def linear_model(
    lambda_x: np.ndarray,
    lambda_y: np.ndarray,
    sigma_x1: np.ndarray,
    sigma_y2: np.ndarray,
    f_x: Optional[np.ndarray] = None,
    f_y: Optional[np.ndarray] = None,
    sigma_x2: Optional[np.ndarray] = None,
    sigma_y1: Optional[np.ndarray] = None,
    name: str = "linear",
) -> CgnsModel:
    """Constant-coefficient linear Gaussian model of any dimension.

    Channel block 1 belongs to the observations and block 2 to the hidden
    state unless cross blocks are given.
    """
    lambda_x = np.atleast_2d(np.asarray(lambda_x, dtype=float))
    lambda_y = np.atleast_2d(np.asarray(lambda_y, dtype=float))
    sigma_x1 = np.atleast_2d(np.asarray(sigma_x1, dtype=float))
    sigma_y2 = np.atleast_2d(np.asarray(sigma_y2, dtype=float))
    k, l = lambda_x.shape
    d1, d2 = sigma_x1.shape[1], sigma_y2.shape[1]
    coeffs = Coefficients(
        lambda_x=lambda_x,
        f_x=np.zeros(k) if f_x is None else np.asarray(f_x, dtype=float),
        sigma_x1=sigma_x1,
        sigma_x2=np.zeros((k, d2)) if sigma_x2 is None else np.atleast_2d(sigma_x2),
        lambda_y=lambda_y,
        f_y=np.zeros(l) if f_y is None else np.asarray(f_y, dtype=float),
        sigma_y1=np.zeros((l, d1)) if sigma_y1 is None else np.atleast_2d(sigma_y1),
        sigma_y2=sigma_y2,
    )

    def evaluate(t: float, x: np.ndarray) -> Coefficients:
        return coeffs

    model = CgnsModel(
        name=name,
        dim_obs=k,
        dim_hid=l,
        dim_noise1=d1,
        dim_noise2=d2,
        evaluator=evaluate,
        params={"lambda_x": lambda_x.tolist(), "lambda_y": lambda_y.tolist()},
    )
    model.check_shapes(coeffs)
    return model


class EquilibriumStats(NamedTuple):
    """Equilibrium filter variance, smoother variance and smoother contraction rate"""

    filter_var: float
    smoother_var: float
    gain: float


def equilibrium_stats(p: ReducedLinearParams) -> EquilibriumStats:
    """Closed-form equilibrium statistics of the reduced linear model.

    The filter variance solves the algebraic Riccati equation; the smoother
    variance is the fixed point σʸ²/(2G) of the backward Lyapunov equation,
    where G = λʸ + σʸ²/R_f is the contraction rate of the update matrices.

    Raises:
        ValidationError: If λˣ = 0 or the parameters give no positive filter variance.
    """
    if p.lambda_x == 0.0:
        raise ValidationError("equilibrium statistics need a nonzero coupling lambda_x")
    psi = (p.lambda_y * p.sigma_x) ** 2 + (p.lambda_x * p.sigma_y) ** 2
    root = math.sqrt(psi)
    filter_var = (p.lambda_y * p.sigma_x**2 + p.sigma_x * root) / p.lambda_x**2
    if filter_var <= 0.0:
        raise ValidationError(f"parameters give nonpositive equilibrium filter variance {filter_var}")
    gain = root * (root + p.lambda_y * p.sigma_x) / (p.lambda_x**2 * filter_var)
    smoother_var = p.sigma_y**2 / (2.0 * gain)
    return EquilibriumStats(filter_var, smoother_var, gain)


def equilibrium_aci(p: ReducedLinearParams) -> EntropyValue:
    """Expected ACI at equilibrium, ½·ln(R_f/R_s), split into signal and dispersion.

    The mean gap between smoother and filter has variance R_f − R_s at
    equilibrium.
    """
    stats = equilibrium_stats(p)
    ratio = stats.smoother_var / stats.filter_var
    signal = 0.5 * (1.0 - ratio)
    dispersion = 0.5 * (ratio - 1.0 - math.log(ratio))
    return EntropyValue(total=signal + dispersion, signal=signal, dispersion=dispersion)


_REGISTRY: Dict[str, Tuple[Type[_Params], Callable[..., CgnsModel]]] = {
    "climate": (ClimateParams, climate_model),
    "multiscale": (MultiscaleParams, multiscale_model),
    "lorenz84": (Lorenz84Params, lorenz84_model),
    "reduced-linear": (ReducedLinearParams, reduced_linear_model),
}

MODEL_NAMES = tuple(_REGISTRY)


def parse_params(name: str, params: Optional[Dict[str, Any]] = None) -> _Params:
    """Validate parameter overrides for a named model"""
    if name not in _REGISTRY:
        raise ConfigurationError(f"unknown model '{name}'; choose one of {', '.join(MODEL_NAMES)}")
    params_type, _ = _REGISTRY[name]
    try:
        return params_type.model_validate(params or {})
    except PydanticValidationError as e:
        problems = "; ".join(
            f"model.params.{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"invalid parameters for {name}: {problems}") from e


def build_model(
    name: str,
    params: Optional[Dict[str, Any]] = None,
    observe: Optional[Sequence[str]] = None,
) -> CgnsModel:
    """Build a named model, optionally with a different observed/hidden split"""
    p = parse_params(name, params)
    _, constructor = _REGISTRY[name]
    if name == "climate":
        model = constructor(p, observe=observe)
    else:
        model = constructor(p)
        if observe is not None and tuple(observe) != model.observed_names:
            raise ValidationError(
                f"model '{name}' only supports observing {model.observed_names}, got {tuple(observe)}"
            )
    logger.debug(f"Built model {name} observing {model.observed_names}")
    return model
