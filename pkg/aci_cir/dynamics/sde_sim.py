"""Euler-Maruyama simulation of conditionally Gaussian nonlinear systems

A model couples an observed block x (dimension k) and a hidden block y
(dimension l) that enters every drift linearly::

    dx = (Λˣ(t,x) y + fˣ(t,x)) dt + Σˣ₁(t,x) dW₁ + Σˣ₂(t,x) dW₂
    dy = (Λʸ(t,x) y + fʸ(t,x)) dt + Σʸ₁(t,x) dW₁ + Σʸ₂(t,x) dW₂

The two Wiener processes are shared by both blocks, so channels that force
x and y at once produce correlated increments.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..utils.errors import BlowupError, ValidationError
from ..utils.validation import validate_positive, validate_vector

logger = logging.getLogger(__name__)


class Coefficients(NamedTuple):
    """Coefficient blocks of a model evaluated at one (t, x)"""

    lambda_x: np.ndarray  # k×l
    f_x: np.ndarray  # k
    sigma_x1: np.ndarray  # k×d₁
    sigma_x2: np.ndarray  # k×d₂
    lambda_y: np.ndarray  # l×l
    f_y: np.ndarray  # l
    sigma_y1: np.ndarray  # l×d₁
    sigma_y2: np.ndarray  # l×d₂


Evaluator = Callable[[float, np.ndarray], Coefficients]


@dataclass(frozen=True)
class CgnsModel:
    """Conditionally Gaussian model: dimensions, names and a coefficient evaluator.

    ``neutralized`` lists observed coordinates that must not inform the
    analysis update (infinite-uncertainty conditioning). Simulation ignores it.
    """

    name: str
    dim_obs: int
    dim_hid: int
    dim_noise1: int
    dim_noise2: int
    evaluator: Evaluator = field(repr=False, compare=False)
    observed_names: Tuple[str, ...] = ()
    hidden_names: Tuple[str, ...] = ()
    params: Dict[str, Any] = field(default_factory=dict, compare=False)
    neutralized: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.dim_obs < 1 or self.dim_hid < 1:
            raise ValidationError("models need at least one observed and one hidden variable")
        if self.dim_noise1 < 0 or self.dim_noise2 < 0:
            raise ValidationError("noise channel counts must be nonnegative")
        if not self.observed_names:
            object.__setattr__(self, "observed_names", tuple(f"x_{i}" for i in range(self.dim_obs)))
        if not self.hidden_names:
            object.__setattr__(self, "hidden_names", tuple(f"y_{i}" for i in range(self.dim_hid)))
        if len(self.observed_names) != self.dim_obs or len(self.hidden_names) != self.dim_hid:
            raise ValidationError("variable names do not match model dimensions")

    @property
    def dim_noise(self) -> int:
        return self.dim_noise1 + self.dim_noise2

    def coefficients(self, t: float, x: np.ndarray) -> Coefficients:
        """Evaluate all coefficient blocks at (t, x)"""
        return self.evaluator(float(t), np.asarray(x, dtype=float))

    def with_neutralized(self, indices: Sequence[int]) -> "CgnsModel":
        return replace(self, neutralized=tuple(sorted(int(i) for i in indices)))

    def with_evaluator(self, evaluator: Evaluator, **changes: Any) -> "CgnsModel":
        return replace(self, evaluator=evaluator, **changes)

    def check_shapes(self, c: Coefficients) -> None:
        """Raise ValidationError if coefficient blocks disagree with the model dimensions"""
        k, l, d1, d2 = self.dim_obs, self.dim_hid, self.dim_noise1, self.dim_noise2
        expected = {
            "lambda_x": (k, l),
            "f_x": (k,),
            "sigma_x1": (k, d1),
            "sigma_x2": (k, d2),
            "lambda_y": (l, l),
            "f_y": (l,),
            "sigma_y1": (l, d1),
            "sigma_y2": (l, d2),
        }
        for name, shape in expected.items():
            got = np.shape(getattr(c, name))
            if got != shape:
                raise ValidationError(f"{self.name}: {name} has shape {got}, expected {shape}")


@dataclass
class Trajectory:
    """Observed path on a uniform grid tⱼ = t0 + j·dt, with optional hidden truth"""

    dt: float
    t0: float
    x_path: np.ndarray
    y_path: Optional[np.ndarray] = None
    seed: Optional[int] = None
    observed_names: Tuple[str, ...] = ()
    hidden_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        validate_positive(self.dt, "dt")
        self.x_path = np.asarray(self.x_path, dtype=float)
        if self.x_path.ndim == 1:
            self.x_path = self.x_path.reshape(-1, 1)
        if self.x_path.ndim != 2:
            raise ValidationError("x_path must be a 2-D array (time × observed)")
        if not np.all(np.isfinite(self.x_path)):
            raise ValidationError("x_path contains nonfinite entries")
        if self.y_path is not None:
            self.y_path = np.asarray(self.y_path, dtype=float)
            if self.y_path.ndim == 1:
                self.y_path = self.y_path.reshape(-1, 1)
            if self.y_path.ndim != 2 or self.y_path.shape[0] != self.x_path.shape[0]:
                raise ValidationError("y_path must have one row per grid point")
        if not self.observed_names:
            self.observed_names = tuple(f"x_{i}" for i in range(self.x_path.shape[1]))
        if not self.hidden_names and self.y_path is not None:
            self.hidden_names = tuple(f"y_{i}" for i in range(self.y_path.shape[1]))

    @property
    def n_steps(self) -> int:
        return self.x_path.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * self.n_steps

    def window(self, t_start: float, t_end: float) -> "Trajectory":
        """Sub-trajectory on the grid points inside [t_start, t_end]"""
        first = max(0, math.ceil((t_start - self.t0) / self.dt - 1e-9))
        last = min(self.n_steps, math.floor((t_end - self.t0) / self.dt + 1e-9))
        if last < first:
            raise ValidationError(
                f"window [{t_start}, {t_end}] holds no grid point of [{self.t0}, {self.t_end}]"
            )
        return replace(
            self,
            t0=self.t0 + first * self.dt,
            x_path=self.x_path[first : last + 1].copy(),
            y_path=None if self.y_path is None else self.y_path[first : last + 1].copy(),
        )

    def subsample(self, stride: int) -> "Trajectory":
        """Keep every ``stride``-th grid point"""
        if stride < 1:
            raise ValidationError(f"subsample stride must be >= 1, got {stride}")
        if stride == 1:
            return self
        return replace(
            self,
            dt=self.dt * stride,
            x_path=self.x_path[::stride].copy(),
            y_path=None if self.y_path is None else self.y_path[::stride].copy(),
        )

    def repartition(self, observed: Sequence[str]) -> "Trajectory":
        """Re-split the state into a new observed block, in the given order.

        Variables not listed become hidden and keep their original order.
        Requires the hidden truth when a hidden variable becomes observed.
        """
        names = list(self.observed_names) + list(self.hidden_names)
        unknown = [n for n in observed if n not in names]
        if unknown:
            raise ValidationError(f"cannot observe unknown variables {unknown}")
        if tuple(observed) == tuple(self.observed_names):
            return self
        if self.y_path is None:
            raise ValidationError("repartition needs the hidden truth stored in the trajectory")
        full = np.hstack([self.x_path, self.y_path])
        obs_idx = [names.index(n) for n in observed]
        hid_idx = [i for i in range(len(names)) if i not in obs_idx]
        return replace(
            self,
            x_path=full[:, obs_idx],
            y_path=full[:, hid_idx] if hid_idx else None,
            observed_names=tuple(observed),
            hidden_names=tuple(names[i] for i in hid_idx),
        )


def euler_maruyama_step(
    model: CgnsModel,
    t: float,
    x: np.ndarray,
    y: np.ndarray,
    dt: float,
    dW1: np.ndarray,
    dW2: np.ndarray,
    index: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Advance (x, y) by one explicit step.

    Args:
        model: Model supplying the coefficient blocks
        t: Current time
        x: Observed state at t
        y: Hidden state at t
        dt: Step size
        dW1: Increments of the first noise channel block, N(0, dt·I)
        dW2: Increments of the second noise channel block, N(0, dt·I)
        index: Grid index of t, reported on blowup

    Returns:
        The pair (x', y') at t + dt.

    Raises:
        BlowupError: If the new state is not finite.
    """
    c = model.coefficients(t, x)
    x_next = x + (c.lambda_x @ y + c.f_x) * dt + c.sigma_x1 @ dW1 + c.sigma_x2 @ dW2
    y_next = y + (c.lambda_y @ y + c.f_y) * dt + c.sigma_y1 @ dW1 + c.sigma_y2 @ dW2
    if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(y_next))):
        raise BlowupError(
            f"{model.name}: nonfinite state after step at t={t:.6g} (index {index})",
            index=index,
            time=t,
        )
    return x_next, y_next


def noise_increments(n_channels: int, n_steps: int, dt: float, seed: int) -> np.ndarray:
    """Wiener increments of shape (channels, steps), one Philox stream per channel.

    Streams are spawned from the seed, so each channel's sequence does not
    depend on how many steps or channels are drawn.
    """
    streams = np.random.SeedSequence(seed).spawn(n_channels)
    out = np.empty((n_channels, n_steps))
    for row, stream in zip(out, streams):
        row[:] = np.random.Generator(np.random.Philox(stream)).standard_normal(n_steps)
    return out * math.sqrt(dt)


def simulate(
    model: CgnsModel,
    x0: np.ndarray,
    y0: np.ndarray,
    dt: float,
    n_steps: int,
    seed: int,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate a model from (x0, y0) and return the full trajectory.

    Raises:
        ValidationError: On dimension mismatch or a bad step count.
        BlowupError: If the path becomes nonfinite, with the offending index.
    """
    validate_positive(dt, "dt")
    if n_steps < 0:
        raise ValidationError(f"n_steps must be nonnegative, got {n_steps}")
    x = validate_vector(x0, model.dim_obs, "x0")
    y = validate_vector(y0, model.dim_hid, "y0")
    model.check_shapes(model.coefficients(t0, x))

    d1 = model.dim_noise1
    dW = noise_increments(model.dim_noise, n_steps, dt, seed)

    x_path = np.empty((n_steps + 1, model.dim_obs))
    y_path = np.empty((n_steps + 1, model.dim_hid))
    x_path[0], y_path[0] = x, y
    for j in range(n_steps):
        t = t0 + j * dt
        x, y = euler_maruyama_step(model, t, x, y, dt, dW[:d1, j], dW[d1:, j], index=j)
        x_path[j + 1], y_path[j + 1] = x, y

    logger.info(f"Simulated {model.name}: {n_steps} steps of dt={dt:g} from t0={t0:g}, seed={seed}")
    return Trajectory(
        dt=dt,
        t0=t0,
        x_path=x_path,
        y_path=y_path,
        seed=seed,
        observed_names=model.observed_names,
        hidden_names=model.hidden_names,
    )
