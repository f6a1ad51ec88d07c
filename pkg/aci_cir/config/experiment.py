"""Experiment file schema and loader

Experiment files are TOML with the sections ``[model]``, ``[simulation]``,
``[analysis]``, ``[queries.<name>]`` and ``[output]``. Unknown keys are
errors. Omitted values fall back to the process settings.
"""

import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from ..causality.causal_queries import CausalQuery, ConditioningMode
from ..causality.cir import AnalysisOptions
from ..dynamics.models import parse_params
from ..utils.errors import ConfigurationError
from .settings import settings


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Section):
    name: str
    params: Dict[str, Any] = Field(default_factory=dict)


class SimulationSection(_Section):
    dt: float = Field(default_factory=lambda: settings.default_dt, gt=0)
    t_end: float = Field(gt=0)
    seed: int = Field(default=0, ge=0)
    burn_in: float = Field(default_factory=lambda: settings.burn_in, ge=0)
    x0: Optional[List[float]] = None
    y0: Optional[List[float]] = None


class AnalysisSection(_Section):
    subsample: int = Field(default=1, ge=1)
    lag_cap: int = Field(default_factory=lambda: settings.lag_cap, ge=1)
    lag_tolerance: float = Field(default_factory=lambda: settings.lag_tolerance, ge=0)
    stride: int = Field(default_factory=lambda: settings.analysis_stride, ge=1)
    exact_cir: bool = False
    weak_evidence_threshold: float = Field(default_factory=lambda: settings.weak_evidence_threshold, ge=0)
    jitter: float = Field(default_factory=lambda: settings.covariance_jitter, ge=0)
    windows: List[Tuple[float, float]] = Field(default_factory=list)
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)

    @model_validator(mode="after")
    def _check_windows(self) -> "AnalysisSection":
        for t0, t1 in self.windows:
            if t1 <= t0:
                raise ValueError(f"window [{t0}, {t1}] is empty")
        return self


class QuerySection(_Section):
    cause: List[str] = Field(min_length=1)
    effect: List[str] = Field(default_factory=list)
    conditioning_observed: List[str] = Field(default_factory=list)
    conditioning_hidden: List[str] = Field(default_factory=list)
    observe: Optional[List[str]] = None
    mode: ConditioningMode = ConditioningMode.EXACT_LIMIT
    noise_scale: float = Field(default_factory=lambda: settings.large_noise_scale, gt=0)
    allow_large_noise_fallback: bool = False
    label: str = ""

    def to_query(self, name: str) -> CausalQuery:
        return CausalQuery(
            cause=tuple(self.cause),
            effect=tuple(self.effect),
            conditioning_observed=tuple(self.conditioning_observed),
            conditioning_hidden=tuple(self.conditioning_hidden),
            mode=self.mode,
            noise_scale=self.noise_scale,
            allow_large_noise_fallback=self.allow_large_noise_fallback,
            label=self.label or name,
        )


class OutputSection(_Section):
    out_dir: Optional[str] = None
    trajectory: bool = True
    filter: bool = False
    bank_snapshot: bool = False
    plots: bool = True


class ExperimentConfig(_Section):
    """A complete, validated experiment description"""

    model: ModelSection
    simulation: SimulationSection
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)
    queries: Dict[str, QuerySection] = Field(min_length=1)
    output: OutputSection = Field(default_factory=OutputSection)

    def analysis_options(self) -> AnalysisOptions:
        a = self.analysis
        return AnalysisOptions(
            lag_cap=a.lag_cap,
            lag_tolerance=a.lag_tolerance,
            stride=a.stride,
            exact=a.exact_cir,
            weak_threshold=a.weak_evidence_threshold,
            jitter=a.jitter,
        )

    def with_overrides(
        self,
        seed: Optional[int] = None,
        dt: Optional[float] = None,
        lag_cap: Optional[int] = None,
        exact_cir: Optional[bool] = None,
        conditioning_mode: Optional[Union[str, ConditioningMode]] = None,
        out_dir: Optional[str] = None,
    ) -> "ExperimentConfig":
        """Copy with command-line overrides applied and re-validated"""
        data = self.model_dump(mode="json")
        if seed is not None:
            data["simulation"]["seed"] = seed
        if dt is not None:
            data["simulation"]["dt"] = dt
        if lag_cap is not None:
            data["analysis"]["lag_cap"] = lag_cap
        if exact_cir is not None:
            data["analysis"]["exact_cir"] = exact_cir
        if conditioning_mode is not None:
            mode = ConditioningMode(conditioning_mode).value
            for query in data["queries"].values():
                query["mode"] = mode
        if out_dir is not None:
            data["output"]["out_dir"] = out_dir
        return parse_experiment(data)


def _locate(text: str, loc: Sequence[Union[str, int]]) -> Optional[int]:
    """Best-effort 1-based line of the key named by a pydantic error location"""
    if not text or not loc:
        return None
    lines = text.splitlines()
    keys = [str(part) for part in loc if isinstance(part, str)]
    if not keys:
        return None
    # tables are [a], [a.b]; the key sits under the deepest matching header
    start, depth = 0, 0
    for i, line in enumerate(lines):
        header = re.match(r"\s*\[([^\[\]]+)\]\s*$", line)
        if not header:
            continue
        parts = [p.strip().strip('"') for p in header.group(1).split(".")]
        if parts == keys[: len(parts)] and len(parts) > depth:
            start, depth = i, len(parts)
    if depth == 0:
        return None
    remaining = keys[depth:]
    if not remaining:
        return start + 1
    pattern = re.compile(rf"\s*{re.escape(remaining[0])}\s*=")
    for i in range(start + 1, len(lines)):
        if re.match(r"\s*\[", lines[i]):
            break
        if pattern.match(lines[i]):
            return i + 1
    return start + 1


def parse_experiment(data: Dict[str, Any], text: str = "", source: str = "<config>") -> ExperimentConfig:
    """Validate a parsed experiment mapping.

    Raises:
        ConfigurationError: Listing every problem as ``dotted.path (line N): message``.
    """
    try:
        config = ExperimentConfig.model_validate(data)
    except PydanticValidationError as e:
        problems = []
        for err in e.errors():
            path = ".".join(str(p) for p in err["loc"])
            line = _locate(text, err["loc"])
            where = f"{path} (line {line})" if line else path
            problems.append(f"{where}: {err['msg']}")
        raise ConfigurationError(f"{source}: " + "; ".join(problems)) from e
    try:
        parse_params(config.model.name, config.model.params)
    except ConfigurationError as e:
        line = _locate(text, ("model", "params"))
        raise ConfigurationError(f"{source}{f' (line {line})' if line else ''}: {e}") from e
    return config


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a TOML experiment file.

    Raises:
        ConfigurationError: If the file is missing, not valid TOML, or fails validation.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read experiment file {path}: {e}") from e
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"{path}: invalid TOML: {e}") from e
    return parse_experiment(data, text, str(path))
