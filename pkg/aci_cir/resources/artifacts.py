"""CSV and metadata artifacts for aci-cir runs"""

import json
import logging
import subprocess
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..assimilation.cgns_filter import FilterSeries
from ..assimilation.online_smoother import SmootherBank, SmootherSeries
from ..causality.cir import CirSeries
from ..dynamics.sde_sim import Trajectory
from ..utils.errors import ValidationError
from ..utils.formatters import (
    OBSERVED_PREFIX,
    format_gaussian_frame,
    format_metadata_lines,
    format_trajectory_frame,
    split_trajectory_columns,
)

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
METADATA_FILE = "metadata.txt"
PathLike = Union[str, Path]


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write a frame as CSV with fixed float formatting and Unix newlines"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_frame(path: PathLike, required: Sequence[str] = ()) -> pd.DataFrame:
    """Read a CSV artifact, checking that the required columns exist"""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    frame = pd.read_csv(path, keep_default_na=False, na_values=[""])
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ValidationError(f"{path} lacks columns {missing}")
    return frame


def write_trajectory_csv(traj: Trajectory, path: PathLike) -> Path:
    return write_frame(format_trajectory_frame(traj.times, traj.x_path, traj.y_path), path)


def trajectory_names(traj: Trajectory) -> Dict[str, Any]:
    """Variable names behind the ``x_i``/``y_i`` columns, for the metadata sidecar"""
    return {"observed_names": list(traj.observed_names), "hidden_names": list(traj.hidden_names)}


def _sidecar_names(path: Path) -> Tuple[Optional[Sequence[str]], Optional[Sequence[str]]]:
    sidecar = path.with_name(METADATA_FILE)
    if not sidecar.exists():
        return None, None
    items = read_metadata(sidecar)
    try:
        observed = json.loads(items["observed_names"]) if "observed_names" in items else None
        hidden = json.loads(items["hidden_names"]) if "hidden_names" in items else None
    except json.JSONDecodeError as e:
        raise ValidationError(f"{sidecar} has malformed variable names: {e}") from e
    return observed, hidden


def read_trajectory_csv(
    path: PathLike,
    observed_names: Optional[Sequence[str]] = None,
    hidden_names: Optional[Sequence[str]] = None,
) -> Trajectory:
    """Trajectory from a ``t, x_*, y_*`` CSV; the grid must be uniform.

    Variable names come from the arguments, then from a ``metadata.txt``
    next to the CSV, and otherwise default to the column headers.
    """
    path = Path(path)
    frame = read_frame(path, required=("t",))
    try:
        x_cols, y_cols = split_trajectory_columns(frame.columns)
    except ValueError as e:
        raise ValidationError(f"{path}: {e}") from e
    if not x_cols:
        raise ValidationError(f"{path} has no observed ({OBSERVED_PREFIX}*) columns")
    times = frame["t"].to_numpy(dtype=float)
    if times.size < 2:
        raise ValidationError(f"{path} needs at least two grid points")
    steps = np.diff(times)
    dt = float((times[-1] - times[0]) / (times.size - 1))
    if not np.allclose(steps, dt, rtol=1e-6, atol=1e-12):
        raise ValidationError(f"{path} is not on a uniform time grid")

    stored_observed, stored_hidden = _sidecar_names(path)
    observed = list(observed_names or stored_observed or x_cols)
    hidden = list(hidden_names or stored_hidden or y_cols)
    if len(observed) != len(x_cols) or len(hidden) != len(y_cols):
        raise ValidationError(
            f"{path} has {len(x_cols)} observed and {len(y_cols)} hidden columns, "
            f"names given for {len(observed)} and {len(hidden)}"
        )
    return Trajectory(
        dt=dt,
        t0=float(times[0]),
        x_path=frame[x_cols].to_numpy(dtype=float),
        y_path=frame[y_cols].to_numpy(dtype=float) if y_cols else None,
        observed_names=tuple(observed),
        hidden_names=tuple(hidden),
    )


def write_filter_csv(filt: FilterSeries, path: PathLike) -> Path:
    return write_frame(format_gaussian_frame(filt.times, filt.means, filt.covs), path)


def write_smoother_csv(smoother: SmootherSeries, path: PathLike) -> Path:
    frame = format_gaussian_frame(smoother.times, smoother.means, smoother.covs)
    frame["capped"] = smoother.capped.astype(int)
    return write_frame(frame, path)


def write_bank_snapshot(bank: SmootherBank, path: PathLike) -> Path:
    return write_frame(bank.snapshot(), path)


def write_cir_csv(series: CirSeries, path: PathLike) -> Path:
    return write_frame(series.to_frame(), path)


def read_cir_csv(path: PathLike, label: str = "") -> CirSeries:
    frame = read_frame(path, required=("t", "aci", "aci_signal", "aci_dispersion", "Mf", "Mb", "flags"))
    return CirSeries.from_frame(frame, label=label)


def git_describe(cwd: Optional[PathLike] = None) -> str:
    """``git describe`` of the source tree, or ``unknown`` outside a repository"""
    cwd = Path(cwd) if cwd else Path(__file__).resolve().parent
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=cwd,
            capture_output=True,
            text=True,
            timeout=10,
            check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    described = result.stdout.strip()
    return described if result.returncode == 0 and described else "unknown"


def write_metadata(items: Mapping[str, Any], path: PathLike) -> Path:
    """Write ``key=value`` metadata lines"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(format_metadata_lines(items)) + "\n", encoding="utf-8")
    return path


def read_metadata(path: PathLike) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    items: Dict[str, str] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            items[key] = value
    return items
