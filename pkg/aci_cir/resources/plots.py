"""Deterministic SVG figures of trajectories and ACI/CIR series"""

import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from ..utils.errors import ValidationError  # noqa: E402
from ..utils.formatters import split_trajectory_columns  # noqa: E402
from .artifacts import read_frame  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SVG_HASH_SALT = "aci-cir"

plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Wrote figure {path}")
    return path


def _draw(ax, x, y, label: str, **kwargs) -> None:
    if len(x) == 1:
        ax.plot(x, y, marker="o", linestyle="none", label=label, **kwargs)
    else:
        ax.plot(x, y, label=label, **kwargs)


def plot_series(
    csv_path: PathLike,
    out_path: PathLike,
    columns: Optional[Sequence[str]] = None,
    x: str = "t",
    title: str = "",
) -> Path:
    """Line plot of CSV columns against ``x`` as an SVG file.

    Without ``columns`` every numeric column other than ``x`` is drawn. An
    empty series gives a figure with axes only.

    Raises:
        ValidationError: If ``x`` or a requested column is missing.
    """
    frame = read_frame(csv_path, required=(x, *(columns or ())))
    if columns is None:
        columns = [c for c in frame.columns if c != x and pd.api.types.is_numeric_dtype(frame[c])]
    fig, ax = plt.subplots(figsize=(8, 3))
    for col in columns:
        _draw(ax, frame[x].to_numpy(dtype=float), frame[col].to_numpy(dtype=float), col)
    ax.set_xlabel(x)
    if title:
        ax.set_title(title)
    if len(frame) and columns:
        ax.legend(loc="upper right", fontsize="small")
    return _save(fig, out_path)


def plot_query_figure(
    trajectory: pd.DataFrame,
    series: Dict[str, pd.DataFrame],
    windows: Sequence[Tuple[float, float]],
    out_path: PathLike,
    title: str = "",
    labels: Optional[Mapping[str, str]] = None,
) -> Path:
    """Three-row figure, one column per time window.

    Rows: state time series, ACI per query, and CIR lengths per query with
    forward lengths on the left axis and backward lengths on a reversed
    right axis. ``labels`` maps the ``x_i``/``y_i`` headers to variable names.
    """
    if not windows:
        t = trajectory["t"]
        windows = [(float(t.iloc[0]), float(t.iloc[-1]))] if len(t) else [(0.0, 1.0)]
    ncols = len(windows)
    fig, axes = plt.subplots(3, ncols, figsize=(4.5 * ncols, 8), squeeze=False, sharex="col")
    observed_cols, hidden_cols = split_trajectory_columns(trajectory.columns)
    state_cols = observed_cols + hidden_cols
    labels = dict(labels or {})

    for k, (t0, t1) in enumerate(windows):
        top, mid, bottom = axes[0][k], axes[1][k], axes[2][k]
        traj = trajectory[(trajectory["t"] >= t0) & (trajectory["t"] <= t1)]
        for col in state_cols:
            _draw(top, traj["t"].to_numpy(), traj[col].to_numpy(), labels.get(col, col), linewidth=0.8)
        top.set_title(f"t ∈ [{t0:g}, {t1:g}]", fontsize="small")

        backward_ax = bottom.twinx()
        for label, frame in series.items():
            rows = frame[(frame["t"] >= t0) & (frame["t"] <= t1)]
            t = rows["t"].to_numpy()
            _draw(mid, t, rows["aci"].to_numpy(), label)
            _draw(bottom, t, rows["tau_f_approx"].to_numpy(), f"{label} forward")
            _draw(backward_ax, t, rows["tau_b_approx"].to_numpy(), f"{label} backward", linestyle="--")
        backward_ax.invert_yaxis()

        if k == 0:
            top.set_ylabel("state")
            mid.set_ylabel("ACI (nats)")
            bottom.set_ylabel("forward CIR")
        if k == ncols - 1:
            backward_ax.set_ylabel("backward CIR (reversed)")
        bottom.set_xlabel("t")
        for ax in (top, mid):
            if ax.has_data():
                ax.legend(loc="upper right", fontsize="x-small")

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, out_path)
