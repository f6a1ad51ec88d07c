"""Formatting utilities for aci-cir results and artifacts"""

import json
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

OBSERVED_PREFIX = "x_"
HIDDEN_PREFIX = "y_"


def format_success_response(data: Any, operation: str) -> Dict[str, Any]:
    """Format successful operation response"""
    return {
        "success": True,
        "operation": operation,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "data": data,
    }


def format_error_response(
    error: str, operation: str, details: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """Format error response"""
    response = {
        "success": False,
        "operation": operation,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "error": error,
    }
    if details:
        response["details"] = details
    return response


def format_trajectory_frame(
    times: np.ndarray, x_path: np.ndarray, y_path: Optional[np.ndarray] = None
) -> pd.DataFrame:
    """Trajectory as columns ``t, x_0…x_{k-1}[, y_0…y_{l-1}]``; names live in the metadata"""
    columns: Dict[str, Any] = {"t": times}
    for i in range(x_path.shape[1]):
        columns[f"{OBSERVED_PREFIX}{i}"] = x_path[:, i]
    if y_path is not None:
        for i in range(y_path.shape[1]):
            columns[f"{HIDDEN_PREFIX}{i}"] = y_path[:, i]
    return pd.DataFrame(columns)


def trajectory_labels(observed_names: Sequence[str], hidden_names: Sequence[str]) -> Dict[str, str]:
    """Trajectory headers mapped to variable names"""
    labels = {f"{OBSERVED_PREFIX}{i}": name for i, name in enumerate(observed_names)}
    labels.update({f"{HIDDEN_PREFIX}{i}": name for i, name in enumerate(hidden_names)})
    return labels


def _indexed(columns: Sequence[str], prefix: str) -> List[str]:
    found = {}
    for c in columns:
        if c.startswith(prefix) and c[len(prefix) :].isdigit():
            found[int(c[len(prefix) :])] = c
    if sorted(found) != list(range(len(found))):
        raise ValueError(f"{prefix}* columns are not numbered 0..{len(found) - 1}: {sorted(found)}")
    return [found[i] for i in range(len(found))]


def split_trajectory_columns(columns: Iterable[str]) -> Tuple[List[str], List[str]]:
    """Observed (``x_i``) and hidden (``y_i``) headers, each in index order"""
    columns = list(columns)
    return _indexed(columns, OBSERVED_PREFIX), _indexed(columns, HIDDEN_PREFIX)


def gaussian_columns(means: np.ndarray, covs: np.ndarray) -> Dict[str, np.ndarray]:
    """``mu_i`` then ``R_ab`` over the row-major upper triangle"""
    l = means.shape[1]
    columns: Dict[str, np.ndarray] = {}
    for i in range(l):
        columns[f"mu_{i}"] = means[:, i]
    for a, b in zip(*np.triu_indices(l)):
        columns[f"R_{a}{b}"] = covs[:, a, b]
    return columns


def format_gaussian_frame(times: np.ndarray, means: np.ndarray, covs: np.ndarray) -> pd.DataFrame:
    """Gaussian series as ``t, mu_0…, R_00, R_01, …``"""
    return pd.DataFrame({"t": times, **gaussian_columns(means, covs)})


def format_metadata_value(value: Any) -> str:
    """Single-line rendering of a metadata value; containers become sorted JSON"""
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, sort_keys=True, default=str)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_metadata_lines(items: Mapping[str, Any]) -> List[str]:
    """``key=value`` lines in insertion order"""
    return [f"{key}={format_metadata_value(value)}" for key, value in items.items()]


def format_series_summary(frame: pd.DataFrame) -> Dict[str, Any]:
    """Headline numbers of a CIR series frame for the CLI result"""
    if frame.empty:
        return {"rows": 0}
    flags = frame["flags"].fillna("").astype(str)
    return {
        "rows": int(len(frame)),
        "aci_max": float(frame["aci"].max()),
        "aci_mean": float(frame["aci"].mean()),
        "tau_f_mean": float(frame["tau_f_approx"].mean()),
        "tau_b_mean": float(frame["tau_b_approx"].mean()),
        "weak_rows": int(flags.str.contains("weak").sum()),
        "lag_cap_rows": int(flags.str.contains("lag_cap").sum()),
    }
