"""Input validation utilities for aci-cir"""

from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import ValidationError


def validate_positive(value: float, name: str) -> bool:
    """Validate a strictly positive finite scalar"""
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
    return True


def validate_vector(vector: np.ndarray, size: int, name: str) -> np.ndarray:
    """Validate and return a finite float vector of the given size"""
    arr = np.asarray(vector, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != size:
        raise ValidationError(f"{name} must be a vector of length {size}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains nonfinite entries")
    return arr


def validate_square(matrix: np.ndarray, size: int, name: str) -> np.ndarray:
    """Validate and return a finite square matrix"""
    arr = np.asarray(matrix, dtype=float)
    if arr.shape != (size, size):
        raise ValidationError(f"{name} must have shape ({size}, {size}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains nonfinite entries")
    return arr


def validate_indices(indices: Iterable[int], size: int, name: str) -> Tuple[int, ...]:
    """Validate a set of distinct in-range indices, preserving order"""
    idx = tuple(int(i) for i in indices)
    if len(set(idx)) != len(idx):
        raise ValidationError(f"{name} contains repeated indices: {idx}")
    bad = [i for i in idx if not 0 <= i < size]
    if bad:
        raise ValidationError(f"{name} has indices out of range [0, {size}): {bad}")
    return idx


def validate_names(names: Sequence[str], known: Sequence[str], name: str) -> Tuple[int, ...]:
    """Resolve variable names to indices into ``known``"""
    missing = [n for n in names if n not in known]
    if missing:
        raise ValidationError(
            f"{name} refers to unknown variables {missing}; available: {', '.join(known)}"
        )
    return validate_indices([list(known).index(n) for n in names], len(known), name)


def validate_profile(profile: np.ndarray, name: str = "profile") -> np.ndarray:
    """Validate a nonempty finite 1-D profile"""
    arr = np.asarray(profile, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a nonempty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains nonfinite entries")
    return arr
