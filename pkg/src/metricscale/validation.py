"""Small input-validation helpers used at public API boundaries."""

from __future__ import annotations

import numbers

import numpy as np

from .errors import InputValidationError


def as_points(points, *, dims: int = 3, name: str = "points") -> np.ndarray:
    """Coerce to a float64 (n, dims) array of finite coordinates."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != dims:
        raise InputValidationError(
            f"{name} must have shape (n, {dims}), got {arr.shape}"
        )
    if not np.isfinite(arr).all():
        raise InputValidationError(f"{name} contains non-finite coordinates")
    return arr


def as_vector(x, *, dims: int, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.shape != (dims,):
        raise InputValidationError(f"{name} must be a {dims}-vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InputValidationError(f"{name} contains non-finite values")
    return arr


def check_rotation(rotation, *, tol: float = 1e-9, name: str = "rotation") -> np.ndarray:
    """Validate a 3x3 orthonormal matrix (R^T R = I within tol)."""
    R = np.asarray(rotation, dtype=np.float64)
    if R.shape != (3, 3):
        raise InputValidationError(f"{name} must be 3x3, got {R.shape}")
    if not np.isfinite(R).all():
        raise InputValidationError(f"{name} contains non-finite entries")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > tol:
        raise InputValidationError(
            f"{name} is not orthonormal: max |R^T R - I| = {err:.3e} > {tol:.0e}"
        )
    return R


def check_positive(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise InputValidationError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_in_range(value, lo: float, hi: float, name: str, *,
                   lo_open: bool = False, hi_open: bool = False) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise InputValidationError(f"{name} must be a finite number, got {value!r}")
    v = float(value)
    below = v <= lo if lo_open else v < lo
    above = v >= hi if hi_open else v > hi
    if below or above:
        lob = "(" if lo_open else "["
        hib = ")" if hi_open else "]"
        raise InputValidationError(f"{name} must lie in {lob}{lo}, {hi}{hib}, got {v}")
    return v
