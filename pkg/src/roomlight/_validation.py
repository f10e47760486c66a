"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_finite_nonneg",
    "check_unit_vector",
    "check_rgb",
    "check_in_range",
]


def check_finite_nonneg(arr: np.ndarray, name: str) -> np.ndarray:
    """Validate that every element of *arr* is finite and >= 0."""
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    if np.any(arr < 0):
        raise ValueError(f"{name}: contains negative values")
    return arr


def check_unit_vector(vec, name: str, tol: float = 1e-9) -> np.ndarray:
    """Validate a 3-vector of unit length (within *tol*); returns float64 copy."""
    v = np.asarray(vec, dtype=np.float64).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"{name}: expected 3 components, got shape {np.shape(vec)}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name}: contains non-finite values")
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError(f"{name}: zero vector has no direction")
    if abs(n - 1.0) > tol:
        raise ValueError(f"{name}: not unit length (norm={n!r})")
    return v


def check_rgb(value, name: str) -> np.ndarray:
    """Coerce to a float64 RGB triple, requiring finite non-negative entries."""
    v = np.asarray(value, dtype=np.float64).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"{name}: expected 3 channels, got shape {np.shape(value)}")
    check_finite_nonneg(v, name)
    return v


def check_in_range(value: float, lo: float, hi: float, name: str,
                   inclusive: bool = True) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name}: must be finite")
    ok = lo <= value <= hi if inclusive else lo < value < hi
    if not ok:
        raise ValueError(f"{name}: {value} outside allowed range [{lo}, {hi}]")
    return value
