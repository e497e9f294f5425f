"""Input validation helpers used at every public entry point."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, ParameterError


def check_matrix(x, name="matrix", *, allow_1d=False) -> np.ndarray:
    """Coerce `x` to a finite float64 2-d array (C order)."""
    arr = np.asarray(x, dtype=np.float64)
    if allow_1d and arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if arr.size and not np.isfinite(arr).all():
        raise ParameterError(f"{name} contains NaN or Inf entries")
    return np.ascontiguousarray(arr)


def check_vector(x, name="vector") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size and not np.isfinite(arr).all():
        raise ParameterError(f"{name} contains NaN or Inf entries")
    return arr


def check_labels(y, n_rows, name="labels", n_classes=None) -> np.ndarray:
    """Validate an integer class-index vector of length `n_rows`."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ParameterError(f"{name} must be 1-dimensional")
    if arr.shape[0] != n_rows:
        raise DimensionMismatchError(
            f"{name} has length {arr.shape[0]}, expected {n_rows}"
        )
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == arr.astype(np.int64)):
            raise ParameterError(f"{name} must contain integer class indices")
    arr = arr.astype(np.int64)
    if arr.size and arr.min() < 0:
        raise ParameterError(f"{name} contains negative class indices")
    if n_classes is not None and arr.size and arr.max() >= n_classes:
        raise ParameterError(
            f"{name} contains index {arr.max()} outside [0, {n_classes})"
        )
    return arr


def check_probabilities(p, name="probabilities", tol=1e-8) -> np.ndarray:
    """Validate rows of `p` as probability distributions."""
    arr = check_matrix(p, name)
    if arr.size == 0:
        raise ParameterError(f"{name} is empty")
    if arr.min() < -tol:
        raise ParameterError(f"{name} has negative entries")
    sums = arr.sum(axis=1)
    if np.abs(sums - 1.0).max() > max(tol, 1e-6):
        raise ParameterError(f"{name} rows do not sum to 1")
    return arr


def check_same_columns(a, b, name_a="a", name_b="b"):
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(
            f"{name_a} has {a.shape[1]} columns but {name_b} has {b.shape[1]}"
        )
