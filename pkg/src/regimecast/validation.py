"""Input validation helpers used at public entry points."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericError


def as_float_array(x, name: str = "array", ndim: int | None = None,
                   shape: tuple | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name}: expected {ndim} dimensions, got {arr.ndim}")
    if shape is not None:
        for want, got in zip(shape, arr.shape):
            if want is not None and want != got:
                raise DimensionError(f"{name}: expected shape {shape}, got {arr.shape}")
    return arr


def ensure_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NumericError(f"{name}: {bad} non-finite entries")
    return arr


def ensure_vector(x, length: int, name: str = "vector") -> np.ndarray:
    arr = as_float_array(x, name=name, ndim=1)
    if arr.shape[0] != length:
        raise DimensionError(f"{name}: expected length {length}, got {arr.shape[0]}")
    return ensure_finite(arr, name)


def check_probability(p: float, name: str = "probability") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p
