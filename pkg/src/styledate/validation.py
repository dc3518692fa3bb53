"""Small input-validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from .errors import DimMismatch, NegativeFeature


def as_float2d(x, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_dim(arr: np.ndarray, dim: int, name: str = "X") -> np.ndarray:
    if arr.shape[1] != dim:
        raise DimMismatch(f"{name} has {arr.shape[1]} columns, expected {dim}")
    return arr


def check_nonneg(arr: np.ndarray, name: str = "X") -> np.ndarray:
    if arr.size and arr.min() < 0:
        raise NegativeFeature(f"{name} must be nonnegative for this kernel")
    return arr
