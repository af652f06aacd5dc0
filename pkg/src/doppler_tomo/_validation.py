"""Argument checks shared by the estimators and the command line."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .fields import Grid
from .geometry import Fan


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive(value, name, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value}")
    return value


def check_grid(grid):
    if not isinstance(grid, Grid):
        raise TypeError(f"expected a Grid, got {type(grid).__name__}")
    return grid


def check_fan(fan):
    if not isinstance(fan, Fan):
        raise TypeError(f"expected a Fan, got {type(fan).__name__}")
    if np.any(fan.mu <= 0):
        raise ValueError("fan weights must be positive")
    return fan


def check_vectors(X, length, name="X"):
    """2D float array with ``length`` columns; a single 1D vector becomes one row."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=float)
    if X.shape[1] != length:
        raise ValueError(f"{name} must have {length} columns, got {X.shape[1]}")
    return X
