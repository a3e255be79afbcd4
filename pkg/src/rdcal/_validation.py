"""Small input checks shared by the estimator wrappers and the CLI."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_signals(X, n_features: int, name: str = "X", dtype="numeric") -> np.ndarray:
    """2-D array of row signals with ``n_features`` columns; a single vector becomes one row."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=dtype, ensure_2d=True)
    if X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} columns, expected {n_features}")
    return X


def check_vector(x, length: int | None = None, name: str = "x") -> np.ndarray:
    x = check_array(np.asarray(x, dtype=float).reshape(1, -1), ensure_2d=True).ravel()
    if length is not None and x.size != length:
        raise ValueError(f"{name} has length {x.size}, expected {length}")
    return x


def check_divides(N: int, M: int) -> int:
    """Return ``R = N // M`` after checking that it is exact."""
    N = check_positive_int(N, "N")
    M = check_positive_int(M, "M")
    if N % M:
        raise ValueError(f"N={N} is not an integer multiple of M={M}")
    return N // M
