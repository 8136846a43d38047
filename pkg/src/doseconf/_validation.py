"""Small input-validation helpers shared across the package."""

import numpy as np


def check_matrix(X, name="X"):
    """Coerce ``X`` to a 2-D float array with finite entries."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-dimensional array, got ndim={X.ndim}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite entries")
    return X


def check_vector(v, name="y", allow_empty=False):
    """Coerce ``v`` to a 1-D float array with finite entries."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0 and not allow_empty:
        raise ValueError(f"{name} is empty")
    if not np.isfinite(v).all():
        raise ValueError(f"{name} contains non-finite entries")
    return v


def check_consistent_length(*arrays):
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"inconsistent lengths: {sorted(lengths)}")


def check_unit_open(value, name="alpha"):
    """Require ``value`` to lie strictly inside (0, 1)."""
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value}")
    return value
