"""Input validation helpers shared by the estimators and the functional API."""

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when a loss, gradient or parameter stops being finite."""


def as_matrix(X, name="X", width=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if width is not None and X.shape[1] != width:
        raise ValueError(
            f"{name} has {X.shape[1]} columns but {width} were expected"
        )
    return X


def as_labels(y, n_classes, name="labels", length=None):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError(f"{name} must hold integer class ids")
    y = y.astype(np.int64)
    if length is not None and y.shape[0] != length:
        raise ValueError(f"{name} has length {y.shape[0]}, expected {length}")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        bad = y[(y < 0) | (y >= n_classes)][0]
        raise ValueError(f"{name} contains class id {bad} outside [0, {n_classes})")
    return y


def check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite {what}")
    return value
