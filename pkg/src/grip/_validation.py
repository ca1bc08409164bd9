"""Input validation helpers used by the estimators and free functions."""
from __future__ import annotations

import numpy as np

from .exceptions import LengthMismatch, ShapeMismatch

ROTATION_ATOL = 1e-9


def as_float_array(x, name="input"):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_trailing_shape(x, shape, name="input"):
    """Return ``x`` as float64 after checking its trailing dimensions."""
    arr = as_float_array(x, name)
    k = len(shape)
    if arr.ndim < k or tuple(arr.shape[arr.ndim - k:]) != tuple(shape):
        raise ShapeMismatch(f"{name}: expected trailing shape {shape}, got {arr.shape}")
    return arr


def check_rotations(r, name="rotation", atol=ROTATION_ATOL):
    """Check that every trailing 3x3 block is a proper rotation."""
    arr = check_trailing_shape(r, (3, 3), name)
    eye = np.eye(3)
    gram = np.swapaxes(arr, -1, -2) @ arr
    if not np.allclose(gram, eye, atol=atol, rtol=0.0):
        raise ValueError(f"{name}: columns are not orthonormal")
    if not np.allclose(np.linalg.det(arr), 1.0, atol=atol, rtol=0.0):
        raise ValueError(f"{name}: determinant is not +1")
    return arr


def is_rotation(r, atol=ROTATION_ATOL):
    try:
        check_rotations(r, atol=atol)
    except (ValueError, ShapeMismatch):
        return False
    return True


def check_points(x, name="points"):
    arr = check_trailing_shape(x, (3,), name)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name}: expected (n, 3), got {arr.shape}")
    return arr


def check_same_length(*arrays, names=None):
    lengths = [len(a) for a in arrays]
    if len(set(lengths)) > 1:
        label = ", ".join(names) if names else "inputs"
        raise LengthMismatch(f"{label}: lengths differ {lengths}")
    return lengths[0] if lengths else 0


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return float(value)
