"""Input validation helpers used by the estimators and the functional API."""
import math
from numbers import Real

import numpy as np

from .exceptions import UsageError


def check_scalar(x, name, *, min_val=None, max_val=None, include_min=True,
                 include_max=True):
    """Return ``x`` as a float after checking type, finiteness and bounds."""
    if isinstance(x, bool) or not isinstance(x, (Real, np.floating, np.integer)):
        raise UsageError(f"{name} must be a real number, got {type(x).__name__}")
    x = float(x)
    if not math.isfinite(x):
        raise UsageError(f"{name} must be finite, got {x}")
    if min_val is not None:
        if (x < min_val) or (x == min_val and not include_min):
            op = ">=" if include_min else ">"
            raise UsageError(f"{name} must be {op} {min_val}, got {x}")
    if max_val is not None:
        if (x > max_val) or (x == max_val and not include_max):
            op = "<=" if include_max else "<"
            raise UsageError(f"{name} must be {op} {max_val}, got {x}")
    return x


def check_count(n, name, *, min_val=1):
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise UsageError(f"{name} must be an integer, got {type(n).__name__}")
    if n < min_val:
        raise UsageError(f"{name} must be >= {min_val}, got {n}")
    return int(n)


def check_point(point, name="point"):
    arr = np.asarray(point, dtype=float)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} must be a finite 2-vector, got {point!r}")
    return arr


def check_points(points, name="points"):
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 2 or not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} must be an (n, 2) array of finite points")
    return arr


def check_increasing(values, name, *, strict=True, min_len=1):
    vals = [check_scalar(v, name) for v in values]
    if len(vals) < min_len:
        raise UsageError(f"{name} needs at least {min_len} entries")
    for a, b in zip(vals, vals[1:]):
        if b < a or (strict and b == a):
            raise UsageError(f"{name} must be increasing, got {vals}")
    return vals


def check_finite_array(values, name):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return arr
