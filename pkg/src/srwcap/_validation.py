"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""
import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import ConfigurationError

SUPPORTED_DIMENSIONS = (3, 4)


def check_dimension(d):
    if isinstance(d, bool) or not isinstance(d, numbers.Integral) or int(d) not in SUPPORTED_DIMENSIONS:
        raise ConfigurationError(
            f"dimension must be one of {SUPPORTED_DIMENSIONS}, got {d!r}")
    return int(d)


def check_nonnegative_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


def check_positive_int(value, name):
    value = check_nonnegative_int(value, name)
    if value == 0:
        raise ValueError(f"{name} must be positive")
    return value


def check_sites(X, d=None, allow_empty=False):
    """Validate a lattice site array and return it as C-contiguous int64.

    Floats are accepted only when every entry is integral.
    """
    X = check_array(X, dtype=None, ensure_2d=True,
                    ensure_min_samples=0 if allow_empty else 1)
    if X.dtype.kind == "f":
        if not np.all(np.isfinite(X)) or not np.all(X == np.round(X)):
            raise ValueError("lattice sites must have integer coordinates")
    elif X.dtype.kind not in "iu":
        raise ValueError(f"unsupported dtype for lattice sites: {X.dtype}")
    X = np.ascontiguousarray(X, dtype=np.int64)
    if d is not None and X.shape[1] != d:
        raise ConfigurationError(f"expected {d}-dimensional sites, got {X.shape[1]}")
    check_dimension(X.shape[1])
    return X


def check_points(X, dim=3):
    """Validate a real point cloud of shape (N, dim)."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {X.shape[1]}")
    return np.ascontiguousarray(X)
