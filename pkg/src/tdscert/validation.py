"""Input validation helpers.

Thin wrappers around :func:`sklearn.utils.check_array` that turn user input
into finite float64 arrays and raise the package's own exception types.
"""

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import DimensionMismatch, InvalidInput

__all__ = ["check_matrix", "check_square", "check_vector", "check_delay", "check_same_size"]


def check_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array (scalars become 1x1)."""
    if np.ndim(a) == 0:
        a = [[a]]
    try:
        return check_array(a, dtype=np.float64, ensure_all_finite=True, input_name=name, copy=True)
    except ValueError as exc:
        raise InvalidInput(f"{name}: {exc}") from None


def check_square(a, name="matrix"):
    a = check_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    return a


def check_vector(v, length=None, name="vector"):
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InvalidInput(f"{name} contains NaN or Inf")
    if length is not None and v.size != length:
        raise DimensionMismatch(f"{name} must have length {length}, got {v.size}")
    return v


def check_same_size(*mats, names=None):
    sizes = {m.shape for m in mats}
    if len(sizes) != 1:
        names = names or [f"arg{i}" for i in range(len(mats))]
        shapes = ", ".join(f"{n}{m.shape}" for n, m in zip(names, mats))
        raise DimensionMismatch(f"matrices must share their size: {shapes}")


def check_delay(h):
    if isinstance(h, bool) or not isinstance(h, (numbers.Real, np.floating)):
        raise InvalidInput(f"delay must be a real number, got {h!r}")
    h = float(h)
    if not np.isfinite(h) or h <= 0:
        raise InvalidInput(f"delay must be positive and finite, got {h}")
    return h
