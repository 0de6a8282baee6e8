"""Input validation helpers shared by the estimators and simulators."""

from numbers import Integral

import numpy as np


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value!r}")
    return value


def check_count(value, name, minimum=1):
    if not isinstance(value, Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_order(order, n_fft=None):
    """Validate an estimation order ``M`` (even, non-negative)."""
    order = check_count(order, "order", minimum=0)
    if order % 2:
        raise ValueError(f"order must be even, got {order}")
    if n_fft is not None and order > n_fft:
        raise ValueError(f"order {order} exceeds the number of subcarriers {n_fft}")
    return order


def check_complex_array(x, name, ndim=None, length=None):
    """Return ``x`` as a complex128 array, checking rank, trailing length and finiteness."""
    arr = np.asarray(x)
    if arr.dtype == object:
        raise TypeError(f"{name} must be numeric")
    arr = arr.astype(np.complex128, copy=False)
    if ndim is not None and arr.ndim not in np.atleast_1d(ndim):
        raise ValueError(f"{name} must have ndim in {ndim}, got shape {arr.shape}")
    if length is not None and arr.shape[-1] != length:
        raise ValueError(f"{name} must have trailing length {length}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_index_set(indices, n, name="indices"):
    idx = np.asarray(indices, dtype=int).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError(f"{name} must lie in [0, {n}), got {idx.tolist()}")
    if np.unique(idx).size != idx.size:
        raise ValueError(f"{name} must be distinct, got {idx.tolist()}")
    return idx


def check_rng(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
