"""Input checks for ragged sequence collections."""

import numpy as np

from .exceptions import ContractError


def check_sequence(x, name="sequence", min_length=1, nonnegative=False):
    """Return ``x`` as a finite 1-D float64 array of at least ``min_length``."""
    values = getattr(x, "values", x)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise ContractError(f"{name} needs at least {min_length} value(s), got {arr.size}")
    if not np.isfinite(arr).all():
        raise ContractError(f"{name} contains non-finite values")
    if nonnegative and np.any(arr < 0):
        raise ContractError(f"{name} contains negative values")
    return arr


def check_sequences(X, name="X", min_length=1):
    """Validate a list of (possibly ragged) sequences."""
    if isinstance(X, np.ndarray) and X.ndim == 1 and X.dtype != object:
        raise ContractError(f"{name} must be a collection of sequences, not a single sequence")
    seqs = [check_sequence(x, f"{name}[{i}]", min_length) for i, x in enumerate(X)]
    if not seqs:
        raise ContractError(f"{name} is empty")
    return seqs


def check_seasons(X, horizon, min_prefix=1):
    """Validate training seasons; each must fit at least one training example."""
    if len(X) == 0:
        raise ContractError("no seasons given")
    for i, x in enumerate(X):
        check_sequence(x, f"season {i}", min_prefix + horizon, nonnegative=True)
    return list(X)
