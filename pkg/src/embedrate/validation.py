"""Input validation helpers used by the estimators and the functional core."""

from __future__ import annotations

import numpy as np

from .errors import SchemaError


def as_float_vector(x, name: str, *, require_finite: bool = True) -> np.ndarray:
    """Coerce ``x`` to a 1-D float64 array, validating shape and finiteness."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise SchemaError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if require_finite and not np.all(np.isfinite(arr)):
        raise SchemaError(f"{name} contains non-finite values")
    return arr


def as_float_matrix(x, name: str, *, require_finite: bool = True) -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array, validating shape and finiteness."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise SchemaError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if require_finite and not np.all(np.isfinite(arr)):
        raise SchemaError(f"{name} contains non-finite values")
    return arr


def check_same_length(*pairs: tuple[str, object]) -> int:
    """Check that all named arrays share their first dimension; return it."""
    lengths = {name: len(arr) for name, arr in pairs}
    distinct = set(lengths.values())
    if len(distinct) > 1:
        detail = ", ".join(f"{k}={v}" for k, v in lengths.items())
        raise SchemaError(f"length mismatch: {detail}")
    return distinct.pop() if distinct else 0


def check_unique_ids(ids, name: str) -> np.ndarray:
    """Validate that identifiers are unique; return them as an object array."""
    arr = np.asarray(ids, dtype=object)
    if arr.ndim != 1:
        raise SchemaError(f"{name} must be one-dimensional")
    values, counts = np.unique(arr.astype(str), return_counts=True)
    dupes = values[counts > 1]
    if dupes.size:
        shown = ", ".join(map(str, dupes[:5]))
        raise SchemaError(f"duplicate {name}: {shown}")
    return arr
