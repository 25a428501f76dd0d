"""Small argument checkers in the spirit of ``sklearn.utils.validation``."""

import math
import numbers

import numpy as np

from .exceptions import DataError


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise DataError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_non_negative(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise DataError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise DataError(f"{name} must be finite and >= 0, got {value!r}")
    return value


def check_unit_interval(value, name):
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise DataError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_choice(value, name, choices):
    value = str(value).lower()
    if value not in choices:
        raise DataError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def check_query_vector(vector, dim):
    """Return ``vector`` as a unit-norm float64 array of length ``dim``."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim == 2 and vector.shape[0] == 1:
        vector = vector[0]
    if vector.ndim != 1 or vector.shape[0] != dim:
        raise DataError(f"query vector has shape {vector.shape}, index dim is {dim}")
    if not np.all(np.isfinite(vector)):
        raise DataError("query vector contains non-finite values")
    norm = float(np.sqrt(vector @ vector))
    if norm == 0.0:
        raise DataError("query vector has zero norm")
    return vector / norm


def check_same_qid(lists):
    qids = {r.qid for r in lists}
    if len(qids) > 1:
        raise DataError(f"cannot fuse lists for different queries: {sorted(qids)}")
    return next(iter(qids)) if qids else None
