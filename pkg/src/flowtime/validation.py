"""Input validation helpers shared by the public entry points."""

from numbers import Integral

import numpy as np


def check_int(value, name, minimum=None):
    """Return ``value`` as a plain int, rejecting bools, floats and out-of-range values."""
    if isinstance(value, bool) or not isinstance(value, (Integral, np.integer)):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_jobs_array(X):
    """Validate an (n, 3) array-like of integer ``(release, proc, weight)`` rows.

    Returns a list of int triples. Accepts lists of tuples or numpy arrays.
    """
    arr = np.asarray(X)
    if arr.size == 0:
        return []
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array of (r, p, w), got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("job data must be integral")
        arr = arr.astype(np.int64)
    rows = []
    for i, (r, p, w) in enumerate(arr.tolist()):
        if r < 0:
            raise ValueError(f"job {i}: release must be >= 0")
        if p < 1:
            raise ValueError(f"job {i}: processing time must be >= 1")
        if w < 1:
            raise ValueError(f"job {i}: weight must be >= 1")
        rows.append((int(r), int(p), int(w)))
    return rows


def check_offsets_spec(spec):
    """Parse an offsets spec: ``"all"`` or ``"sample:k"``; returns ``None`` or ``k``."""
    if spec == "all":
        return None
    if isinstance(spec, str) and spec.startswith("sample:"):
        k = spec.split(":", 1)[1]
        if not k.isdigit() or int(k) < 1:
            raise ValueError(f"bad offsets spec {spec!r}")
        return int(k)
    raise ValueError(f"offsets must be 'all' or 'sample:k', got {spec!r}")
