"""Small shared helpers: empirical quantiles and numeric formatting."""

import math

import numpy as np


def empirical_quantile(values, level):
    """Order-statistic (type-1) empirical quantile.

    Returns the ``ceil(level * m)``-th smallest of ``values`` (1-indexed),
    which matches the empirical quantile function used to invert bootstrap
    distributions, with no interpolation.
    """
    arr = np.sort(np.asarray(values, dtype=float))
    m = arr.size
    if m == 0:
        raise ValueError("empirical_quantile of empty sample")
    if not 0.0 < level <= 1.0:
        raise ValueError(f"quantile level must be in (0, 1], got {level}")
    idx = min(max(math.ceil(level * m), 1), m) - 1
    return float(arr[idx])


def format_full(x):
    """Full-precision decimal text that round-trips the float exactly."""
    return repr(float(x))


def format_table(x):
    """Compact 6-significant-digit text for human-readable tables."""
    return f"{float(x):.6g}"
