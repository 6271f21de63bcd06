"""Partition agreement (adjusted Rand index) and surface fit error (SSE)."""

from __future__ import annotations

from collections import Counter
from fractions import Fraction

import numpy as np


def _pairs(count: int) -> int:
    return count * (count - 1) // 2


def ari(a, b) -> float:
    """Adjusted Rand index between two labelings of the same items.

    Pair counts are accumulated in exact integer arithmetic; only the final
    ratio is converted to float.  Returns 1.0 when both partitions are the
    trivial all-in-one or all-singletons case that makes the index undefined.
    """
    a = list(np.asarray(a).tolist())
    b = list(np.asarray(b).tolist())
    if len(a) != len(b):
        raise ValueError(f"partitions differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("partitions are empty")
    n = len(a)
    sum_cells = sum(_pairs(c) for c in Counter(zip(a, b)).values())
    sum_a = sum(_pairs(c) for c in Counter(a).values())
    sum_b = sum(_pairs(c) for c in Counter(b).values())
    total = _pairs(n)
    if total == 0:
        return 1.0
    expected = Fraction(sum_a * sum_b, total)
    maximum = Fraction(sum_a + sum_b, 2)
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))


def sse(truth, fitted) -> float:
    """Sum of squared differences between two surfaces on the same points."""
    t = np.asarray(truth, dtype=float).ravel()
    f = np.asarray(fitted, dtype=float).ravel()
    if t.shape != f.shape:
        raise ValueError(f"length mismatch: {t.size} vs {f.size}")
    r = t - f
    return float(r @ r)
