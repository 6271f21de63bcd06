"""Nodal basis functions (NBF) on a regular triangulated node lattice.

Each node carries a piecewise-linear "tent" supported on the hexagon formed
by the six triangles around it.  The lattice cells are split by diagonals of
slope ``delta2 / delta1`` running lower-left to upper-right.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class OutsideSupportWarning(UserWarning):
    """Some evaluation points are not covered by any basis function."""


@dataclass(frozen=True)
class NodeGrid:
    """Regular ``d1 x d2`` lattice of NBF centers.

    ``centers`` is ``(d, 2)`` in row-major order: ``x1`` varies fastest, rows
    run upwards in ``x2``.
    """

    domain: tuple[float, float, float, float]
    d1: int
    d2: int
    centers: np.ndarray
    delta1: float
    delta2: float

    @property
    def d(self) -> int:
        return self.d1 * self.d2

    def to_dict(self) -> dict:
        return {"domain": list(self.domain), "d1": self.d1, "d2": self.d2}

    @classmethod
    def from_dict(cls, obj: dict) -> "NodeGrid":
        return node_grid(tuple(obj["domain"]), int(obj["d1"]), int(obj["d2"]))


def _axis(lo: float, hi: float, n: int) -> tuple[np.ndarray, float]:
    if n == 1:
        # single node: domain midpoint, spacing half the extent
        return np.array([(lo + hi) / 2.0]), (hi - lo) / 2.0
    return np.linspace(lo, hi, n), (hi - lo) / (n - 1)


def node_grid(domain, d1: int, d2: int) -> NodeGrid:
    """Place ``d1 * d2`` nodes on the rectangle ``(lo1, hi1, lo2, hi2)``.

    Nodes sit on the domain boundary inclusively.
    """
    if int(d1) != d1 or int(d2) != d2 or d1 < 1 or d2 < 1:
        raise ValueError(f"node counts must be positive integers, got {d1}x{d2}")
    lo1, hi1, lo2, hi2 = (float(v) for v in domain)
    if not all(math.isfinite(v) for v in (lo1, hi1, lo2, hi2)):
        raise ValueError("domain bounds must be finite")
    if not (hi1 > lo1 and hi2 > lo2):
        raise ValueError(f"degenerate domain {domain}")
    c1, delta1 = _axis(lo1, hi1, int(d1))
    c2, delta2 = _axis(lo2, hi2, int(d2))
    g1, g2 = np.meshgrid(c1, c2)
    centers = np.column_stack([g1.ravel(), g2.ravel()])
    return NodeGrid((lo1, hi1, lo2, hi2), int(d1), int(d2), centers, delta1, delta2)


_EPS = np.finfo(float).eps


def _noise_floor(x1, x2, c1, c2, d1, d2):
    """Rounding error of the raw-coordinate pieces; smaller values are zeros."""
    return 32.0 * _EPS * (1.0 + (abs(x1) + abs(c1)) / d1 + (abs(x2) + abs(c2)) / d2)


def nbf_eval(x, c, delta1: float, delta2: float) -> float:
    """Evaluate the six-piece NBF centered at ``c`` at the point ``x``.

    Cases are tested in order and the first match wins.  The line
    ``x1 == c1`` is attached to the right-hand pieces so the node itself
    evaluates to 1.
    """
    x1, x2 = float(x[0]), float(x[1])
    c1, c2 = float(c[0]), float(c[1])
    d1, d2 = float(delta1), float(delta2)
    if not all(math.isfinite(v) for v in (x1, x2, c1, c2, d1, d2)):
        raise ValueError("nbf_eval requires finite inputs")
    if d1 <= 0 or d2 <= 0:
        raise ValueError("node spacings must be positive")

    v = _piece(x1, x2, c1, c2, d1, d2)
    return 0.0 if v < _noise_floor(x1, x2, c1, c2, d1, d2) else min(v, 1.0)


def _piece(x1, x2, c1, c2, d1, d2) -> float:
    diag = d2 / d1 * x1 + (d1 * c2 - d2 * c1) / d1
    if c1 <= x1 <= c1 + d1:
        if diag <= x2 < c2 + d2:
            return -x2 / d2 + (c2 + d2) / d2
        if c2 <= x2 < diag:
            return -x1 / d1 + (c1 + d1) / d1
        if diag - d2 <= x2 < c2:
            return -x1 / d1 + x2 / d2 + (d1 * d2 + d2 * c1 - d1 * c2) / (d1 * d2)
    if c1 - d1 <= x1 < c1:
        if c2 - d2 <= x2 <= diag:
            return x2 / d2 + (d2 - c2) / d2
        if diag < x2 <= c2:
            return x1 / d1 + (d1 - c1) / d1
        if c2 < x2 <= diag + d2:
            return x1 / d1 - x2 / d2 + (d1 * d2 + d1 * c2 - d2 * c1) / (d1 * d2)
    return 0.0


def nbf_values(points: np.ndarray, centers: np.ndarray, delta1: float, delta2: float) -> np.ndarray:
    """Vectorised :func:`nbf_eval`: ``(m, 2)`` points by ``(d, 2)`` centers -> ``(m, d)``."""
    x1 = points[:, 0:1]
    x2 = points[:, 1:2]
    c1 = centers[None, :, 0]
    c2 = centers[None, :, 1]
    d1, d2 = float(delta1), float(delta2)
    diag = d2 / d1 * x1 + (d1 * c2 - d2 * c1) / d1

    right = (c1 <= x1) & (x1 <= c1 + d1)
    left = (c1 - d1 <= x1) & (x1 < c1)
    conds = [
        right & (diag <= x2) & (x2 < c2 + d2),
        right & (c2 <= x2) & (x2 < diag),
        right & (diag - d2 <= x2) & (x2 < c2),
        left & (c2 - d2 <= x2) & (x2 <= diag),
        left & (diag < x2) & (x2 <= c2),
        left & (c2 < x2) & (x2 <= diag + d2),
    ]
    pieces = [
        -x2 / d2 + (c2 + d2) / d2,
        -x1 / d1 + (c1 + d1) / d1,
        -x1 / d1 + x2 / d2 + (d1 * d2 + d2 * c1 - d1 * c2) / (d1 * d2),
        x2 / d2 + (d2 - c2) / d2,
        x1 / d1 + (d1 - c1) / d1,
        x1 / d1 - x2 / d2 + (d1 * d2 + d1 * c2 - d2 * c1) / (d1 * d2),
    ]
    out = np.select(conds, pieces, default=0.0)
    # pieces that vanish on a triangle edge come out a few ulp off zero
    out[out < _noise_floor(np.abs(x1), np.abs(x2), np.abs(c1), np.abs(c2), d1, d2)] = 0.0
    return np.minimum(out, 1.0)


def design_matrix(points, grid: NodeGrid) -> np.ndarray:
    """Assemble the ``m x d`` matrix with entries ``s(x_j; c_l)``.

    Rows for points outside every basis support are all zero; an
    :class:`OutsideSupportWarning` is emitted when that happens.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must have shape (m, 2), got {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError("design_matrix needs at least one point")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    S = nbf_values(pts, grid.centers, grid.delta1, grid.delta2)
    empty = ~S.any(axis=1)
    if empty.any():
        warnings.warn(
            f"{int(empty.sum())} of {len(S)} points lie outside the NBF support",
            OutsideSupportWarning,
            stacklevel=2,
        )
    S.setflags(write=False)
    return S
