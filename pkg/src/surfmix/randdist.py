"""Seeded samplers for the conjugate Gibbs updates.

Inverse-gamma uses the (shape, scale) convention, density proportional to
``x**-(shape + 1) * exp(-scale / x)``, mean ``scale / (shape - 1)``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy import linalg

from .errors import NumericalError


class RngStream:
    """A seeded PCG64 stream.  One stream per chain; never share across threads."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, index: int) -> "RngStream":
        """Stream for chain ``index``: base seed plus the index."""
        return RngStream(self.seed + int(index))

    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def uniform(self, size=None):
        return self.gen.random(size)

    def gamma(self, shape, size=None):
        return self.gen.standard_gamma(shape, size)


def _cholesky(matrix: np.ndarray, name: str) -> np.ndarray:
    try:
        return linalg.cholesky(matrix, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Cholesky factorization of {name} failed: {exc}") from exc


class MvnParams:
    """Mean and covariance of a multivariate normal.

    Built from a precision matrix via :meth:`from_precision`, the covariance is
    only formed on demand and sampling reuses the precision factor.
    """

    def __init__(self, mean, cov=None, *, prec_chol=None):
        self.mean = np.asarray(mean, dtype=float)
        self._cov = None if cov is None else np.asarray(cov, dtype=float)
        self._prec_chol = prec_chol
        if self._cov is None and self._prec_chol is None:
            raise ValueError("MvnParams needs a covariance or a precision factor")

    @classmethod
    def from_precision(cls, precision: np.ndarray, linear: np.ndarray, name: str = "precision"):
        """Normal with precision ``Q`` and mean ``Q^{-1} h``."""
        L = _cholesky(precision, name)
        mean = linalg.cho_solve((L, True), linear)
        return cls(mean, prec_chol=L)

    @property
    def cov(self) -> np.ndarray:
        if self._cov is None:
            L = self._prec_chol
            self._cov = linalg.cho_solve((L, True), np.eye(L.shape[0]))
        return self._cov

    def __repr__(self):
        return f"MvnParams(d={self.mean.shape[0]})"

    @property
    def precision_factor(self) -> Optional[np.ndarray]:
        return self._prec_chol


def sample_mvn(params: MvnParams, rng: RngStream) -> np.ndarray:
    """Draw ``mean + L z`` with ``L`` the lower Cholesky factor of the covariance.

    When the parameters carry a precision factor ``Q = L L^T`` the equivalent
    draw ``mean + L^{-T} z`` is used instead.
    """
    d = params.mean.shape[0]
    z = rng.normal(d)
    if params.precision_factor is not None:
        return params.mean + linalg.solve_triangular(params.precision_factor, z, lower=True, trans="T")
    L = _cholesky(params.cov, "covariance")
    return params.mean + L @ z


def sample_mvn_batch(mean: np.ndarray, prec_chol: np.ndarray, rng: RngStream) -> np.ndarray:
    """Rows ``mean[i] + L^{-T} z_i`` sharing one precision factor.

    Consumes normals in the same order as calling :func:`sample_mvn` once
    per row.
    """
    z = rng.normal(mean.shape)
    return mean + linalg.solve_triangular(prec_chol, z.T, lower=True, trans="T").T


def sample_inverse_gamma(shape: float, scale: float, rng: RngStream) -> float:
    if not (shape > 0 and scale > 0):
        raise ValueError(f"inverse-gamma needs shape, scale > 0; got ({shape}, {scale})")
    g = rng.gamma(shape)
    # standard_gamma can underflow to 0 for tiny shapes
    g = max(g, np.finfo(float).tiny)
    return scale / g


def sample_dirichlet(alphas, rng: RngStream) -> np.ndarray:
    a = np.asarray(alphas, dtype=float)
    if a.ndim != 1 or a.size == 0 or not np.all(a > 0):
        raise ValueError(f"Dirichlet parameters must be positive, got {a}")
    g = rng.gamma(a)
    total = g.sum()
    if total <= 0:
        # every gamma underflowed; fall back on the largest parameter
        g = (a == a.max()).astype(float)
        total = g.sum()
    p = g / total
    return p / p.sum()


def _check_probs(p: np.ndarray) -> np.ndarray:
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and nonnegative")
    s = p.sum(axis=-1, keepdims=True)
    if np.any(s <= 0):
        raise ValueError("probability vector is all zero")
    return p / s


def sample_categorical(probs, rng: RngStream) -> int:
    """Index in ``0..K-1`` drawn with the given probabilities."""
    p = _check_probs(np.asarray(probs, dtype=float))
    u = rng.uniform()
    idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
    # guard against cumsum ending just below 1
    last = int(np.flatnonzero(p)[-1])
    return min(idx, last)


def sample_categorical_rows(probs: np.ndarray, rng: RngStream) -> np.ndarray:
    """One categorical draw per row of an ``(n, K)`` probability matrix."""
    p = _check_probs(np.asarray(probs, dtype=float))
    u = rng.uniform(p.shape[0])
    cdf = np.cumsum(p, axis=1)
    idx = (cdf <= u[:, None]).sum(axis=1)
    last = p.shape[1] - 1 - np.argmax(p[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last)
