"""K-component Bayesian mixture of spatial spline regressions (BMSSR).

Conditional on ``z_i = k``, surface ``i`` follows a BSSR model with
component parameters ``(beta_k, b_ik, sigma2_k, xi2_k)``; proportions
``pi ~ Dir(alphas)``.  Component labels are 0-based throughout this module.

Every surface carries a random-effect vector for every component.  By
default ``b_ik`` for ``z_i != k`` is drawn from its prior, which is the
exact full conditional of the augmented posterior; ``literal=True`` instead
uses the data-informed conditional for all ``i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .bssr import LOG_2PI, RIDGE, BssrHyper, ridge_fit
from .datasets import SurfaceDataset
from .errors import NumericalError
from .randdist import (
    MvnParams,
    RngStream,
    _cholesky,
    sample_categorical_rows,
    sample_dirichlet,
    sample_inverse_gamma,
    sample_mvn,
)


@dataclass
class BmssrHyper:
    alphas: np.ndarray
    base: BssrHyper

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        if self.alphas.ndim != 1 or not np.all(self.alphas > 0):
            raise ValueError("Dirichlet parameters must be positive")

    @property
    def K(self) -> int:
        return self.alphas.shape[0]

    @classmethod
    def default(cls, K: int, d: int, alpha: float = 1.0, prior_var: float = 100.0, **kw):
        return cls(np.full(K, float(alpha)), BssrHyper.default(d, prior_var, **kw))

    def to_dict(self) -> dict:
        a = self.alphas
        alphas = float(a[0]) if np.all(a == a[0]) else a.tolist()
        return {"alphas": alphas, **self.base.to_dict()}


@dataclass
class MixtureParams:
    """Continuous mixture parameters; ``b`` has shape ``(n, K, d)``."""

    pi: np.ndarray
    beta: np.ndarray
    b: np.ndarray
    sigma2: np.ndarray
    xi2: np.ndarray

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    def permuted(self, perm) -> "MixtureParams":
        """Component ``k`` of the result is component ``perm[k]`` of ``self``."""
        perm = np.asarray(perm)
        return replace(self, pi=self.pi[perm], beta=self.beta[perm], b=self.b[:, perm],
                       sigma2=self.sigma2[perm], xi2=self.xi2[perm])

    def copy(self):
        return replace(self, pi=self.pi.copy(), beta=self.beta.copy(), b=self.b.copy(),
                       sigma2=self.sigma2.copy(), xi2=self.xi2.copy())


@dataclass
class BmssrState(MixtureParams):
    z: np.ndarray = None

    def permuted(self, perm) -> "BmssrState":
        perm = np.asarray(perm)
        out = MixtureParams.permuted(self, perm)
        inv = np.argsort(perm)
        return replace(out, z=inv[self.z])

    def copy(self):
        return replace(MixtureParams.copy(self), z=self.z.copy())

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.z, minlength=self.K)


# --- likelihood pieces ---------------------------------------------------

def component_loglik(data: SurfaceDataset, params: MixtureParams) -> np.ndarray:
    """``(n, K)`` matrix of ``log N(y_i; S_i (beta_k + b_ik), sigma2_k I)``."""
    st = data.stats
    out = np.empty((st.n, params.K))
    for k in range(params.K):
        r = st.residual_sq(params.beta[k][None, :] + params.b[:, k, :])
        s2 = params.sigma2[k]
        out[:, k] = -0.5 * (st.m * (LOG_2PI + math.log(s2)) + r / s2)
    return out


def log_responsibilities(data: SurfaceDataset, params: MixtureParams) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logw = np.log(params.pi)[None, :] + component_loglik(data, params)
    top = logw.max(axis=1)
    bad = np.flatnonzero(~np.isfinite(top))
    if bad.size:
        raise NumericalError(f"surface {int(bad[0])} has zero density under every component")
    return logw - logsumexp(logw, axis=1, keepdims=True)


def responsibilities(data: SurfaceDataset, params: MixtureParams) -> np.ndarray:
    """Posterior membership probabilities, normalised per row in log space."""
    tau = np.exp(log_responsibilities(data, params))
    return tau / tau.sum(axis=1, keepdims=True)


def complete_loglik(data: SurfaceDataset, state: BmssrState) -> float:
    """``sum_i log pi_{z_i} + log N(y_i; S_i(beta_{z_i} + b_{i z_i}), sigma2_{z_i} I)``.

    Terms are accumulated in surface order so relabelling components gives
    bit-identical results.
    """
    st = data.stats
    z = state.z
    theta = state.beta[z] + state.b[np.arange(st.n), z]
    r = st.residual_sq(theta)
    s2 = state.sigma2[z]
    with np.errstate(divide="ignore"):
        terms = np.log(state.pi[z]) - 0.5 * (st.m * (LOG_2PI + np.log(s2)) + r / s2)
    return float(math.fsum(terms))


# --- full conditionals ---------------------------------------------------

def cond_pi(z, alphas) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=float)
    return alphas + np.bincount(np.asarray(z), minlength=alphas.shape[0])


def cond_beta_k(data: SurfaceDataset, state: BmssrState, hyper: BmssrHyper, k: int,
                literal: bool = False) -> MvnParams:
    st = data.stats
    h = hyper.base
    s2 = float(state.sigma2[k])
    if not s2 > 0:
        raise NumericalError(f"sigma2[{k}] must be positive")
    w = (state.z == k).astype(float)
    prec = h.Sigma0_inv + st.pooled_StS(w) / s2
    data_term = w @ (st.Sty - st.StS_times(state.b[:, k, :])) / s2
    prior_term = -h.Sigma0_inv_mu0 if literal else h.Sigma0_inv_mu0
    return MvnParams.from_precision(prec, data_term + prior_term, f"V0^-1 (component {k})")


def cond_b_ik(y_i, S_i, state: BmssrState, i: int, k: int, literal: bool = False) -> MvnParams:
    s2, x2 = float(state.sigma2[k]), float(state.xi2[k])
    S_i = np.asarray(S_i, dtype=float)
    d = S_i.shape[1]
    if state.z[i] != k and not literal:
        return MvnParams(np.zeros(d), x2 * np.eye(d))
    prec = S_i.T @ S_i / s2 + np.eye(d) / x2
    lin = S_i.T @ (np.asarray(y_i, dtype=float) - S_i @ state.beta[k]) / s2
    return MvnParams.from_precision(prec, lin, f"V1^-1 (surface {i}, component {k})")


def cond_sigma2_k(data: SurfaceDataset, state: BmssrState, hyper: BmssrHyper, k: int,
                  literal: bool = False) -> tuple[float, float]:
    st = data.stats
    members = np.flatnonzero(state.z == k)
    h = hyper.base
    if members.size == 0:
        return h.g0, h.h0
    theta = state.beta[k][None, :] + state.b[members, k, :]
    r = st.residual_sq(theta, members)
    count = members.size if literal else int(st.m[members].sum())
    return h.g0 + count / 2.0, h.h0 + 0.5 * float(r.sum())


def cond_xi2_k(state: BmssrState, hyper: BmssrHyper, k: int, literal: bool = False) -> tuple[float, float]:
    bk = state.b[:, k, :]
    n, d = bk.shape
    count = n if literal else n * d
    return hyper.base.a0 + count / 2.0, hyper.base.b0 + 0.5 * float(np.sum(bk * bk))


def _sample_b_k(data: SurfaceDataset, state: BmssrState, k: int, rng: RngStream,
                literal: bool) -> np.ndarray:
    """Draw ``b_ik`` for all ``i``; surfaces consume ``d`` normals each, in order."""
    st = data.stats
    s2, x2 = float(state.sigma2[k]), float(state.xi2[k])
    informed = np.ones(st.n, bool) if literal else state.z == k
    if not st.shared:
        return np.stack([
            sample_mvn(cond_b_ik(data.values[i], data.design(i), state, i, k, literal), rng)
            for i in range(st.n)
        ])
    z = rng.normal((st.n, st.d))
    out = math.sqrt(x2) * z
    idx = np.flatnonzero(informed)
    if idx.size:
        L = _cholesky(st.StS / s2 + np.eye(st.d) / x2, f"V1^-1 (component {k})")
        H = (st.Sty[idx] - (st.StS @ state.beta[k])[None, :]) / s2
        mean = linalg.cho_solve((L, True), H.T)
        out[idx] = (mean + linalg.solve_triangular(L, z[idx].T, lower=True, trans="T")).T
    return out


def bmssr_step(state: BmssrState, data: SurfaceDataset, hyper: BmssrHyper, rng: RngStream,
               literal: bool = False) -> BmssrState:
    """One sweep: allocations, proportions, then per component xi2, sigma2, beta, b."""
    new = state.copy()
    tau = responsibilities(data, new)
    new.z = sample_categorical_rows(tau, rng)
    new.pi = sample_dirichlet(cond_pi(new.z, hyper.alphas), rng)
    for k in range(new.K):
        new.xi2[k] = sample_inverse_gamma(*cond_xi2_k(new, hyper, k, literal), rng)
        new.sigma2[k] = sample_inverse_gamma(*cond_sigma2_k(data, new, hyper, k, literal), rng)
        new.beta[k] = sample_mvn(cond_beta_k(data, new, hyper, k, literal), rng)
        new.b[:, k, :] = _sample_b_k(data, new, k, rng, literal)
    return new


# --- initialisation ------------------------------------------------------

def surface_coefficients(data: SurfaceDataset, ridge: float = RIDGE) -> np.ndarray:
    """Per-surface ridge least-squares spline coefficients, ``(n, d)``."""
    st = data.stats
    if st.shared:
        L = _cholesky(st.StS + ridge * np.eye(st.d), "S^T S + ridge I")
        return linalg.cho_solve((L, True), st.Sty.T).T
    return np.stack([ridge_fit(st.StS[i], st.Sty[i], ridge) for i in range(st.n)])


def initial_state(data: SurfaceDataset, hyper: BmssrHyper, rng: RngStream,
                  restarts: int = 25) -> BmssrState:
    """k-means allocations on per-surface coefficients, then per-cluster fits."""
    from sklearn.cluster import KMeans

    st = data.stats
    K = hyper.K
    if K == 1:
        z = np.zeros(st.n, dtype=int)
    else:
        coef = surface_coefficients(data)
        km = KMeans(n_clusters=K, n_init=restarts, random_state=int(rng.gen.integers(2**31 - 1)))
        z = km.fit_predict(coef).astype(int)
    pooled = ridge_fit(st.pooled_StS(), st.Sty.sum(axis=0))
    pooled_s2 = st.residual_sq(np.broadcast_to(pooled, (st.n, st.d))).sum() / st.total_m
    beta = np.empty((K, st.d))
    sigma2 = np.empty(K)
    for k in range(K):
        w = (z == k).astype(float)
        if w.sum() == 0:
            beta[k] = hyper.base.mu0
            sigma2[k] = pooled_s2
            continue
        beta[k] = ridge_fit(st.pooled_StS(w), w @ st.Sty)
        members = np.flatnonzero(w)
        r = st.residual_sq(np.broadcast_to(beta[k], (members.size, st.d)), members)
        sigma2[k] = r.sum() / st.m[members].sum()
    sigma2 = np.maximum(sigma2, 1e-12)
    pi = np.bincount(z, minlength=K) / st.n
    return BmssrState(pi=pi, beta=beta, b=np.zeros((st.n, K, st.d)), sigma2=sigma2,
                      xi2=np.ones(K), z=z)


# --- chains, relabelling, estimates --------------------------------------

@dataclass
class MixtureChain:
    pi: np.ndarray          # (T, K)
    beta: np.ndarray        # (T, K, d)
    sigma2: np.ndarray      # (T, K)
    xi2: np.ndarray         # (T, K)
    z: np.ndarray           # (T, n)
    loglik: np.ndarray      # (T,)
    burnin: int = 0
    b: Optional[np.ndarray] = None       # (T, n, K, d), only when kept
    b_mean: Optional[np.ndarray] = None  # post-burn-in mean, same frame as the stored draws
    perms: Optional[np.ndarray] = None   # (T, K) permutations applied to the stored draws

    def __len__(self):
        return self.pi.shape[0]


def best_permutation(reference: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Permutation minimising ``sum_k ||reference_k - beta_{perm[k]}||^2``."""
    cost = ((reference[:, None, :] - beta[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(reference.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def relabel_chain(chain: MixtureChain) -> MixtureChain:
    """Align every post-burn-in draw with the first post-burn-in draw.

    Pre-burn-in draws are left untouched.  ``b_mean`` cannot be realigned
    after the fact and is dropped unless the full ``b`` draws are stored.
    """
    T, K = chain.pi.shape
    if T == 0:
        raise ValueError("empty chain")
    if not 0 <= chain.burnin < T:
        raise ValueError("burn-in must leave at least one draw")
    ref = chain.beta[chain.burnin]
    perms = np.tile(np.arange(K), (T, 1))
    for t in range(chain.burnin, T):
        perms[t] = best_permutation(ref, chain.beta[t])
    rows = np.arange(T)[:, None]
    inv = np.argsort(perms, axis=1)
    out = MixtureChain(
        pi=chain.pi[rows, perms], beta=chain.beta[rows, perms], sigma2=chain.sigma2[rows, perms],
        xi2=chain.xi2[rows, perms], z=np.take_along_axis(inv, chain.z, axis=1), loglik=chain.loglik.copy(),
        burnin=chain.burnin,
    )
    prev = chain.perms if chain.perms is not None else np.tile(np.arange(K), (T, 1))
    out.perms = np.take_along_axis(prev, perms, axis=1)
    if chain.b is not None:
        out.b = np.stack([chain.b[t][:, perms[t]] for t in range(T)])
        out.b_mean = out.b[chain.burnin:].mean(axis=0)
    elif np.array_equal(perms, np.tile(np.arange(K), (T, 1))):
        out.b_mean = chain.b_mean
    return out


def map_estimate(chain: MixtureChain, burnin: Optional[int] = None) -> MixtureParams:
    """Post-burn-in average of the continuous parameters."""
    burnin = chain.burnin if burnin is None else int(burnin)
    if not 0 <= burnin < len(chain):
        raise ValueError("burn-in must leave at least one draw")
    post = slice(burnin, None)
    if chain.b is not None:
        b = chain.b[post].mean(axis=0)
    elif chain.b_mean is not None and burnin == chain.burnin:
        b = chain.b_mean
    else:
        raise ValueError("random-effect draws were not stored for this burn-in")
    pi = chain.pi[post].mean(axis=0)
    return MixtureParams(pi=pi / pi.sum(), beta=chain.beta[post].mean(axis=0), b=b,
                         sigma2=chain.sigma2[post].mean(axis=0), xi2=chain.xi2[post].mean(axis=0))


def cluster_assign(data: SurfaceDataset, psi_hat: MixtureParams) -> np.ndarray:
    """MAP rule: each surface goes to its most probable component (lowest index on ties)."""
    return np.argmax(log_responsibilities(data, psi_hat), axis=1)


def marginal_mixture_loglik(data: SurfaceDataset, pi, betas, sigma2s, xi2s) -> float:
    """Observed-data log-likelihood with random effects integrated out.

    ``sum_i log sum_k pi_k N(y_i; S_i beta_k, xi2_k S_i S_i^T + sigma2_k I)``.
    """
    st = data.stats
    pi = np.asarray(pi, dtype=float)
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    sigma2s = np.atleast_1d(np.asarray(sigma2s, dtype=float))
    xi2s = np.atleast_1d(np.asarray(xi2s, dtype=float))
    K = pi.shape[0]
    logw = np.empty((st.n, K))
    groups = [(data.design(0), np.arange(st.n))] if st.shared else [
        (data.design(i), np.array([i])) for i in range(st.n)]
    for S, idx in groups:
        m = S.shape[0]
        SSt = S @ S.T
        Yg = np.vstack([data.values[i] for i in idx])
        for k in range(K):
            cov = xi2s[k] * SSt + sigma2s[k] * np.eye(m)
            L = _cholesky(cov, f"marginal covariance (component {k})")
            R = linalg.solve_triangular(L, (Yg - S @ betas[k]).T, lower=True)
            logdet = 2.0 * np.log(np.diag(L)).sum()
            logw[idx, k] = -0.5 * (m * LOG_2PI + logdet + np.einsum("ji,ji->i", R, R))
    with np.errstate(divide="ignore"):
        logw += np.log(pi)[None, :]
    return float(logsumexp(logw, axis=1).sum())


# --- driver --------------------------------------------------------------

@dataclass
class BmssrFit:
    chain: MixtureChain
    psi_hat: MixtureParams
    tau: np.ndarray
    z_hat: np.ndarray
    iterations: int
    burnin: int
    seed: int
    literal: bool = False
    relabel: bool = True
    settings: dict = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return "paper-literal" if self.literal else "corrected"


def bmssr_fit(data: SurfaceDataset, K: int, hyper: Optional[BmssrHyper] = None,
              iterations: int = 1500, burnin: int = 750, seed: int = 0, literal: bool = False,
              relabel: bool = True, keep_b: bool = False, restarts: int = 25,
              init: Optional[BmssrState] = None, rng: Optional[RngStream] = None,
              callback=None) -> BmssrFit:
    """Run the BMSSR Gibbs sampler, relabel, average and assign clusters."""
    if int(iterations) != iterations or int(burnin) != burnin:
        raise ValueError("iterations and burnin must be integers")
    if not (iterations > burnin >= 0):
        raise ValueError(f"need iterations > burnin >= 0, got {iterations}, {burnin}")
    if K < 1:
        raise ValueError("K must be positive")
    st = data.stats
    hyper = hyper or BmssrHyper.default(K, st.d)
    if hyper.K != K or hyper.base.d != st.d:
        raise ValueError("hyperparameter dimensions do not match K and the design")
    rng = rng or RngStream(seed)
    state = init.copy() if init is not None else initial_state(data, hyper, rng, restarts)

    T = int(iterations)
    chain = MixtureChain(
        pi=np.empty((T, K)), beta=np.empty((T, K, st.d)), sigma2=np.empty((T, K)),
        xi2=np.empty((T, K)), z=np.empty((T, st.n), dtype=int), loglik=np.empty(T),
        burnin=int(burnin), b=np.empty((T, st.n, K, st.d)) if keep_b else None,
        perms=np.tile(np.arange(K), (T, 1)),
    )
    b_sum = np.zeros((st.n, K, st.d))
    ref = None
    for t in range(T):
        state = bmssr_step(state, data, hyper, rng, literal=literal)
        rec = state
        if t >= burnin and relabel:
            if ref is None:
                ref = state.beta.copy()
            perm = best_permutation(ref, state.beta)
            rec = state.permuted(perm)
            chain.perms[t] = perm
        chain.pi[t] = rec.pi
        chain.beta[t] = rec.beta
        chain.sigma2[t] = rec.sigma2
        chain.xi2[t] = rec.xi2
        chain.z[t] = rec.z
        chain.loglik[t] = complete_loglik(data, rec)
        if keep_b:
            chain.b[t] = rec.b
        if t >= burnin:
            b_sum += rec.b
        if callback is not None:
            callback(t, state)
    chain.b_mean = b_sum / (T - burnin)
    psi = map_estimate(chain)
    tau = responsibilities(data, psi)
    return BmssrFit(
        chain=chain, psi_hat=psi, tau=tau, z_hat=cluster_assign(data, psi), iterations=T,
        burnin=int(burnin), seed=int(rng.seed), literal=literal, relabel=relabel,
        settings={"hyper": hyper.to_dict(), "K": K, "init": "kmeans", "kmeans_restarts": restarts,
                  "ridge": RIDGE},
    )
