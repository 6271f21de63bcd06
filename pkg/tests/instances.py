"""Random small model instances shared by the sampler tests."""

import numpy as np

from surfmix.bmssr import BmssrHyper, BmssrState
from surfmix.bssr import BssrHyper, BssrState
from surfmix.datasets import SurfaceDataset, lattice_points
from surfmix.nbf import design_matrix, node_grid


def spd(rng, d, scale=1.0):
    A = rng.normal(size=(d, d))
    return scale * (A @ A.T / d + np.eye(d))


def dataset(rng, n, d, shared, m=None):
    if shared:
        m = m or d + 2
        S = rng.uniform(0, 1, (m, d))
        return SurfaceDataset(values=[rng.normal(size=m) for _ in range(n)], designs=S)
    ms = [m or int(rng.integers(d + 1, d + 5)) for _ in range(n)]
    Ss = [rng.uniform(0, 1, (mi, d)) for mi in ms]
    return SurfaceDataset(values=[rng.normal(size=mi) for mi in ms], designs=Ss)


def bssr_instance(rng, shared=None):
    n, d = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    shared = bool(rng.integers(2)) if shared is None else shared
    ds = dataset(rng, n, d, shared)
    hyper = BssrHyper(mu0=rng.normal(size=d), Sigma0=spd(rng, d, rng.uniform(0.5, 3)),
                      a0=rng.uniform(0.5, 4), b0=rng.uniform(0.5, 4),
                      g0=rng.uniform(0.5, 4), h0=rng.uniform(0.5, 4))
    state = BssrState(beta=rng.normal(size=d), b=rng.normal(size=(n, d)) * 0.5,
                      sigma2=rng.uniform(0.3, 3), xi2=rng.uniform(0.3, 3))
    return ds, hyper, state


def bmssr_instance(rng, shared=None, K=None):
    n, d = int(rng.integers(2, 7)), int(rng.integers(1, 4))
    K = K or int(rng.integers(1, 4))
    shared = bool(rng.integers(2)) if shared is None else shared
    ds = dataset(rng, n, d, shared)
    base = BssrHyper(mu0=rng.normal(size=d), Sigma0=spd(rng, d, rng.uniform(0.5, 3)),
                     a0=rng.uniform(0.5, 4), b0=rng.uniform(0.5, 4),
                     g0=rng.uniform(0.5, 4), h0=rng.uniform(0.5, 4))
    hyper = BmssrHyper(rng.uniform(0.5, 3, K), base)
    pi = rng.dirichlet(np.ones(K))
    state = BmssrState(pi=pi, beta=rng.normal(size=(K, d)), b=0.5 * rng.normal(size=(n, K, d)),
                       sigma2=rng.uniform(0.3, 3, K), xi2=rng.uniform(0.3, 3, K),
                       z=rng.integers(0, K, n))
    return ds, hyper, state


def close(got, want, rel=1e-10):
    """Relative agreement scaled by the magnitude of the reference."""
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    scale = max(1.0, float(np.max(np.abs(want)))) if want.size else 1.0
    np.testing.assert_allclose(got, want, rtol=rel, atol=rel * scale)


def cluster_means(centers):
    """Three clearly distinct smooth surfaces evaluated at node centers."""
    x1, x2 = centers[:, 0], centers[:, 1]
    return np.stack([
        np.sin(2 * np.pi * x1),
        np.cos(2 * np.pi * x2),
        4 * (x1 - 0.5) * (x2 - 0.5) + 0.5,
    ])


def clustered(seed, n=60, side=11, nodes=5, re_sd=0.05, noise_sd=0.1):
    """``n`` surfaces from three components on an ``side x side`` lattice of the unit square.

    Labels are balanced and shuffled; random effects live in coefficient space.
    """
    rng = np.random.default_rng(seed)
    grid = node_grid((0, 1, 0, 1), nodes, nodes)
    pts = lattice_points(side, (0, 1, 0, 1))
    S = design_matrix(pts, grid)
    means = cluster_means(grid.centers)
    labels = rng.permutation(np.arange(n) % 3)
    values = [S @ (means[k] + re_sd * rng.normal(size=grid.d)) + noise_sd * rng.normal(size=len(pts))
              for k in labels]
    return SurfaceDataset(values=values, points=[pts] * n, labels=labels).with_grid(grid)
