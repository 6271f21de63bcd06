import math

import numpy as np
import pytest

from surfmix import bmssr
from surfmix.bmssr import (
    BmssrHyper,
    BmssrState,
    MixtureChain,
    MixtureParams,
    best_permutation,
    bmssr_fit,
    bmssr_step,
    cluster_assign,
    complete_loglik,
    cond_b_ik,
    cond_beta_k,
    cond_pi,
    cond_sigma2_k,
    cond_xi2_k,
    map_estimate,
    marginal_mixture_loglik,
    relabel_chain,
    responsibilities,
)
from surfmix.bssr import BssrHyper, BssrState, cond_beta
from surfmix.datasets import SurfaceDataset
from surfmix.errors import NumericalError
from surfmix.metrics import ari
from surfmix.randdist import RngStream, sample_mvn

import oracles
from instances import bmssr_instance, close, clustered


def arrays(ds):
    return [ds.values[i] for i in range(ds.n)], [ds.design(i) for i in range(ds.n)]


def direct_tau(ds, p):
    """Non-log responsibilities for low-dimensional instances."""
    n, K = ds.n, p.K
    dens = np.empty((n, K))
    for i in range(n):
        S, y = ds.design(i), ds.values[i]
        for k in range(K):
            r = y - S @ (p.beta[k] + p.b[i, k])
            dens[i, k] = p.pi[k] * (2 * math.pi * p.sigma2[k]) ** (-len(y) / 2) * math.exp(
                -(r @ r) / (2 * p.sigma2[k]))
    return dens / dens.sum(axis=1, keepdims=True)


class TestResponsibilities:
    def test_single_component(self):
        ds, _, st = bmssr_instance(np.random.default_rng(0), K=1)
        np.testing.assert_array_equal(responsibilities(ds, st), 1.0)

    def test_identical_components(self):
        ds, _, st = bmssr_instance(np.random.default_rng(1), K=2)
        st.beta[1] = st.beta[0]
        st.b[:, 1] = st.b[:, 0]
        st.sigma2[1] = st.sigma2[0]
        st.pi = np.array([0.3, 0.7])
        np.testing.assert_allclose(responsibilities(ds, st), np.tile([0.3, 0.7], (ds.n, 1)), atol=1e-15)

    def test_direct_evaluation(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            ds, _, st = bmssr_instance(rng, K=2)
            ds = SurfaceDataset(values=ds.values[:2], designs=[ds.design(0), ds.design(1)])
            st.b = st.b[:2]
            st.z = st.z[:2]
            np.testing.assert_allclose(responsibilities(ds, st), direct_tau(ds, st), rtol=1e-12, atol=1e-14)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            ds, _, st = bmssr_instance(rng)
            st.sigma2 = st.sigma2 * 1e-3
            tau = responsibilities(ds, st)
            assert np.all(tau >= 0)
            np.testing.assert_allclose(tau.sum(axis=1), 1.0, atol=1e-10)

    def test_all_components_impossible(self):
        ds, _, st = bmssr_instance(np.random.default_rng(4), K=2)
        st.pi = np.array([0.0, 0.0])
        with pytest.raises(NumericalError, match="surface 0"):
            responsibilities(ds, st)


class TestCondPi:
    def test_examples(self):
        np.testing.assert_array_equal(cond_pi([0] * 3 + [1] * 7, [1, 1]), [4, 8])
        np.testing.assert_array_equal(cond_pi([0, 0], [1, 2.5]), [3, 2.5])
        np.testing.assert_array_equal(cond_pi([1] * 5 + [2] * 5, [2, 2, 2]), [2, 7, 7])

    def test_oracle_100_instances(self):
        rng = np.random.default_rng(104)
        for _ in range(100):
            K = int(rng.integers(1, 6))
            z = rng.integers(0, K, int(rng.integers(1, 30)))
            alphas = rng.uniform(0.1, 3, K)
            close(cond_pi(z, alphas), oracles.cond_pi(z, alphas))


class TestCondBetaK:
    def test_empty_component_is_prior(self):
        ds, hyper, st = bmssr_instance(np.random.default_rng(5), K=2)
        st.z[:] = 0
        p = cond_beta_k(ds, st, hyper, 1)
        close(p.mean, hyper.base.mu0)
        close(p.cov, hyper.base.Sigma0)

    def test_all_members_reduces_to_single_population(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            ds, hyper, st = bmssr_instance(rng, K=2)
            st.z[:] = 1
            p = cond_beta_k(ds, st, hyper, 1)
            q = cond_beta(ds, BssrState(st.beta[1], st.b[:, 1], st.sigma2[1], st.xi2[1]), hyper.base)
            close(p.mean, q.mean)
            close(p.cov, q.cov)

    def test_oracle_100_instances(self):
        rng = np.random.default_rng(105)
        for _ in range(100):
            ds, hyper, st = bmssr_instance(rng)
            ys, Ss = arrays(ds)
            k = int(rng.integers(st.K))
            w = (st.z == k).astype(float)
            mean, V = oracles.cond_beta(ys, Ss, st.b[:, k], st.sigma2[k], hyper.base.mu0,
                                        hyper.base.Sigma0, weights=w)
            p = cond_beta_k(ds, st, hyper, k)
            close(p.mean, mean)
            close(p.cov, V)


class TestCondBik:
    def test_unallocated_is_prior(self):
        ds, _, st = bmssr_instance(np.random.default_rng(7), K=2)
        st.z[0] = 1
        p = cond_b_ik(ds.values[0], ds.design(0), st, 0, 0)
        close(p.mean, 0.0)
        close(p.cov, st.xi2[0] * np.eye(ds.d))

    def test_two_identity_shrinkage(self):
        st = BmssrState(pi=np.ones(1), beta=np.zeros((1, 2)), b=np.zeros((1, 1, 2)), sigma2=np.ones(1),
                        xi2=np.ones(1), z=np.zeros(1, int))
        y = np.array([1.0, -3.0])
        p = cond_b_ik(y, np.eye(2), st, 0, 0)
        close(p.cov, 0.5 * np.eye(2))
        close(p.mean, 0.5 * y)

    def test_literal_always_informed(self):
        rng = np.random.default_rng(8)
        ds, _, st = bmssr_instance(rng, K=2)
        st.z[0] = 1
        mean, V = oracles.cond_b(ds.values[0], ds.design(0), st.beta[0], st.sigma2[0], st.xi2[0])
        p = cond_b_ik(ds.values[0], ds.design(0), st, 0, 0, literal=True)
        close(p.mean, mean)
        close(p.cov, V)

    def test_oracle_100_instances(self):
        rng = np.random.default_rng(106)
        for _ in range(100):
            ds, _, st = bmssr_instance(rng)
            i, k = int(rng.integers(ds.n)), int(rng.integers(st.K))
            if st.z[i] == k:
                mean, V = oracles.cond_b(ds.values[i], ds.design(i), st.beta[k], st.sigma2[k], st.xi2[k])
            else:
                mean, V = np.zeros(ds.d), st.xi2[k] * np.eye(ds.d)
            p = cond_b_ik(ds.values[i], ds.design(i), st, i, k)
            close(p.mean, mean)
            close(p.cov, V)

    @pytest.mark.parametrize("literal", [False, True])
    def test_shared_batch_matches_per_surface(self, literal):
        ds, _, st = bmssr_instance(np.random.default_rng(9), shared=True, K=3)
        per = SurfaceDataset(values=ds.values, designs=[ds.design(0)] * ds.n)
        for k in range(3):
            a = bmssr._sample_b_k(ds, st, k, RngStream(1), literal)
            b = bmssr._sample_b_k(per, st, k, RngStream(1), literal)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


class TestCondSigma2K:
    def test_empty_component_is_prior(self):
        ds, hyper, st = bmssr_instance(np.random.default_rng(10), K=2)
        st.z[:] = 0
        assert cond_sigma2_k(ds, st, hyper, 1) == (hyper.base.g0, hyper.base.h0)

    def test_zero_residuals(self):
        S = np.eye(2)
        st = BmssrState(pi=np.ones(1), beta=np.array([[1.0, 2.0]]), b=np.zeros((2, 1, 2)),
                        sigma2=np.ones(1), xi2=np.ones(1), z=np.zeros(2, int))
        ds = SurfaceDataset(values=[S @ st.beta[0]] * 2, designs=S)
        hyper = BmssrHyper.default(1, 2, h0=0.25)
        assert cond_sigma2_k(ds, st, hyper, 0)[1] == 0.25

    def test_shape_counts_member_observations(self):
        rng = np.random.default_rng(11)
        ds = SurfaceDataset(values=[rng.normal(size=4) for _ in range(3)], designs=rng.uniform(size=(4, 2)))
        st = BmssrState(pi=np.ones(2) / 2, beta=np.zeros((2, 2)), b=np.zeros((3, 2, 2)), sigma2=np.ones(2),
                        xi2=np.ones(2), z=np.array([0, 1, 0]))
        hyper = BmssrHyper.default(2, 2, g0=2.0)
        assert cond_sigma2_k(ds, st, hyper, 0)[0] == 6.0
        assert cond_sigma2_k(ds, st, hyper, 0, literal=True)[0] == 3.0

    def test_oracle_100_instances(self):
        rng = np.random.default_rng(107)
        for _ in range(100):
            ds, hyper, st = bmssr_instance(rng)
            ys, Ss = arrays(ds)
            k = int(rng.integers(st.K))
            w = (st.z == k).astype(float)
            thetas = [st.beta[k] + st.b[i, k] for i in range(ds.n)]
            want = oracles.cond_sigma2(ys, Ss, thetas, hyper.base.g0, hyper.base.h0, weights=w)
            close(cond_sigma2_k(ds, st, hyper, k), want)


class TestCondXi2K:
    def test_zero_effects(self):
        _, hyper, st = bmssr_instance(np.random.default_rng(12), K=2)
        st.b[:, 1] = 0.0
        assert cond_xi2_k(st, hyper, 1)[1] == hyper.base.b0

    def test_shape(self):
        st = BmssrState(pi=np.ones(1), beta=np.zeros((1, 3)), b=np.zeros((2, 1, 3)), sigma2=np.ones(1),
                        xi2=np.ones(1), z=np.zeros(2, int))
        assert cond_xi2_k(st, BmssrHyper.default(1, 3, a0=1.0), 0)[0] == 4.0
        assert cond_xi2_k(st, BmssrHyper.default(1, 3, a0=1.0), 0, literal=True)[0] == 2.0

    def test_scale(self):
        st = BmssrState(pi=np.ones(1), beta=np.zeros((1, 2)), b=np.array([[[1.0, 1.0]], [[2.0, 0.0]]]),
                        sigma2=np.ones(1), xi2=np.ones(1), z=np.zeros(2, int))
        assert cond_xi2_k(st, BmssrHyper.default(1, 2, b0=1.0), 0)[1] == 4.0

    def test_oracle_100_instances(self):
        rng = np.random.default_rng(108)
        for _ in range(100):
            _, hyper, st = bmssr_instance(rng)
            k = int(rng.integers(st.K))
            close(cond_xi2_k(st, hyper, k), oracles.cond_xi2(st.b[:, k], hyper.base.a0, hyper.base.b0))


class TestStep:
    def test_update_order(self, monkeypatch):
        calls = []
        wrap = {}
        for name in ("sample_categorical_rows", "sample_dirichlet", "sample_inverse_gamma", "sample_mvn",
                     "_sample_b_k"):
            real = getattr(bmssr, name)

            def rec(*args, _real=real, _name=name, **kw):
                calls.append(_name)
                return _real(*args, **kw)

            wrap[name] = rec
        for name, fn in wrap.items():
            monkeypatch.setattr(bmssr, name, fn)
        ds, hyper, st = bmssr_instance(np.random.default_rng(13), shared=True, K=2)
        bmssr_step(st, ds, hyper, RngStream(0))
        per_k = ["sample_inverse_gamma", "sample_inverse_gamma", "sample_mvn", "_sample_b_k"]
        assert calls == ["sample_categorical_rows", "sample_dirichlet"] + per_k * 2

    def test_deterministic_replay(self):
        ds, hyper, st = bmssr_instance(np.random.default_rng(14), K=3)
        a = bmssr_step(st, ds, hyper, RngStream(2))
        b = bmssr_step(st, ds, hyper, RngStream(2))
        for f in ("pi", "beta", "b", "sigma2", "xi2", "z"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))

    def test_invariants_over_a_chain(self):
        ds, hyper, st = bmssr_instance(np.random.default_rng(15), K=3)
        rng = RngStream(3)
        for _ in range(200):
            st = bmssr_step(st, ds, hyper, rng)
            assert np.all(st.sigma2 > 0) and np.all(st.xi2 > 0)
            assert np.all(st.pi >= 0) and st.pi.sum() == pytest.approx(1.0, abs=1e-12)
            assert st.z.min() >= 0 and st.z.max() < 3

    def test_separated_clusters_stabilise(self):
        hits = 0
        for seed in range(5):
            ds = clustered(seed)
            hyper = BmssrHyper.default(3, ds.d)
            rng = RngStream(seed)
            st = bmssr.initial_state(ds, hyper, rng)
            for _ in range(50):
                st = bmssr_step(st, ds, hyper, rng)
            hits += ari(st.z, ds.labels) == 1.0
        assert hits >= 4


def chain_from(states, burnin=0):
    return MixtureChain(
        pi=np.array([s.pi for s in states]), beta=np.array([s.beta for s in states]),
        sigma2=np.array([s.sigma2 for s in states]), xi2=np.array([s.xi2 for s in states]),
        z=np.array([s.z for s in states]), loglik=np.zeros(len(states)), burnin=burnin,
        b=np.array([s.b for s in states]),
    )


class TestRelabel:
    def states(self, T=20, K=3, seed=0):
        rng = np.random.default_rng(seed)
        base = bmssr_instance(rng, K=K)[2]
        base.beta = 5.0 * np.arange(K)[:, None] + np.zeros_like(base.beta)
        out = []
        for _ in range(T):
            s = base.copy()
            s.beta = s.beta + 0.1 * rng.normal(size=s.beta.shape)
            s.z = rng.integers(0, K, len(s.z))
            out.append(s)
        return out

    def test_no_switching_is_identity(self):
        ch = relabel_chain(chain_from(self.states()))
        np.testing.assert_array_equal(ch.perms, np.tile(np.arange(3), (20, 1)))

    def test_single_swap_undone(self):
        states = self.states()
        swapped = list(states)
        swapped[7] = states[7].permuted([1, 0, 2])
        ch = relabel_chain(chain_from(swapped))
        ref = chain_from(states)
        np.testing.assert_array_equal(ch.beta, ref.beta)
        np.testing.assert_array_equal(ch.z, ref.z)
        np.testing.assert_array_equal(ch.b, ref.b)

    def test_random_permutations_recovered(self):
        rng = np.random.default_rng(1)
        states = self.states(T=30, K=4, seed=2)
        scrambled = [s if t == 0 else s.permuted(rng.permutation(4)) for t, s in enumerate(states)]
        ch = relabel_chain(chain_from(scrambled))
        ref = chain_from(states)
        for f in ("pi", "beta", "sigma2", "xi2", "z", "b"):
            np.testing.assert_array_equal(getattr(ch, f), getattr(ref, f))

    def test_best_permutation(self):
        ref = np.array([[0.0], [10.0], [20.0]])
        np.testing.assert_array_equal(best_permutation(ref, ref[[2, 0, 1]]), [1, 2, 0])

    def test_permuted_state_preserves_partition(self):
        st = bmssr_instance(np.random.default_rng(3), K=3)[2]
        p = st.permuted([2, 0, 1])
        assert ari(p.z, st.z) == 1.0
        for i in range(len(st.z)):
            np.testing.assert_array_equal(p.beta[p.z[i]], st.beta[st.z[i]])


class TestMapEstimate:
    def test_constant_chain(self):
        st = bmssr_instance(np.random.default_rng(4), K=2)[2]
        psi = map_estimate(chain_from([st] * 5, burnin=2))
        for f in ("pi", "beta", "b", "sigma2", "xi2"):
            np.testing.assert_allclose(getattr(psi, f), getattr(st, f), rtol=1e-15)

    def test_two_sample_mean(self):
        st = bmssr_instance(np.random.default_rng(5), K=2)[2]
        a, b = st.copy(), st.copy()
        v = np.arange(1.0, 1.0 + a.beta.size).reshape(a.beta.shape)
        a.beta, b.beta = v, 3 * v
        np.testing.assert_allclose(map_estimate(chain_from([a, b])).beta, 2 * v)

    def test_pi_on_simplex(self):
        rng = np.random.default_rng(6)
        states = []
        for _ in range(10):
            s = bmssr_instance(np.random.default_rng(7), K=4)[2]
            s.pi = rng.dirichlet(np.ones(4))
            states.append(s)
        pi = map_estimate(chain_from(states)).pi
        assert np.all(pi >= 0) and pi.sum() == pytest.approx(1.0, abs=1e-15)

    def test_bad_burnin(self):
        st = bmssr_instance(np.random.default_rng(8), K=2)[2]
        with pytest.raises(ValueError):
            map_estimate(chain_from([st] * 3), burnin=3)


class TestClusterAssign:
    def test_single_component(self):
        ds, _, st = bmssr_instance(np.random.default_rng(9), K=1)
        np.testing.assert_array_equal(cluster_assign(ds, st), 0)

    def test_argmax_and_ties(self):
        ds, _, st = bmssr_instance(np.random.default_rng(10), K=3)
        for k in (1, 2):
            st.beta[k], st.b[:, k], st.sigma2[k] = st.beta[0], st.b[:, 0], st.sigma2[0]
        st.pi = np.array([0.1, 0.8, 0.1])
        np.testing.assert_array_equal(cluster_assign(ds, st), 1)
        st.pi = np.array([0.4, 0.4, 0.2])
        np.testing.assert_array_equal(cluster_assign(ds, st), 0)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            ds, _, st = bmssr_instance(rng, K=3)
            perm = rng.permutation(3)
            z = cluster_assign(ds, st)
            zp = cluster_assign(ds, st.permuted(perm))
            np.testing.assert_array_equal(perm[zp], z)


class TestPermutationInvariance:
    def test_complete_loglik_and_responsibilities(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            ds, _, st = bmssr_instance(rng)
            perm = rng.permutation(st.K)
            p = st.permuted(perm)
            assert abs(complete_loglik(ds, p) - complete_loglik(ds, st)) <= 1e-12 * max(
                1.0, abs(complete_loglik(ds, st)))
            np.testing.assert_allclose(responsibilities(ds, p), responsibilities(ds, st)[:, perm],
                                       rtol=1e-12, atol=1e-15)


class TestMarginalLoglik:
    def test_vanishing_random_effect(self):
        ds, _, st = bmssr_instance(np.random.default_rng(13), K=1)
        want = 0.0
        for i in range(ds.n):
            r = ds.values[i] - ds.design(i) @ st.beta[0]
            want += sum(oracles.log_normal(v, 0.0, st.sigma2[0]) for v in r)
        got = marginal_mixture_loglik(ds, [1.0], st.beta, st.sigma2, [1e-12])
        assert got == pytest.approx(want, abs=1e-6)

    def test_closed_form_two_by_two(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            K = int(rng.integers(1, 4))
            s = rng.uniform(0.1, 1, (2, 1))
            ys = [rng.normal(size=2) for _ in range(int(rng.integers(1, 5)))]
            pi = rng.dirichlet(np.ones(K))
            betas = rng.normal(size=(K, 1))
            s2, x2 = rng.uniform(0.2, 2, K), rng.uniform(0.2, 2, K)
            got = marginal_mixture_loglik(SurfaceDataset(values=ys, designs=s), pi, betas, s2, x2)
            want = oracles.mixture_loglik_2x2(ys, s, pi, betas[:, 0], s2, x2)
            assert got == pytest.approx(want, rel=1e-10)

    def test_log_sum_exp_matches_direct(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            s = rng.uniform(0.1, 1, (2, 1))
            ys = [rng.normal(size=2) for _ in range(3)]
            pi, betas = np.array([0.4, 0.6]), rng.normal(size=(2, 1))
            s2, x2 = rng.uniform(0.2, 2, 2), rng.uniform(0.2, 2, 2)
            direct = oracles.mixture_loglik_2x2(ys, s, pi, betas[:, 0], s2, x2, direct=True)
            got = marginal_mixture_loglik(SurfaceDataset(values=ys, designs=s), pi, betas, s2, x2)
            assert got == pytest.approx(direct, rel=1e-10)

    def test_stable_where_direct_underflows(self):
        s = np.array([[1.0], [1.0]])
        ys = [np.array([60.0, 60.0])]
        got = marginal_mixture_loglik(SurfaceDataset(values=ys, designs=s), [0.5, 0.5], [[0.0], [1.0]],
                                      [1e-2, 1e-2], [1e-2, 1e-2])
        assert math.isfinite(got)
        with pytest.raises(ValueError):
            oracles.mixture_loglik_2x2(ys, s, [0.5, 0.5], [0.0, 1.0], [1e-2] * 2, [1e-2] * 2, direct=True)

    def test_duplication_doubles(self):
        ds, _, st = bmssr_instance(np.random.default_rng(16), K=2)
        twice = SurfaceDataset(values=ds.values * 2, designs=[ds.design(i) for i in range(ds.n)] * 2)
        a = marginal_mixture_loglik(ds, st.pi, st.beta, st.sigma2, st.xi2)
        b = marginal_mixture_loglik(twice, st.pi, st.beta, st.sigma2, st.xi2)
        assert b == pytest.approx(2 * a, rel=1e-12)

    def test_shared_path_matches_per_surface(self):
        ds, _, st = bmssr_instance(np.random.default_rng(17), shared=True, K=3)
        per = SurfaceDataset(values=ds.values, designs=[ds.design(0)] * ds.n)
        a = marginal_mixture_loglik(ds, st.pi, st.beta, st.sigma2, st.xi2)
        b = marginal_mixture_loglik(per, st.pi, st.beta, st.sigma2, st.xi2)
        assert a == pytest.approx(b, rel=1e-12)


class TestFit:
    def test_outputs_consistent(self):
        ds = clustered(0, n=30)
        fit = bmssr_fit(ds, 3, iterations=60, burnin=30, seed=0, keep_b=True)
        tau = fit.tau
        np.testing.assert_allclose(tau.sum(axis=1), 1.0, atol=1e-10)
        assert fit.z_hat.min() >= 0 and fit.z_hat.max() < 3
        np.testing.assert_allclose(fit.psi_hat.beta, fit.chain.beta[30:].mean(axis=0), rtol=1e-14)
        np.testing.assert_allclose(fit.psi_hat.b, fit.chain.b[30:].mean(axis=0), rtol=1e-10, atol=1e-14)
        np.testing.assert_array_equal(fit.z_hat, cluster_assign(ds, fit.psi_hat))
        assert len(fit.chain) == 60 and fit.chain.loglik.shape == (60,)

    def test_relabel_keeps_draws_aligned(self):
        ds = clustered(1, n=30)
        fit = bmssr_fit(ds, 3, iterations=60, burnin=30, seed=1, keep_b=True)
        ref = fit.chain.beta[30]
        for t in range(30, 60):
            np.testing.assert_array_equal(best_permutation(ref, fit.chain.beta[t]), np.arange(3))

    def test_no_relabel_option(self):
        ds = clustered(2, n=30)
        fit = bmssr_fit(ds, 3, iterations=40, burnin=20, seed=2, relabel=False)
        assert not fit.relabel
        np.testing.assert_array_equal(fit.chain.perms, np.tile(np.arange(3), (40, 1)))

    def test_empty_components_tolerated(self):
        ds = clustered(3, n=30)
        fit = bmssr_fit(ds, 6, iterations=40, burnin=20, seed=3)
        assert np.all(fit.chain.sigma2 > 0) and np.all(fit.chain.xi2 > 0)

    def test_seeded_reproducibility(self):
        ds = clustered(4, n=30)
        a = bmssr_fit(ds, 3, iterations=30, burnin=10, seed=5)
        b = bmssr_fit(ds, 3, iterations=30, burnin=10, seed=5)
        np.testing.assert_array_equal(a.chain.beta, b.chain.beta)
        np.testing.assert_array_equal(a.z_hat, b.z_hat)

    def test_callback_sees_every_iteration(self):
        seen = []
        bmssr_fit(clustered(5, n=30), 2, iterations=12, burnin=6, callback=lambda t, s: seen.append(t))
        assert seen == list(range(12))

    @pytest.mark.parametrize("kw", [dict(iterations=5, burnin=5), dict(K=0), dict(iterations=5.5)])
    def test_invalid_arguments(self, kw):
        args = dict(K=2, iterations=10, burnin=2)
        args.update(kw)
        with pytest.raises(ValueError):
            bmssr_fit(clustered(6, n=30), **args)

    def test_literal_mode_recorded(self):
        fit = bmssr_fit(clustered(7, n=30), 3, iterations=10, burnin=5, literal=True)
        assert fit.mode == "paper-literal"

    def test_mixture_params_permutation_round_trip(self):
        st = bmssr_instance(np.random.default_rng(18), K=4)[2]
        perm = np.array([3, 1, 0, 2])
        back = st.permuted(perm).permuted(np.argsort(perm))
        for f in ("pi", "beta", "b", "sigma2", "xi2", "z"):
            np.testing.assert_array_equal(getattr(back, f), getattr(st, f))
        assert isinstance(MixtureParams.permuted(st, perm), MixtureParams)
