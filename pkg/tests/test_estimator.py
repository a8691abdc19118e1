import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlgp.estimator import (EstimatorConfig, fit, grad_loss, initialize, loss, parse_qspec,
                            quantile_threshold, resolve_q, surrogate, update_chi, update_gamma,
                            update_mu)
from rlgp.exceptions import ConfigError
from rlgp.kernel import KernelParams, build_covariance_state, covariance_from_matrix, pairwise_sq_dist
from rlgp.neighborhood import Neighborhood

from conftest import random_spd


def identity_cov(n):
    """Kernel-built state whose Sigma (hence S) is the identity to machine precision."""
    return build_covariance_state(KernelParams(1.0, 1e-300, 1.0), np.zeros((n, n)))


def naive_loss(mu, gamma, Sigma, y, c0):
    w, V = np.linalg.eigh(Sigma)
    S = V @ np.diag(np.sqrt(w)) @ V.T
    r = y - mu - gamma
    return 0.5 * r @ np.linalg.inv(S) @ r + 0.5 * c0 * np.trace(S)


def random_instance(rng, n_max=20, d_max=5):
    n = int(rng.integers(2, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    X = rng.uniform(0, 1, (n, d))
    y = rng.normal(0, 2, n)
    params = KernelParams(rng.uniform(0.1, 2), rng.uniform(0.5, 3), rng.uniform(0.2, 3))
    gamma = np.where(rng.random(n) < 0.3, rng.normal(0, 3, n), 0.0)
    return X, y, params, float(rng.normal()), gamma


class TestLoss:
    def test_identity(self):
        assert loss(0.0, np.zeros(2), identity_cov(2), [1.0, -1.0], 1.0) == pytest.approx(2.0, abs=1e-14)

    def test_full_shift_leaves_trace(self, rng):
        cov = covariance_from_matrix(random_spd(rng, 6))
        y = rng.normal(size=6)
        val = loss(0.7, y - 0.7, cov, y, c0=0.8)
        assert val == pytest.approx(0.4 * cov.trace_S(), rel=1e-14)

    def test_matches_naive(self, rng):
        for _ in range(20):
            X, y, p, mu, gamma = random_instance(rng)
            cov = build_covariance_state(p, pairwise_sq_dist(X))
            c0 = rng.uniform(0.5, 1)
            assert loss(mu, gamma, cov, y, c0) == pytest.approx(naive_loss(mu, gamma, cov.Sigma, y, c0), rel=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            loss(0.0, np.zeros(3), identity_cov(2), np.zeros(3))


class TestGradients:
    def test_mu_stationary_at_closed_form(self, rng):
        for _ in range(10):
            X, y, p, _, gamma = random_instance(rng)
            cov = build_covariance_state(p, pairwise_sq_dist(X))
            mu = update_mu(cov, y, gamma)
            assert abs(grad_loss(mu, gamma, cov, y).mu) < 1e-10 * (1 + np.abs(y).sum())

    def test_gamma_hand_value(self):
        g = grad_loss(1.0, np.zeros(2), identity_cov(2), np.array([2.0, 4.0]))
        np.testing.assert_allclose(g.gamma, [-1.0, -3.0], atol=1e-14)

    def test_single_point_nu_derivative(self):
        # l = r^2 / (2 s) + c0 s / 2 with s = sqrt(nu + theta0)
        nu, theta0, r, c0 = 0.7, 1.3, 2.5, 0.9
        cov = build_covariance_state(KernelParams(nu, theta0, 1.0), np.zeros((1, 1)))
        s = math.sqrt(nu + theta0)
        expected = -0.25 * r * r / s ** 3 + 0.25 * c0 / s
        g = grad_loss(0.0, np.zeros(1), cov, np.array([r]), c0)
        assert g.nu == pytest.approx(expected, rel=1e-13)
        assert g.theta0 == pytest.approx(expected, rel=1e-13)
        assert g.vartheta == 0.0

    def test_finite_differences(self, rng):
        h = 1e-5
        for _ in range(10):
            X, y, p, mu, gamma = random_instance(rng)
            D = pairwise_sq_dist(X)

            def f(nu=p.nu, theta0=p.theta0, vartheta=p.vartheta, m=mu, gam=gamma):
                return loss(m, gam, build_covariance_state(KernelParams(nu, theta0, vartheta), D), y)

            g = grad_loss(mu, gamma, build_covariance_state(p, D), y)
            fd = {
                "nu": (f(nu=p.nu + h) - f(nu=p.nu - h)) / (2 * h),
                "theta0": (f(theta0=p.theta0 + h) - f(theta0=p.theta0 - h)) / (2 * h),
                "vartheta": (f(vartheta=p.vartheta + h) - f(vartheta=p.vartheta - h)) / (2 * h),
                "mu": (f(m=mu + h) - f(m=mu - h)) / (2 * h),
            }
            for k, v in fd.items():
                assert getattr(g, k) == pytest.approx(v, rel=1e-5, abs=1e-8)
            i = int(rng.integers(len(y)))
            e = np.zeros(len(y))
            e[i] = h
            fd_gamma = (f(gam=gamma + e) - f(gam=gamma - e)) / (2 * h)
            assert g.gamma[i] == pytest.approx(fd_gamma, rel=1e-5, abs=1e-8)

    def test_needs_kernel_state(self):
        with pytest.raises(ValueError):
            grad_loss(0.0, np.zeros(2), covariance_from_matrix(np.eye(2)), np.zeros(2))


class TestUpdateMu:
    def test_unweighted_mean(self):
        assert update_mu(identity_cov(4), np.array([1.0, 2.0, 3.0, 10.0]), np.zeros(4)) == pytest.approx(4.0)

    def test_adjusted(self):
        assert update_mu(identity_cov(3), np.array([1.0, 2.0, 3.0]), np.array([0, 0, 3.0])) == pytest.approx(1.0)

    def test_weighted(self):
        # S^{-1} = diag(2, 1)  <=>  S = diag(1/2, 1)  <=>  Sigma = diag(1/4, 1)
        cov = covariance_from_matrix(np.diag([0.25, 1.0]))
        assert update_mu(cov, np.array([0.0, 3.0]), np.zeros(2)) == pytest.approx(1.0, rel=1e-14)

    def test_minimizes_loss(self, rng):
        X, y, p, _, gamma = random_instance(rng)
        cov = build_covariance_state(p, pairwise_sq_dist(X))
        mu = update_mu(cov, y, gamma)
        for dm in (-1e-3, 1e-3):
            assert loss(mu, gamma, cov, y) < loss(mu + dm, gamma, cov, y)


def brute_force_projection(s, q):
    """Lexicographically first support of size q minimizing the discarded energy."""
    best, best_t = None, None
    for supp in itertools.combinations(range(len(s)), q):
        off = np.delete(s, list(supp))
        resid = float(np.sum(np.sort(off ** 2)))
        if best is None or resid < best:
            best = resid
            best_t = np.zeros_like(s)
            best_t[list(supp)] = s[list(supp)]
    return best_t


class TestQuantileThreshold:
    def test_single_dominant(self):
        np.testing.assert_array_equal(quantile_threshold([3.0, -5.0, 1.0], 1), [0, -5, 0])

    def test_boundaries(self):
        s = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(quantile_threshold(s, 0), np.zeros(3))
        np.testing.assert_array_equal(quantile_threshold(s, 3), s)

    def test_tie_keeps_earliest(self):
        np.testing.assert_array_equal(quantile_threshold([2.0, -2.0, 1.0], 1), [2, 0, 0])

    def test_rejects_bad_q(self):
        with pytest.raises(ValueError):
            quantile_threshold([1.0], 2)

    def test_brute_force_small(self, rng):
        for _ in range(200):
            p = int(rng.integers(1, 8))
            s = rng.integers(-3, 4, p).astype(float) if rng.random() < 0.5 else rng.normal(size=p)
            q = int(rng.integers(0, p + 1))
            np.testing.assert_array_equal(quantile_threshold(s, q), brute_force_projection(s, q))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(-50, 50), min_size=1, max_size=12), st.data(),
           st.sampled_from([0.25, 0.5, 2.0, 8.0]))
    def test_scale_equivariant(self, vals, data, c):
        s = np.array(vals, dtype=float)
        q = data.draw(st.integers(0, len(vals)))
        np.testing.assert_array_equal(quantile_threshold(c * s, q), c * quantile_threshold(s, q))


class TestUpdateGamma:
    def test_q0(self):
        out = update_gamma(np.ones(3), identity_cov(3), 0.0, np.array([1.0, 2.0, 3.0]), 0)
        np.testing.assert_array_equal(out.gamma, 0.0)
        assert out.support.size == 0

    def test_full_support_zeroes_residual(self):
        out = update_gamma(np.zeros(2), identity_cov(2), 0.0, np.array([3.0, 7.0]), 2)
        np.testing.assert_allclose(out.gamma, [3.0, 7.0], atol=1e-9)

    def test_hand_traced_fixed_point(self):
        out = update_gamma(np.zeros(2), identity_cov(2), 0.0, np.array([3.0, 7.0]), 1, rho=1.0)
        np.testing.assert_array_equal(out.gamma, [0.0, 7.0])
        assert out.converged and out.n_iter == 2

    def test_monotone_and_sparse_each_step(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 25))
            cov = covariance_from_matrix(random_spd(rng, n, cond=100))
            y = rng.normal(size=n)
            y[rng.choice(n, 2, replace=False)] += 10
            q = int(rng.integers(1, n // 2 + 1))
            gamma = np.zeros(n)
            prev = loss(0.0, gamma, cov, y, 0.0)
            for _ in range(30):
                gamma = update_gamma(gamma, cov, 0.0, y, q, max_iter=1).gamma
                cur = loss(0.0, gamma, cov, y, 0.0)
                assert np.count_nonzero(gamma) <= q
                assert cur <= prev + 1e-12 * (1 + abs(prev))
                prev = cur

    def test_cap_reported(self, rng):
        cov = covariance_from_matrix(random_spd(rng, 10, cond=1e6))
        out = update_gamma(np.zeros(10), cov, 0.0, rng.normal(size=10), 3, max_iter=2)
        assert not out.converged and out.n_iter == 2


class TestSurrogate:
    def test_touches_and_majorizes(self, rng):
        n = 6
        cov = covariance_from_matrix(random_spd(rng, n, cond=50))
        y = rng.normal(size=n)
        rho = 1.0 / cov.lambda_min_S
        g0 = rng.normal(size=n)
        assert surrogate(g0, g0, cov, 0.3, y, rho) == loss(0.3, g0, cov, y, 0.0)
        for _ in range(50):
            g = rng.normal(size=n) * 3
            assert surrogate(g, g0, cov, 0.3, y, rho) >= loss(0.3, g, cov, y, 0.0) - 1e-12


class TestResolveQ:
    cfg = EstimatorConfig()

    def test_constant(self):
        assert resolve_q([5.0] * 4, self.cfg) == 0

    def test_one_outlier(self):
        assert resolve_q([1.0, 2.0, 3.0, 4.0, 100.0], self.cfg) == 1

    def test_degenerate_mad(self):
        assert resolve_q([0.0, 0.0, 0.0, 10.0, -10.0], self.cfg) == 2

    def test_degenerate_mad_clamped(self):
        assert resolve_q([0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 0.0], self.cfg) == 3

    def test_fixed_and_fraction(self):
        y = np.arange(20.0)
        assert resolve_q(y, EstimatorConfig.from_qspec(3)) == 3
        assert resolve_q(y, EstimatorConfig.from_qspec("0.15n")) == 3
        assert resolve_q(y, EstimatorConfig.from_qspec(".25n")) == 5
        assert resolve_q(np.arange(10.0), EstimatorConfig.from_qspec("0.25n")) == 3  # 2.5 rounds up
        assert resolve_q(y, EstimatorConfig.from_qspec(50)) == 10

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=1, max_size=15),
           st.sampled_from([0.25, 0.5, 2.0, 4.0]), st.integers(-100, 100))
    def test_affine_invariant(self, vals, c, b):
        y = np.array(vals, dtype=float)
        assert resolve_q(c * y + b, self.cfg) == resolve_q(y, self.cfg)


class TestQspec:
    @pytest.mark.parametrize("spec,expected", [("adaptive", ("adaptive", None)), ("7", ("fixed", 7)),
                                               (".15n", ("fraction", 0.15)), ("0.2n", ("fraction", 0.2))])
    def test_valid(self, spec, expected):
        assert parse_qspec(spec) == expected

    @pytest.mark.parametrize("spec", ["", "-1", "1.5", "0.2", "15%", "1.2n", "adaptiv"])
    def test_invalid(self, spec):
        with pytest.raises(ConfigError):
            parse_qspec(spec)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            EstimatorConfig(tau=0)
        with pytest.raises(ConfigError):
            EstimatorConfig(c0_mode="half")
        with pytest.raises(ConfigError):
            EstimatorConfig(max_outer=0)


class TestInitialize:
    def test_values(self):
        init = initialize(np.array([1.0, 2.0, 3.0]))
        assert init.mu0 == 2.0
        assert init.nu0 == pytest.approx(1.483 ** 2)
        np.testing.assert_array_equal(init.gamma0, 0.0)
        assert init.theta0_0 == init.vartheta0 == 1.0
        np.testing.assert_array_equal(init.S0, init.nu0 * np.eye(3))

    def test_constant_floor(self):
        assert initialize(np.full(4, 3.0)).nu0 == 1e-12


class TestUpdateChi:
    def test_stationary_point_unchanged(self, rng):
        X, y, p, mu, gamma = random_instance(rng, n_max=8)
        D = pairwise_sq_dist(X)
        p_star = p
        for _ in range(30):
            upd = update_chi(mu, gamma, p_star, D, y, qn_steps=10)
            p_star = upd.params
        again = update_chi(mu, gamma, p_star, D, y, qn_steps=10)
        if again.n_steps == 0:
            assert again.params == p_star
        else:
            assert again.loss <= upd.loss

    def test_single_point_goes_to_floor(self):
        D = np.zeros((1, 1))
        y = np.array([4.0])
        p = KernelParams(1.0, 1.0, 1.0)
        losses = []
        for _ in range(5):
            upd = update_chi(4.0, np.zeros(1), p, D, y, qn_steps=10)
            assert upd.loss <= 0.5 * math.sqrt(p.nu + p.theta0) + 1e-15
            p = upd.params
            losses.append(upd.loss)
        assert p.nu == pytest.approx(1e-12, rel=1e-6)
        assert losses[-1] < 1e-5

    def test_monotone_trace(self, rng):
        for _ in range(20):
            X, y, p, mu, gamma = random_instance(rng)
            upd = update_chi(mu, gamma, p, pairwise_sq_dist(X), y, qn_steps=10)
            assert np.all(np.diff(upd.losses) <= 0)
            assert upd.params.nu > 0 and upd.params.theta0 > 0


class TestFit:
    def test_homogeneous(self, rng):
        X = rng.uniform(-0.5, 0.5, (40, 2))
        y = 5 + rng.normal(0, 0.01, 40)
        m = fit(Neighborhood.from_arrays(X, y, [0.0, 0.0]))
        assert m.q_used <= 1
        assert m.mu == pytest.approx(np.median(y), abs=0.01)

    def test_planted_outlier(self, rng):
        X = rng.uniform(-0.5, 0.5, (5, 2))
        y = np.array([0.1, -0.2, 0.0, 0.15, 50.0])
        m = fit(Neighborhood.from_arrays(X, y, [0.0, 0.0], indices=[10, 11, 12, 13, 14]))
        assert m.q_used == 1
        assert list(m.outliers) == [4]
        assert list(m.outlier_rows) == [14]

    def test_trace_properties(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 30))
            X = rng.uniform(-0.5, 0.5, (n, 2))
            y = np.sin(4 * X[:, 0]) + rng.normal(0, 0.2, n)
            y[: n // 5] += 6
            m = fit(Neighborhood.from_arrays(X, y, [0.0, 0.0]))
            assert np.all(np.diff(m.loss_trace) <= 1e-9)
            assert np.all(m.support_trace <= m.q_used)
            assert np.count_nonzero(m.gamma.gamma) <= m.q_used
            assert m.params.nu >= m.nu_floor * (1 - 1e-12)

    def test_single_point(self):
        m = fit(Neighborhood.from_arrays([[0.0]], [2.0], [0.1]))
        assert m.q_used == 0 and m.mu == 2.0

    def test_corrected_c0(self, rng):
        X = rng.uniform(size=(20, 1))
        y = rng.normal(size=20)
        m = fit(Neighborhood.from_arrays(X, y, [0.5]), EstimatorConfig.from_qspec(4, c0_mode="corrected"))
        assert m.c0 == pytest.approx(16 / 20)
