import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oufutures import DomainError, ModelParams
from oufutures.model import (
    build_measurement,
    build_transition,
    canonicalize,
    compute_A,
    log_futures_price,
    stationary_moments,
)

from conftest import THETA_STAR
from oracles import A_mp, euler_transition_cov

# A(1.0) and A(0.5) at THETA_STAR from 50-digit term-by-term sums (oracles.A_mp)
A_AT_1 = 0.072058439151025925648
A_AT_HALF = 0.041902488902013863837
LOG_F_EXAMPLE = 3.4184421299286143664


@st.composite
def thetas(draw):
    kappa = draw(st.floats(0.01, 8.0))
    return ModelParams(
        kappa=kappa,
        gamma=draw(st.floats(0.001, 0.99)) * kappa,
        mu_xi=draw(st.floats(-1, 1)),
        sigma_chi=draw(st.floats(0.01, 2)),
        sigma_xi=draw(st.floats(0.01, 2)),
        rho=draw(st.floats(-0.99, 0.99)),
        lambda_chi=draw(st.floats(-1, 1)),
        lambda_xi=draw(st.floats(-1, 1)),
        s1=draw(st.floats(1e-4, 0.5)),
        s2=draw(st.floats(1e-4, 0.5)),
    )


class TestModelParams:
    def test_rejects_invalid(self):
        base = THETA_STAR.to_dict()
        for name in ("kappa", "gamma", "sigma_chi", "sigma_xi", "s1", "s2"):
            with pytest.raises(ValueError):
                ModelParams(**{**base, name: 0.0})
        for rho in (-1.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                ModelParams(**{**base, "rho": rho})
        with pytest.raises(ValueError):
            ModelParams(**{**base, "mu_xi": math.nan})

    def test_array_round_trip(self):
        assert ModelParams.from_array(THETA_STAR.to_array()) == THETA_STAR

    def test_canonicalize(self):
        swapped = THETA_STAR.replace(kappa=0.1, gamma=1.5, sigma_chi=0.2, sigma_xi=0.3)
        canon = canonicalize(swapped)
        assert canon.kappa > canon.gamma
        assert (canon.sigma_chi, canon.sigma_xi) == (0.3, 0.2)
        assert canon.mu_xi == swapped.mu_xi
        assert canonicalize(THETA_STAR) is THETA_STAR


class TestComputeA:
    def test_zero_maturity(self):
        assert compute_A(THETA_STAR, 0.0) == 0.0

    @given(thetas())
    def test_zero_for_any_theta(self, theta):
        assert compute_A(theta, 0.0) == 0.0

    def test_long_maturity_limit(self):
        th = THETA_STAR
        limit = (
            -th.lambda_chi / th.kappa
            + (th.mu_xi - th.lambda_xi) / th.gamma
            + 0.5 * (th.sigma_chi**2 / (2 * th.kappa) + th.sigma_xi**2 / (2 * th.gamma)
                     + 2 * th.sigma_chi * th.sigma_xi * th.rho / (th.kappa + th.gamma))
        )
        assert compute_A(th, 1e4) == pytest.approx(limit, rel=1e-8)

    def test_against_high_precision_oracle(self):
        assert compute_A(THETA_STAR, 1.0) == pytest.approx(A_AT_1, abs=1e-15)
        assert compute_A(THETA_STAR, 0.5) == pytest.approx(A_AT_HALF, abs=1e-15)

    def test_small_rates_no_cancellation(self):
        th = THETA_STAR.replace(gamma=1e-9, kappa=2e-9)
        for t in (1e-6, 0.5, 3.0):
            assert compute_A(th, t) == pytest.approx(A_mp(th, t), rel=1e-12, abs=1e-18)

    def test_vectorised(self):
        t = np.array([0.0, 0.5, 1.0])
        np.testing.assert_allclose(compute_A(THETA_STAR, t), [0.0, A_AT_HALF, A_AT_1], atol=1e-15)

    def test_negative_maturity(self):
        with pytest.raises(ValueError):
            compute_A(THETA_STAR, -0.1)

    def test_overflow_is_domain_error(self):
        th = THETA_STAR.replace(lambda_chi=-1e308, lambda_xi=-1e308)
        with pytest.raises(DomainError):
            compute_A(th, 50.0)

    @settings(max_examples=50)
    @given(thetas())
    def test_variance_part_non_decreasing_for_positive_rho(self, theta):
        theta = theta.replace(rho=abs(theta.rho), lambda_chi=0.0, lambda_xi=0.0, mu_xi=0.0)
        t = np.linspace(0, 30, 400)
        assert np.all(np.diff(compute_A(theta, t)) >= -1e-15)


class TestLogFuturesPrice:
    def test_zero_maturity_is_log_spot(self):
        assert log_futures_price(THETA_STAR, 0.0, 0.0, 0.0) == 0.0
        assert log_futures_price(THETA_STAR, 0.3, 3.1, 0.0) == pytest.approx(3.4, abs=1e-15)

    def test_example(self):
        assert log_futures_price(THETA_STAR, 0.1, 3.5, 0.5) == pytest.approx(LOG_F_EXAMPLE, abs=1e-14)

    @given(thetas(), st.floats(-2, 2), st.floats(-2, 6), st.floats(0, 5))
    def test_linear_in_state(self, theta, chi, xi, T):
        F = build_measurement(theta, [T]).F[:, 0]
        base = log_futures_price(theta, 0.0, 0.0, T)
        assert log_futures_price(theta, chi, xi, T) == pytest.approx(base + F[0] * chi + F[1] * xi, abs=1e-12)


class TestTransition:
    def test_structure(self):
        tr = build_transition(THETA_STAR, 1 / 252)
        assert tr.c[0] == 0.0
        assert tr.G[0, 1] == tr.G[1, 0] == 0.0
        assert tr.G[0, 0] == pytest.approx(math.exp(-1.5 / 252))
        assert tr.G[1, 1] == pytest.approx(math.exp(-0.1 / 252))
        assert tr.W[0, 1] == tr.W[1, 0]

    def test_small_dt_limit(self):
        tr = build_transition(THETA_STAR, 1e-12)
        assert np.all(np.abs(tr.G - np.eye(2)) < 1e-9)
        assert np.all(np.abs(tr.c) < 1e-9)
        assert np.all(np.abs(tr.W) < 1e-9)

    def test_large_dt_limit(self):
        tr = build_transition(THETA_STAR, 1e3)
        mean, cov = stationary_moments(THETA_STAR)
        np.testing.assert_allclose(tr.G, 0.0, atol=1e-6)
        np.testing.assert_allclose(tr.c, mean, atol=1e-6)
        np.testing.assert_allclose(tr.W, cov, atol=1e-6)

    @pytest.mark.parametrize("dt", [0.0, -1.0])
    def test_bad_dt(self, dt):
        with pytest.raises(ValueError):
            build_transition(THETA_STAR, dt)

    @settings(max_examples=200)
    @given(thetas(), st.floats(1e-6, 50))
    def test_W_positive_definite(self, theta, dt):
        W = build_transition(theta, dt).W
        np.linalg.cholesky(W)
        corr = W[0, 1] / math.sqrt(W[0, 0] * W[1, 1])
        assert -1 < corr < 1

    def test_correlation_limits(self):
        th = THETA_STAR
        W0 = build_transition(th, 1e-9).W
        Winf = build_transition(th, 1e3).W
        corr = lambda W: W[0, 1] / math.sqrt(W[0, 0] * W[1, 1])  # noqa: E731
        assert corr(W0) == pytest.approx(th.rho, rel=1e-6)
        assert corr(Winf) == pytest.approx(th.rho * 2 * math.sqrt(th.kappa * th.gamma) / (th.kappa + th.gamma), rel=1e-9)

    def test_G_decreases_with_dt(self):
        dts = np.linspace(0.001, 5, 50)
        diag = np.array([np.diag(build_transition(THETA_STAR, dt).G) for dt in dts])
        assert np.all(np.diff(diag, axis=0) < 0)

    def test_W_matches_euler_monte_carlo(self):
        dt = 1 / 252
        n = 1_000_000
        sample = euler_transition_cov(THETA_STAR, dt, n, 100, np.random.default_rng(11))
        W = build_transition(THETA_STAR, dt).W
        se = np.sqrt(np.array([
            [2 * W[0, 0] ** 2, W[0, 0] * W[1, 1] + W[0, 1] ** 2],
            [W[0, 0] * W[1, 1] + W[0, 1] ** 2, 2 * W[1, 1] ** 2],
        ]) / n)
        assert np.all(np.abs(sample - W) < 3 * se)


class TestMeasurement:
    def test_zero_maturities(self):
        m = build_measurement(THETA_STAR, [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(m.d, 0.0)
        np.testing.assert_array_equal(m.F, 1.0)

    def test_single_contract(self):
        m = build_measurement(THETA_STAR, [0.25])
        np.testing.assert_array_equal(m.V, [[THETA_STAR.s1**2]])

    def test_monthly_strip_columnwise(self):
        mats = np.arange(1, 21) / 12
        m = build_measurement(THETA_STAR, mats)
        assert m.F.shape == (2, 20) and m.V.shape == (20, 20)
        for i, T in enumerate(mats):
            assert m.d[i] == pytest.approx(A_mp(THETA_STAR, T), abs=1e-14)
            assert m.F[0, i] == pytest.approx(math.exp(-1.5 * T), rel=1e-15)
            assert m.F[1, i] == pytest.approx(math.exp(-0.1 * T), rel=1e-15)
        assert np.all((m.F > 0) & (m.F <= 1))
        expected_v = np.full(20, THETA_STAR.s2**2)
        expected_v[0] = THETA_STAR.s1**2
        np.testing.assert_array_equal(np.diag(m.V), expected_v)
        assert np.count_nonzero(m.V - np.diag(np.diag(m.V))) == 0

    def test_negative_maturity(self):
        with pytest.raises(ValueError):
            build_measurement(THETA_STAR, [0.1, -0.1])
