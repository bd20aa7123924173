import numpy as np
import pytest

from oufutures.kalman import init_state
from oufutures.model import build_transition, compute_A
from oufutures.simulation import (
    constant_maturities,
    make_rng,
    rolling_maturities,
    save_states,
    simulate,
    standard_normals,
)

from conftest import THETA_STAR


def test_same_seed_bit_identical():
    a = simulate(THETA_STAR, 200, maturities=constant_maturities(200, 5), seed=42)
    b = simulate(THETA_STAR, 200, maturities=constant_maturities(200, 5), seed=42)
    assert np.array_equal(a.panel.log_prices, b.panel.log_prices)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.panel.dates, b.panel.dates)
    c = simulate(THETA_STAR, 200, maturities=constant_maturities(200, 5), seed=43)
    assert not np.array_equal(a.states, c.states)


def test_normals_are_finite_and_standard():
    z = standard_normals(make_rng(1), 200_000)
    assert np.all(np.isfinite(z))
    assert abs(z.mean()) < 3 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 3 * np.sqrt(2 / z.size)


def test_noise_free_panel_is_deterministic_map():
    tiny = 1e-12
    theta = THETA_STAR.replace(sigma_chi=tiny, sigma_xi=tiny, s1=tiny, s2=tiny)
    mats = constant_maturities(100, 4)
    sim = simulate(theta, 100, maturities=mats, seed=5)
    tr = build_transition(theta, sim.panel.dt)
    x = init_state(theta).mean
    expected = []
    for _ in range(100):
        x = tr.c + tr.G @ x
        expected.append(x)
    expected = np.array(expected)
    np.testing.assert_allclose(sim.states, expected, atol=1e-6)
    y = compute_A(theta, mats) + np.exp(-theta.kappa * mats) * expected[:, :1] + np.exp(-theta.gamma * mats) * expected[:, 1:]
    np.testing.assert_allclose(sim.panel.log_prices, y, atol=1e-6)


def test_panel_is_measurement_of_states():
    sim = simulate(THETA_STAR, 50, maturities=constant_maturities(50, 3), seed=9)
    mats = sim.panel.maturities
    clean = compute_A(THETA_STAR, mats) + np.exp(-1.5 * mats) * sim.states[:, :1] + np.exp(-0.1 * mats) * sim.states[:, 1:]
    resid = sim.panel.log_prices - clean
    assert np.abs(resid[:, 0]).max() < 6 * THETA_STAR.s1
    assert np.abs(resid[:, 1:]).max() < 6 * THETA_STAR.s2
    assert len(sim.true_states) == sim.panel.n_dates
    assert sim.true_states[3].chi == sim.states[3, 0]


def test_cross_sectional_regression_recovers_noise():
    theta = THETA_STAR.replace(s1=0.05, s2=0.05)
    n = 12
    mats = constant_maturities(2000, n)
    sim = simulate(theta, 2000, maturities=mats, seed=17)
    X = np.stack([np.exp(-theta.kappa * mats[0]), np.exp(-theta.gamma * mats[0])], axis=1)
    target = (sim.panel.log_prices - compute_A(theta, mats)).T
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ coef
    var = (resid**2).sum() / (resid.size - 2 * target.shape[1])
    assert var == pytest.approx(0.05**2, rel=0.03)


def test_lag_one_autocorrelation():
    sim = simulate(THETA_STAR, 20_000, maturities=[0.1, 0.5], seed=33)
    chi = sim.states[:, 0] - sim.states[:, 0].mean()
    r1 = chi[1:] @ chi[:-1] / (chi @ chi)
    phi = np.exp(-THETA_STAR.kappa * sim.panel.dt)
    assert abs(r1 - phi) < 3 * np.sqrt((1 - phi**2) / chi.size) + (1 + 3 * phi) / chi.size


def test_rolling_maturities():
    m = rolling_maturities(60, 4)
    assert m.shape == (60, 4)
    assert np.all(m > 0)
    assert np.all(np.diff(m, axis=1) > 0)
    np.testing.assert_allclose(m[0], np.arange(1, 5) / 12)
    assert np.all(np.diff(m[:21, 0]) < 0)
    np.testing.assert_allclose(m[21], m[0])


def test_single_row_maturities_broadcast():
    sim = simulate(THETA_STAR, 10, maturities=[0.2, 0.4], seed=0)
    assert sim.panel.maturities.shape == (10, 2)


@pytest.mark.parametrize("kwargs", [{"n_dates": 0}, {"dt": 0.0}, {"maturities": np.ones((3, 2))}])
def test_bad_arguments(kwargs):
    args = {"n_dates": 5, "dt": 1 / 252, "maturities": [0.1, 0.2]} | kwargs
    with pytest.raises(ValueError):
        simulate(THETA_STAR, seed=0, **args)


def test_rejects_non_params():
    with pytest.raises(TypeError):
        simulate(THETA_STAR.to_dict(), 5)


def test_save_states(tmp_path):
    sim = simulate(THETA_STAR, 3, maturities=[0.1], seed=0)
    path = tmp_path / "states.csv"
    save_states(sim, path, comment="x")
    lines = path.read_text().splitlines()
    assert lines[0] == "# x" and lines[1] == "date,chi,xi" and len(lines) == 5
    assert float(lines[2].split(",")[1]) == sim.states[0, 0]
