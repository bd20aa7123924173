import time

import numpy as np
import pytest

from oufutures import FuturesPanel, ModelParams
from oufutures.simulation import business_dates, constant_maturities, simulate

# Implementer-chosen ground truth for the synthetic fixtures.
THETA_STAR = ModelParams(
    kappa=1.5, gamma=0.1, mu_xi=0.05, sigma_chi=0.3, sigma_xi=0.2,
    rho=0.4, lambda_chi=0.02, lambda_xi=0.01, s1=0.02, s2=0.01,
)
FIXTURE_SEED = 20201


def random_theta(rng) -> ModelParams:
    kappa = rng.uniform(0.3, 4.0)
    return ModelParams(
        kappa=kappa,
        gamma=rng.uniform(0.02, 0.9) * kappa,
        mu_xi=rng.uniform(-0.3, 0.3),
        sigma_chi=rng.uniform(0.05, 0.8),
        sigma_xi=rng.uniform(0.05, 0.5),
        rho=rng.uniform(-0.9, 0.9),
        lambda_chi=rng.uniform(-0.3, 0.3),
        lambda_xi=rng.uniform(-0.3, 0.3),
        s1=rng.uniform(0.005, 0.1),
        s2=rng.uniform(0.005, 0.1),
    )


def random_panel(rng, theta, n_dates, n_contracts, dt=1 / 52, missing_frac=0.0):
    """Small simulated panel with random increasing maturities."""
    mats = np.sort(rng.uniform(0.02, 2.0, size=(n_dates, n_contracts)), axis=1)
    sim = simulate(theta, n_dates, dt, mats, seed=int(rng.integers(2**31)))
    y = np.array(sim.panel.log_prices)
    m = np.array(sim.panel.maturities)
    if missing_frac:
        hole = rng.random(y.shape) < missing_frac
        y[hole] = np.nan
        m[hole] = np.nan
    return FuturesPanel(sim.panel.dates, y, m, dt)


@pytest.fixture(scope="session")
def theta_star():
    return THETA_STAR


@pytest.fixture(scope="session")
def fixture_sim():
    """Recovery fixture: 1000 dates of 10 constant-maturity contracts."""
    return simulate(THETA_STAR, 1000, maturities=constant_maturities(1000, 10), seed=FIXTURE_SEED)


@pytest.fixture
def tiny_panel():
    dates = business_dates(3)
    y = np.log([[50.0, 51.0], [50.5, 51.2], [49.8, 50.9]])
    mats = np.array([[0.1, 0.2]] * 3)
    return FuturesPanel(dates, y, mats)


@pytest.fixture(scope="session")
def fixture_fit(fixture_sim):
    import warnings

    from oufutures.estimation import FitConfig, fit_mle

    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = fit_mle(fixture_sim.panel, FitConfig(seed=FIXTURE_SEED))
    return result, caught, time.perf_counter() - start


@pytest.fixture(scope="session")
def small_sim():
    """Cheap panel for repeated fits: 250 dates of 5 contracts."""
    return simulate(THETA_STAR, 250, maturities=constant_maturities(250, 5), seed=77)


SMALL_FIT = dict(grid_points=2, budget=64, n_starts=2, seed=3)


@pytest.fixture(scope="session")
def golden_run(tmp_path_factory):
    """Output directory and exit codes of one fresh golden pipeline run."""
    import golden_pipeline

    out = tmp_path_factory.mktemp("golden_run")
    return out, golden_pipeline.run(out)


# -- acceptance report ---------------------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed or (report.when == "call" and report.skipped)
    previous = _ACCEPTANCE.get(number, (title, "PASS"))[1]
    if report.when == "call" or failed:
        _ACCEPTANCE[number] = (title, "FAIL" if failed or previous == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")
