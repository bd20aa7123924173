"""Synthetic factor paths and futures panels.

Draws use the counter-based Philox generator, and normals come from the
inverse normal CDF of its uniforms, so a seed gives the same panel on every
platform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal, special

from .data import FuturesPanel
from .kalman import init_state
from .model import DEFAULT_DT, ModelParams, StateVec, build_transition, compute_A, measurement_variances

DEFAULT_START = "2001-01-02"


@dataclass(frozen=True, eq=False)
class SimOutput:
    panel: FuturesPanel
    states: np.ndarray  # (n_T, 2) true (chi, xi) on each panel date
    theta: ModelParams
    seed: int

    @property
    def true_states(self) -> list[StateVec]:
        return [StateVec(float(a), float(b)) for a, b in self.states]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def standard_normals(rng: np.random.Generator, shape) -> np.ndarray:
    # uniforms are multiples of 2**-53 in [0, 1); shift off zero before ndtri
    u = rng.random(shape) + 2.0**-54
    return special.ndtri(u)


def constant_maturities(n_dates: int, n_contracts: int, spacing: float = 1.0 / 12) -> np.ndarray:
    """Fixed time-to-maturity ``i * spacing`` for contract ``i`` on every date."""
    row = spacing * np.arange(1, n_contracts + 1)
    return np.tile(row, (n_dates, 1))


def rolling_maturities(n_dates: int, n_contracts: int, dt: float = DEFAULT_DT) -> np.ndarray:
    """Monthly contracts whose time-to-maturity shrinks daily.

    Contract ``i`` starts each roll cycle at ``i/12`` years and loses ``dt``
    per date; after one month of steps every contract rolls back out.
    """
    steps = max(1, int(round(1.0 / (12.0 * dt))))
    phase = (np.arange(n_dates) % steps) / steps
    return (np.arange(1, n_contracts + 1)[None, :] - phase[:, None]) / 12.0


def business_dates(n_dates: int, start=DEFAULT_START) -> np.ndarray:
    return np.busday_offset(np.datetime64(start, "D"), np.arange(n_dates), roll="forward")


def simulate_states(theta: ModelParams, n_dates: int, dt: float, rng) -> np.ndarray:
    """Exact-discretization factor path, starting from the stationary law.

    Returns the states on the ``n_dates`` steps after the initial draw.
    """
    prior = init_state(theta)
    x0 = prior.mean + linalg.cholesky(prior.cov, lower=True) @ standard_normals(rng, 2)
    tr = build_transition(theta, dt)
    shocks = standard_normals(rng, (n_dates, 2)) @ linalg.cholesky(tr.W, lower=True).T
    states = np.empty((n_dates, 2))
    for j in range(2):
        g = tr.G[j, j]
        # x_t = g x_{t-1} + (c + w_t), run as a first-order IIR filter
        states[:, j], _ = signal.lfilter([1.0], [1.0, -g], tr.c[j] + shocks[:, j], zi=[g * x0[j]])
    return states


def simulate(
    theta: ModelParams,
    n_dates: int,
    dt: float = DEFAULT_DT,
    maturities=None,
    seed: int = 0,
    start=DEFAULT_START,
) -> SimOutput:
    """Simulate a futures panel from the model.

    Parameters
    ----------
    maturities : array (n_dates, n) or (n,), optional
        Time-to-maturity of each quote.  A single row is used for every date.
        Defaults to 20 monthly contracts at constant maturity.
    seed : int
        Philox seed; the same seed reproduces the output bit for bit.
    """
    if not isinstance(theta, ModelParams):
        raise TypeError("theta must be a ModelParams")
    if n_dates < 1:
        raise ValueError("n_dates must be at least 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if maturities is None:
        maturities = constant_maturities(n_dates, 20)
    mats = np.asarray(maturities, dtype=float)
    if mats.ndim == 1:
        mats = np.tile(mats, (n_dates, 1))
    if mats.shape[0] != n_dates:
        raise ValueError(f"maturities has {mats.shape[0]} rows, expected {n_dates}")

    rng = make_rng(seed)
    states = simulate_states(theta, n_dates, dt, rng)
    noise = standard_normals(rng, mats.shape) * np.sqrt(measurement_variances(theta, mats.shape[1]))
    y = (
        compute_A(theta, mats)
        + np.exp(-theta.kappa * mats) * states[:, :1]
        + np.exp(-theta.gamma * mats) * states[:, 1:]
        + noise
    )
    panel = FuturesPanel(business_dates(n_dates, start), y, mats, dt)
    return SimOutput(panel, states, theta, int(seed))


def save_states(sim: SimOutput, path, comment: str | None = None) -> None:
    """Sidecar CSV of the true factor path: ``date,chi,xi``."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "chi", "xi"])
        for date, (chi, xi) in zip(sim.panel.dates, sim.states):
            writer.writerow([str(date), repr(float(chi)), repr(float(xi))])
