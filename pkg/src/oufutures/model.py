"""Two-factor Ornstein-Uhlenbeck model for log futures prices.

The log spot price is the sum of a short-term factor ``chi`` that reverts to
zero and a long-term factor ``xi`` that reverts to ``mu_xi / gamma``::

    d chi = (-kappa chi - lambda_chi) dt + sigma_chi dZ_chi
    d xi  = (mu_xi - gamma xi - lambda_xi) dt + sigma_xi dZ_xi
    dZ_chi dZ_xi = rho dt

The lambdas shift the drift under the pricing measure only.  States are
propagated under the physical measure with the exact AR(1) discretization, and
futures are priced under the risk-neutral one, so the transition drift carries
``mu_xi`` while the pricing offset ``A(T)`` carries the lambdas.

All times are in years.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields, replace

import numpy as np

from .errors import DomainError

TRADING_DAYS_PER_YEAR = 252
DEFAULT_DT = 1.0 / TRADING_DAYS_PER_YEAR

PARAM_NAMES = (
    "kappa",
    "gamma",
    "mu_xi",
    "sigma_chi",
    "sigma_xi",
    "rho",
    "lambda_chi",
    "lambda_xi",
    "s1",
    "s2",
)


@dataclass(frozen=True)
class ModelParams:
    """The ten model parameters.

    Rates are per year, volatilities per square-root year and the measurement
    standard deviations ``s1`` (first contract) and ``s2`` (all others) are in
    log-price units.
    """

    kappa: float
    gamma: float
    mu_xi: float
    sigma_chi: float
    sigma_xi: float
    rho: float
    lambda_chi: float
    lambda_xi: float
    s1: float
    s2: float

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value!r}")
            object.__setattr__(self, f.name, value)
        for name in ("kappa", "gamma", "sigma_chi", "sigma_xi", "s1", "s2"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho!r}")

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "ModelParams":
        values = np.asarray(values, dtype=float)
        if values.shape != (len(PARAM_NAMES),):
            raise ValueError(f"expected {len(PARAM_NAMES)} values, got shape {values.shape}")
        return cls(*values.tolist())

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class StateVec:
    chi: float
    xi: float

    @property
    def log_spot(self) -> float:
        return self.chi + self.xi


@dataclass(frozen=True)
class StateDistribution:
    """Gaussian belief over ``(chi, xi)``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    def is_psd(self, tol: float = 1e-10) -> bool:
        return bool(np.all(np.linalg.eigvalsh(self.cov) >= -tol))


@dataclass(frozen=True)
class TransitionModel:
    """``x_t = c + G x_{t-1} + w_t`` with ``w_t ~ N(0, W)`` over a step ``dt``."""

    c: np.ndarray
    G: np.ndarray
    W: np.ndarray
    dt: float


@dataclass(frozen=True)
class MeasurementModel:
    """``y_t = d + F' x_t + v_t`` with ``v_t ~ N(0, V)``.

    ``F`` has shape ``(2, n)``: one column per contract.
    """

    d: np.ndarray
    F: np.ndarray
    V: np.ndarray


def _decay_integral(rate, t):
    """(1 - exp(-rate t)) / rate without cancellation for small rate*t."""
    return -np.expm1(-rate * t) / rate


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise DomainError(f"{what} is not finite for the given parameters")
    return value


def compute_A(theta: ModelParams, t):
    """Deterministic offset ``A(t)`` of the log futures price.

    Accepts a scalar or an array of maturities and returns the same shape.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("maturities must be non-negative")
    k, g = theta.kappa, theta.gamma
    with np.errstate(over="ignore", invalid="ignore"):
        premium = (
            -theta.lambda_chi * _decay_integral(k, t_arr)
            + (theta.mu_xi - theta.lambda_xi) * _decay_integral(g, t_arr)
        )
        variance = (
            theta.sigma_chi**2 * _decay_integral(2.0 * k, t_arr)
            + theta.sigma_xi**2 * _decay_integral(2.0 * g, t_arr)
            + 2.0 * theta.sigma_chi * theta.sigma_xi * theta.rho * _decay_integral(k + g, t_arr)
        )
        total = premium + 0.5 * variance
    out = _check_finite(total, "A(t)")
    return float(out) if out.ndim == 0 else out


def log_futures_price(theta: ModelParams, chi0, xi0, T):
    """Log futures price for maturity ``T`` given the current factor values."""
    T_arr = np.asarray(T, dtype=float)
    out = (
        np.exp(-theta.kappa * T_arr) * chi0
        + np.exp(-theta.gamma * T_arr) * xi0
        + compute_A(theta, T_arr)
    )
    return float(out) if np.ndim(out) == 0 else out


def stationary_moments(theta: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the stationary law of ``(chi, xi)``."""
    k, g = theta.kappa, theta.gamma
    sc, sx = theta.sigma_chi, theta.sigma_xi
    mean = np.array([0.0, theta.mu_xi / g])
    off = sc * sx * theta.rho / (k + g)
    cov = np.array([[sc**2 / (2.0 * k), off], [off, sx**2 / (2.0 * g)]])
    return mean, cov


def build_transition(theta: ModelParams, dt: float = DEFAULT_DT) -> TransitionModel:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    k, g = theta.kappa, theta.gamma
    sc, sx = theta.sigma_chi, theta.sigma_xi
    c = np.array([0.0, theta.mu_xi * _decay_integral(g, dt)])
    G = np.diag([math.exp(-k * dt), math.exp(-g * dt)])
    w12 = sc * sx * theta.rho * _decay_integral(k + g, dt)
    W = np.array(
        [
            [sc**2 * _decay_integral(2.0 * k, dt), w12],
            [w12, sx**2 * _decay_integral(2.0 * g, dt)],
        ]
    )
    _check_finite(W, "transition covariance")
    return TransitionModel(c=c, G=G, W=W, dt=float(dt))


def measurement_variances(theta: ModelParams, n: int) -> np.ndarray:
    """Diagonal of ``V``: ``s1**2`` for the first contract, ``s2**2`` after."""
    var = np.full(n, theta.s2**2)
    if n:
        var[0] = theta.s1**2
    return var


def build_measurement(theta: ModelParams, maturities) -> MeasurementModel:
    mats = np.atleast_1d(np.asarray(maturities, dtype=float))
    if mats.ndim != 1 or mats.size == 0:
        raise ValueError("maturities must be a non-empty 1-d sequence")
    if np.any(~np.isfinite(mats)) or np.any(mats < 0):
        raise ValueError("maturities must be finite and non-negative")
    d = compute_A(theta, mats)
    F = np.vstack([np.exp(-theta.kappa * mats), np.exp(-theta.gamma * mats)])
    V = np.diag(measurement_variances(theta, mats.size))
    return MeasurementModel(d=np.atleast_1d(d), F=F, V=V)


def canonicalize(theta: ModelParams) -> ModelParams:
    """Relabel the factors so that ``kappa > gamma``.

    Swaps ``(kappa, sigma_chi, lambda_chi)`` with ``(gamma, sigma_xi,
    lambda_xi)``.  This is a labelling convention, not a symmetry of the
    likelihood: ``mu_xi`` stays attached to the second factor.
    """
    if theta.kappa >= theta.gamma:
        return theta
    return theta.replace(
        kappa=theta.gamma,
        gamma=theta.kappa,
        sigma_chi=theta.sigma_xi,
        sigma_xi=theta.sigma_chi,
        lambda_chi=theta.lambda_xi,
        lambda_xi=theta.lambda_chi,
    )
