"""Maximum-likelihood estimation with a grid-search multi-start.

The optimizer works in an unconstrained coordinate system: logs of the
positive parameters, ``arctanh`` of ``rho`` and the identity for ``mu_xi`` and
the lambdas.  A coarse grid over the bounds picks the starting points; each
start runs Nelder-Mead, then BFGS on a central-difference gradient, then a few
guarded Newton steps on a numerical Hessian.  The same Hessian, mapped back by
the delta method, gives the standard errors.

The factors are labelled so that ``kappa > gamma``: grid points are
canonicalized and the local search treats ``kappa < gamma`` as infeasible.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .data import FuturesPanel
from .errors import DomainError, EstimationError, NumericalError
from .kalman import _run
from .model import PARAM_NAMES, ModelParams, canonicalize

logger = logging.getLogger(__name__)

LOG_PARAMS = ("kappa", "gamma", "sigma_chi", "sigma_xi", "s1", "s2")
IDENTITY_PARAMS = ("mu_xi", "lambda_chi", "lambda_xi")
_LOG_IDX = np.array([PARAM_NAMES.index(p) for p in LOG_PARAMS])
_RHO_IDX = PARAM_NAMES.index("rho")
_KAPPA_IDX = PARAM_NAMES.index("kappa")
_GAMMA_IDX = PARAM_NAMES.index("gamma")

DEFAULT_BOUNDS = {
    "kappa": (1e-3, 10.0),
    "gamma": (1e-3, 10.0),
    "mu_xi": (-1.0, 1.0),
    "sigma_chi": (1e-3, 2.0),
    "sigma_xi": (1e-3, 2.0),
    "rho": (-0.95, 0.95),
    "lambda_chi": (-1.0, 1.0),
    "lambda_xi": (-1.0, 1.0),
    "s1": (1e-4, 0.5),
    "s2": (1e-4, 0.5),
}

# Relative gradient norm below which a fit counts as converged.
GRADIENT_TOL = 1e-3
SE_RATIO_WARN = 10.0
_GRAD_STEP = 1e-5
_HESS_STEP = 1e-4


class IdentifiabilityWarning(UserWarning):
    """A parameter's standard error dwarfs its estimate."""


def to_unconstrained(theta: ModelParams) -> np.ndarray:
    v = theta.to_array()
    v[_LOG_IDX] = np.log(v[_LOG_IDX])
    v[_RHO_IDX] = math.atanh(v[_RHO_IDX])
    return v


def from_unconstrained(v) -> ModelParams:
    v = np.array(v, dtype=float)
    if v.shape != (len(PARAM_NAMES),):
        raise ValueError(f"expected {len(PARAM_NAMES)} values, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("unconstrained vector must be finite")
    with np.errstate(over="ignore"):
        v[_LOG_IDX] = np.exp(v[_LOG_IDX])
    v[_RHO_IDX] = math.tanh(v[_RHO_IDX])
    return ModelParams.from_array(v)


def unconstrained_jacobian(theta: ModelParams) -> np.ndarray:
    """Diagonal of d(theta)/d(v) at ``theta``."""
    jac = np.ones(len(PARAM_NAMES))
    values = theta.to_array()
    jac[_LOG_IDX] = values[_LOG_IDX]
    jac[_RHO_IDX] = 1.0 - theta.rho**2
    return jac


@dataclass
class FitConfig:
    """Settings for ``grid_search`` and ``fit_mle``.

    ``grid_points`` is a count per parameter, either one integer for all or a
    mapping by name.  When the full grid exceeds ``budget`` points a uniform
    random subset of that size (drawn with ``seed``) is evaluated instead.
    """

    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    grid_points: int | dict = 3
    budget: int = 2000
    n_starts: int = 5
    max_iter: int = 4000
    tol: float = 1e-8
    seed: int = 0
    init: str = "stationary"
    newton_steps: int = 8

    def __post_init__(self):
        bounds = dict(DEFAULT_BOUNDS)
        bounds.update(self.bounds)
        for name, (lo, hi) in bounds.items():
            if name not in PARAM_NAMES:
                raise ValueError(f"unknown parameter {name!r} in bounds")
            if not lo < hi:
                raise ValueError(f"bounds for {name} must satisfy lower < upper")
        self.bounds = bounds
        for name in PARAM_NAMES:
            if self.points_for(name) < 1:
                raise ValueError(f"grid points for {name} must be >= 1")
        if self.budget < 1 or self.n_starts < 1 or self.max_iter < 1:
            raise ValueError("budget, n_starts and max_iter must be >= 1")

    def points_for(self, name: str) -> int:
        if isinstance(self.grid_points, dict):
            return int(self.grid_points.get(name, 3))
        return int(self.grid_points)


@dataclass
class GridPoint:
    theta: ModelParams
    loglik: float
    index: int


@dataclass
class StartRecord:
    start: ModelParams
    start_loglik: float
    final: ModelParams | None
    loglik: float
    message: str = ""


@dataclass
class FitResult:
    theta_hat: ModelParams
    loglik: float
    std_errors: np.ndarray | None
    converged: bool
    n_starts: int
    start_trace: list
    gradient_norm: float = math.nan
    cov_unconstrained: np.ndarray | None = None
    warnings: list = field(default_factory=list)

    def summary(self) -> str:
        lines = [f"loglik = {self.loglik:.10g}", f"converged = {self.converged}"]
        for i, name in enumerate(PARAM_NAMES):
            se = "" if self.std_errors is None else f"  (se {self.std_errors[i]:.4g})"
            lines.append(f"{name:>10} = {getattr(self.theta_hat, name):.10g}{se}")
        return "\n".join(lines)


def _bound_in_unconstrained(name, lo, hi):
    if name in LOG_PARAMS:
        return math.log(lo), math.log(hi)
    if name == "rho":
        return math.atanh(lo), math.atanh(hi)
    return lo, hi


def grid_axes(config: FitConfig) -> list[np.ndarray]:
    """Grid values per parameter: cell centres in unconstrained coordinates."""
    axes = []
    for name in PARAM_NAMES:
        lo, hi = _bound_in_unconstrained(name, *config.bounds[name])
        m = config.points_for(name)
        axes.append(lo + (hi - lo) * (np.arange(m) + 0.5) / m)
    return axes


class _Objective:
    """Negative log-likelihood in unconstrained coordinates."""

    def __init__(self, panel, init):
        self.panel = panel
        self.init = init
        self.n_evals = 0
        self.n_failures = 0

    def loglik_theta(self, theta: ModelParams) -> float:
        self.n_evals += 1
        try:
            return _run(self.panel, theta, self.init, store=False)
        except (NumericalError, DomainError, ValueError):
            self.n_failures += 1
            return -math.inf

    def __call__(self, v) -> float:
        if v[_KAPPA_IDX] < v[_GAMMA_IDX]:
            return math.inf
        try:
            theta = from_unconstrained(v)
        except ValueError:
            return math.inf
        return -self.loglik_theta(theta)


def grid_search(panel: FuturesPanel, config: FitConfig | None = None, top_k: int | None = None):
    """Rank grid points by log-likelihood.

    Returns up to ``top_k`` (default ``config.n_starts``) distinct
    ``GridPoint`` objects sorted by log-likelihood, highest first; ties keep
    grid order.
    """
    config = config or FitConfig()
    top_k = config.n_starts if top_k is None else top_k
    axes = grid_axes(config)
    shape = tuple(len(a) for a in axes)
    total = int(np.prod(shape))
    if total <= config.budget:
        flat = np.arange(total)
    else:
        rng = np.random.default_rng(config.seed)
        flat = np.sort(rng.choice(total, size=config.budget, replace=False))
    objective = _Objective(panel, config.init)
    seen = set()
    points = []
    for index in flat:
        multi = np.unravel_index(index, shape)
        v = np.array([axes[j][multi[j]] for j in range(len(axes))])
        theta = canonicalize(from_unconstrained(v))
        key = tuple(theta.to_array())
        if key in seen:
            continue
        seen.add(key)
        ll = objective.loglik_theta(theta)
        if math.isfinite(ll):
            points.append(GridPoint(theta, ll, int(index)))
    if not points:
        raise EstimationError(
            f"all {len(flat)} grid points failed to evaluate",
            diagnostics=[f"{objective.n_failures} numerical failures"],
        )
    points.sort(key=lambda p: (-p.loglik, p.index))
    return points[:top_k]


def numerical_gradient(f, x, step=_GRAD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return grad


def numerical_hessian(f, x, step=_HESS_STEP) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    n = x.size
    f0 = f(x)
    H = np.empty((n, n))
    eye = np.eye(n) * step
    for i in range(n):
        H[i, i] = (f(x + eye[i]) - 2.0 * f0 + f(x - eye[i])) / step**2
        for j in range(i):
            H[i, j] = H[j, i] = (
                f(x + eye[i] + eye[j])
                - f(x + eye[i] - eye[j])
                - f(x - eye[i] + eye[j])
                + f(x - eye[i] - eye[j])
            ) / (4.0 * step**2)
    return H


def _newton_polish(f, v, fv, steps, tol):
    """Guarded Newton iterations on numerical derivatives; only improvements kept."""
    for _ in range(steps):
        g = numerical_gradient(f, v)
        H = numerical_hessian(f, v)
        if not np.all(np.isfinite(g)) or not np.all(np.isfinite(H)):
            break
        try:
            factor = linalg.cho_factor(H)
        except linalg.LinAlgError:
            break
        step = -linalg.cho_solve(factor, g)
        improved = False
        for scale in (1.0, 0.5, 0.25, 0.125):
            cand = v + scale * step
            fc = f(cand)
            if fc < fv:
                improved = True
                gain = fv - fc
                v, fv = cand, fc
                break
        if not improved or gain < tol:
            break
    return v, fv


def _local_search(objective, theta0, config):
    v0 = to_unconstrained(theta0)
    f0 = objective(v0)
    if not math.isfinite(f0):
        raise EstimationError("start point does not evaluate")
    step = np.where(np.isin(np.arange(v0.size), _LOG_IDX), 0.3, 0.1)
    step[_RHO_IDX] = 0.3
    simplex = np.vstack([v0, v0 + np.diag(step)])
    # keep the kappa > gamma labelling inside the initial simplex
    simplex[1 + _GAMMA_IDX, _GAMMA_IDX] = v0[_GAMMA_IDX] - step[_GAMMA_IDX]
    nm = optimize.minimize(
        objective,
        v0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "maxiter": config.max_iter,
            "maxfev": 2 * config.max_iter,
            "xatol": 1e-7,
            "fatol": config.tol,
            "adaptive": True,
        },
    )
    v, fv = nm.x, nm.fun
    bfgs = optimize.minimize(
        objective,
        v,
        method="BFGS",
        jac=lambda x: numerical_gradient(objective, x),
        options={"maxiter": 200, "gtol": 1e-6},
    )
    if bfgs.fun < fv:
        v, fv = bfgs.x, bfgs.fun
    v, fv = _newton_polish(objective, v, fv, config.newton_steps, config.tol)
    return v, fv, nm.message


def standard_errors(panel: FuturesPanel, theta: ModelParams, init="stationary"):
    """Delta-method standard errors from the unconstrained Hessian.

    Returns ``(std_errors, cov_unconstrained)``; both are None when the
    Hessian of the negative log-likelihood is not positive definite.
    """
    objective = _Objective(panel, init)
    v = to_unconstrained(theta)
    H = numerical_hessian(objective, v)
    if not np.all(np.isfinite(H)):
        return None, None
    try:
        factor = linalg.cho_factor(H)
    except linalg.LinAlgError:
        return None, None
    cov = linalg.cho_solve(factor, np.eye(v.size))
    se = np.abs(unconstrained_jacobian(theta)) * np.sqrt(np.diag(cov))
    return se, cov


def fit_mle(panel: FuturesPanel, config: FitConfig | None = None) -> FitResult:
    """Maximum-likelihood fit of all ten parameters.

    Raises
    ------
    ValueError
        If the panel has fewer than two dates or two contracts.
    EstimationError
        If every start fails.
    """
    config = config or FitConfig()
    if panel.n_dates < 2 or panel.n_contracts < 2:
        raise ValueError("fitting needs at least two dates and two contracts")
    starts = grid_search(panel, config)
    objective = _Objective(panel, config.init)
    trace, diagnostics = [], []
    best = None
    for k, point in enumerate(starts):
        try:
            v, fv, message = _local_search(objective, point.theta, config)
            final = from_unconstrained(v)
        except (EstimationError, ValueError) as exc:
            diagnostics.append(f"start {k}: {exc}")
            trace.append(StartRecord(point.theta, point.loglik, None, -math.inf, str(exc)))
            continue
        trace.append(StartRecord(point.theta, point.loglik, final, -fv, str(message)))
        logger.info("start %d: grid loglik %.6f -> %.6f", k, point.loglik, -fv)
        if best is None or -fv > best[1]:
            best = (final, -fv)
    if best is None:
        raise EstimationError("every start failed", diagnostics=diagnostics)

    theta_hat = best[0]
    loglik = objective.loglik_theta(theta_hat)
    grad = numerical_gradient(objective, to_unconstrained(theta_hat))
    grad_norm = float(np.linalg.norm(grad))
    converged = grad_norm <= GRADIENT_TOL * (1.0 + abs(loglik))
    se, cov = standard_errors(panel, theta_hat, config.init)

    notes = list(diagnostics)
    if se is None:
        notes.append("Hessian not positive definite; standard errors unavailable")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    else:
        for name in ("lambda_chi", "lambda_xi"):
            i = PARAM_NAMES.index(name)
            estimate = abs(getattr(theta_hat, name))
            if se[i] > SE_RATIO_WARN * estimate:
                msg = (
                    f"{name} is weakly identified: standard error {se[i]:.3g} "
                    f"exceeds {SE_RATIO_WARN:g}x the estimate {estimate:.3g}"
                )
                notes.append(msg)
                warnings.warn(msg, IdentifiabilityWarning, stacklevel=2)
    if not converged:
        notes.append(f"gradient norm {grad_norm:.3g} above tolerance")
    return FitResult(
        theta_hat=theta_hat,
        loglik=loglik,
        std_errors=se,
        converged=bool(converged),
        n_starts=len(starts),
        start_trace=trace,
        gradient_norm=grad_norm,
        cov_unconstrained=cov,
        warnings=notes,
    )
