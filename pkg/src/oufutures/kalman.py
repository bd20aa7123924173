"""Kalman filter, fixed-interval smoother and prediction-error likelihood.

The filter runs on the observed sub-vector of each date, so panels with gaps
are handled by dropping the missing contracts from ``d``, ``F`` and ``V`` for
that date; a date with no quotes is a pure prediction step.  The Gaussian
constant of the likelihood counts the quotes actually observed on each date.

The recursion itself is a numba kernel because the optimizer calls it
thousands of times.  Innovation covariances are factored by Cholesky (one
retry with a small diagonal jitter, then failure) and the covariance update
uses the Joseph form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg

from .data import FuturesPanel
from .errors import NumericalError
from .model import (
    ModelParams,
    StateDistribution,
    build_transition,
    compute_A,
    measurement_variances,
    stationary_moments,
)

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
JITTER = 1e-10
DIFFUSE_SCALE = 1e6
INIT_MODES = ("stationary", "diffuse")


@dataclass(frozen=True, eq=False)
class FilterOutput:
    """Per-date output of the forward pass.

    Arrays are indexed by date first.  ``innovations`` and ``innovation_covs``
    are NaN in the rows/columns of contracts missing on that date.
    """

    predicted_means: np.ndarray  # (n_T, 2)
    predicted_covs: np.ndarray  # (n_T, 2, 2)
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    innovations: np.ndarray  # (n_T, n)
    innovation_covs: np.ndarray  # (n_T, n, n)
    loglik: float
    init: StateDistribution

    @property
    def predicted(self) -> list[StateDistribution]:
        return [StateDistribution(m, P) for m, P in zip(self.predicted_means, self.predicted_covs)]

    @property
    def filtered(self) -> list[StateDistribution]:
        return [StateDistribution(m, P) for m, P in zip(self.filtered_means, self.filtered_covs)]

    def loglik_terms(self) -> np.ndarray:
        """Per-date log-density terms recomputed from the stored innovations."""
        terms = np.zeros(len(self.innovations))
        for t, (e, L) in enumerate(zip(self.innovations, self.innovation_covs)):
            obs = ~np.isnan(e)
            k = int(obs.sum())
            if k == 0:
                continue
            e_o = e[obs]
            L_o = L[np.ix_(obs, obs)]
            chol = linalg.cholesky(L_o, lower=True)
            z = linalg.solve_triangular(chol, e_o, lower=True)
            terms[t] = -0.5 * (k * LOG_2PI + 2.0 * np.log(np.diag(chol)).sum() + z @ z)
        return terms


@dataclass(frozen=True, eq=False)
class SmootherOutput:
    smoothed_means: np.ndarray  # (n_T, 2)
    smoothed_covs: np.ndarray  # (n_T, 2, 2)
    gains: np.ndarray  # (n_T, 2, 2), last entry zero

    @property
    def smoothed(self) -> list[StateDistribution]:
        return [StateDistribution(m, P) for m, P in zip(self.smoothed_means, self.smoothed_covs)]


def init_state(theta: ModelParams, mode: str = "stationary") -> StateDistribution:
    """Prior for the state one step before the first panel date.

    ``"stationary"`` is the ergodic law of the factors; ``"diffuse"`` keeps
    that mean and inflates the covariance by ``DIFFUSE_SCALE``.
    """
    if mode not in INIT_MODES:
        raise ValueError(f"init mode must be one of {INIT_MODES}, got {mode!r}")
    mean, cov = stationary_moments(theta)
    if mode == "diffuse":
        cov = cov * DIFFUSE_SCALE
    return StateDistribution(mean, cov)


# -- numba kernel -----------------------------------------------------------


@njit(cache=True)
def _cholesky(A, k, out):
    """Lower Cholesky factor of A[:k, :k] into out; False if not PD."""
    for j in range(k):
        s = A[j, j]
        for p in range(j):
            s -= out[j, p] * out[j, p]
        if not (s > 0.0) or not np.isfinite(s):
            return False
        out[j, j] = math.sqrt(s)
        for i in range(j + 1, k):
            s = A[i, j]
            for p in range(j):
                s -= out[i, p] * out[j, p]
            out[i, j] = s / out[j, j]
        for i in range(j):
            out[i, j] = 0.0
    return True


@njit(cache=True)
def _chol_solve(Lc, k, b):
    """Solve (Lc Lc') x = b in place for the first k rows of b (vector)."""
    for i in range(k):
        s = b[i]
        for p in range(i):
            s -= Lc[i, p] * b[p]
        b[i] = s / Lc[i, i]
    for i in range(k - 1, -1, -1):
        s = b[i]
        for p in range(i + 1, k):
            s -= Lc[p, i] * b[p]
        b[i] = s / Lc[i, i]


@njit(cache=True)
def _filter_kernel(y, d, Z, vdiag, c, G, W, m0, P0, store, jitter):
    """Forward pass.

    y, d : (T, n) with NaN in y where missing
    Z : (T, n, 2) loadings (rows of F')
    vdiag : (n,) measurement variances
    Returns (loglik, fail_t, arrays...).  fail_t is -1 on success.
    """
    T, n = y.shape
    nst = T if store else 0
    pm = np.empty((nst, 2))
    pP = np.empty((nst, 2, 2))
    fm = np.empty((nst, 2))
    fP = np.empty((nst, 2, 2))
    ev = np.full((nst, n), np.nan)
    eL = np.full((nst, n, n), np.nan)

    m = m0.copy()
    P = P0.copy()
    L = np.empty((n, n))
    Lc = np.zeros((n, n))
    idx = np.empty(n, dtype=np.int64)
    e = np.empty(n)
    LinvZP = np.empty((n, 2))
    col = np.empty(n)
    ZP = np.empty((n, 2))
    K = np.empty((2, n))
    loglik = 0.0

    for t in range(T):
        # predict
        m_new0 = c[0] + G[0, 0] * m[0] + G[0, 1] * m[1]
        m_new1 = c[1] + G[1, 0] * m[0] + G[1, 1] * m[1]
        m[0] = m_new0
        m[1] = m_new1
        GP00 = G[0, 0] * P[0, 0] + G[0, 1] * P[1, 0]
        GP01 = G[0, 0] * P[0, 1] + G[0, 1] * P[1, 1]
        GP10 = G[1, 0] * P[0, 0] + G[1, 1] * P[1, 0]
        GP11 = G[1, 0] * P[0, 1] + G[1, 1] * P[1, 1]
        p00 = GP00 * G[0, 0] + GP01 * G[0, 1] + W[0, 0]
        p01 = GP00 * G[1, 0] + GP01 * G[1, 1] + W[0, 1]
        p10 = GP10 * G[0, 0] + GP11 * G[0, 1] + W[1, 0]
        p11 = GP10 * G[1, 0] + GP11 * G[1, 1] + W[1, 1]
        P[0, 0] = p00
        P[0, 1] = 0.5 * (p01 + p10)
        P[1, 0] = P[0, 1]
        P[1, 1] = p11
        if store:
            pm[t, 0] = m[0]
            pm[t, 1] = m[1]
            pP[t] = P

        k = 0
        for i in range(n):
            if not np.isnan(y[t, i]):
                idx[k] = i
                k += 1
        if k == 0:
            if store:
                fm[t] = m
                fP[t] = P
            continue

        # innovation and its covariance
        for a in range(k):
            i = idx[a]
            ZP[a, 0] = Z[t, i, 0] * P[0, 0] + Z[t, i, 1] * P[1, 0]
            ZP[a, 1] = Z[t, i, 0] * P[0, 1] + Z[t, i, 1] * P[1, 1]
            e[a] = y[t, i] - d[t, i] - Z[t, i, 0] * m[0] - Z[t, i, 1] * m[1]
        diag_mean = 0.0
        for a in range(k):
            i = idx[a]
            for b in range(k):
                j = idx[b]
                L[a, b] = ZP[a, 0] * Z[t, j, 0] + ZP[a, 1] * Z[t, j, 1]
            L[a, a] += vdiag[i]
            diag_mean += L[a, a]
        diag_mean /= k
        for a in range(k):
            for b in range(a):
                s = 0.5 * (L[a, b] + L[b, a])
                L[a, b] = s
                L[b, a] = s
        if not _cholesky(L, k, Lc):
            for a in range(k):
                L[a, a] += jitter * diag_mean
            if not _cholesky(L, k, Lc):
                return loglik, t, pm, pP, fm, fP, ev, eL
        if store:
            for a in range(k):
                ev[t, idx[a]] = e[a]
                for b in range(k):
                    eL[t, idx[a], idx[b]] = L[a, b]

        logdet = 0.0
        for a in range(k):
            logdet += 2.0 * math.log(Lc[a, a])
        # quadratic form via forward substitution
        quad = 0.0
        for a in range(k):
            s = e[a]
            for p in range(a):
                s -= Lc[a, p] * col[p]
            col[a] = s / Lc[a, a]
            quad += col[a] * col[a]
        loglik += -0.5 * (k * 1.8378770664093453 + logdet + quad)

        # gain K = P Z' L^{-1}  ->  K' = L^{-1} Z P
        for j in range(2):
            for a in range(k):
                col[a] = ZP[a, j]
            _chol_solve(Lc, k, col)
            for a in range(k):
                LinvZP[a, j] = col[a]
        for a in range(k):
            K[0, a] = LinvZP[a, 0]
            K[1, a] = LinvZP[a, 1]

        for a in range(k):
            m[0] += K[0, a] * e[a]
            m[1] += K[1, a] * e[a]

        # Joseph form: (I - K Z) P (I - K Z)' + K V K'
        A00 = 1.0
        A01 = 0.0
        A10 = 0.0
        A11 = 1.0
        for a in range(k):
            i = idx[a]
            A00 -= K[0, a] * Z[t, i, 0]
            A01 -= K[0, a] * Z[t, i, 1]
            A10 -= K[1, a] * Z[t, i, 0]
            A11 -= K[1, a] * Z[t, i, 1]
        AP00 = A00 * P[0, 0] + A01 * P[1, 0]
        AP01 = A00 * P[0, 1] + A01 * P[1, 1]
        AP10 = A10 * P[0, 0] + A11 * P[1, 0]
        AP11 = A10 * P[0, 1] + A11 * P[1, 1]
        n00 = AP00 * A00 + AP01 * A01
        n01 = AP00 * A10 + AP01 * A11
        n10 = AP10 * A00 + AP11 * A01
        n11 = AP10 * A10 + AP11 * A11
        for a in range(k):
            v = vdiag[idx[a]]
            n00 += K[0, a] * v * K[0, a]
            n01 += K[0, a] * v * K[1, a]
            n10 += K[1, a] * v * K[0, a]
            n11 += K[1, a] * v * K[1, a]
        P[0, 0] = n00
        P[0, 1] = 0.5 * (n01 + n10)
        P[1, 0] = P[0, 1]
        P[1, 1] = n11
        if store:
            fm[t, 0] = m[0]
            fm[t, 1] = m[1]
            fP[t] = P
    return loglik, -1, pm, pP, fm, fP, ev, eL


# -- public API -------------------------------------------------------------


def filter_arrays(y, d, Z, vdiag, c, G, W, init: StateDistribution, store: bool = True):
    """Forward pass on explicit system arrays.

    Parameters
    ----------
    y, d : array (T, n)
        Observations (NaN where missing) and measurement intercepts.
    Z : array (T, n, 2)
        Loadings; row ``i`` of ``Z[t]`` is column ``i`` of ``F`` on date ``t``.
    vdiag : array (n,)
        Measurement-error variances per contract column.
    c, G, W : arrays (2,), (2, 2), (2, 2)
        Transition drift, matrix and noise covariance.
    init : StateDistribution
        Prior for the state one step before the first observation.

    Returns
    -------
    FilterOutput, or just the log-likelihood when ``store`` is False.

    Raises
    ------
    NumericalError
        When an innovation covariance is not positive definite even after
        jitter; ``time_index`` names the date.
    """
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] == 0:
        raise ValueError("y must be a non-empty (T, n) array")
    d = np.ascontiguousarray(np.broadcast_to(d, y.shape), dtype=float)
    Z = np.ascontiguousarray(np.broadcast_to(Z, y.shape + (2,)), dtype=float)
    out = _filter_kernel(
        y,
        d,
        Z,
        np.ascontiguousarray(vdiag, dtype=float),
        np.ascontiguousarray(c, dtype=float),
        np.ascontiguousarray(G, dtype=float),
        np.ascontiguousarray(W, dtype=float),
        np.array(init.mean, dtype=float),
        np.array(init.cov, dtype=float),
        store,
        JITTER,
    )
    loglik, fail_t = out[0], out[1]
    if fail_t >= 0:
        raise NumericalError(
            f"innovation covariance not positive definite at t={fail_t}", time_index=int(fail_t)
        )
    if not math.isfinite(loglik):
        raise NumericalError("log-likelihood is not finite")
    if not store:
        return float(loglik)
    pm, pP, fm, fP, ev, eL = out[2:]
    return FilterOutput(pm, pP, fm, fP, ev, eL, float(loglik), init)


def system_arrays(panel: FuturesPanel, theta: ModelParams):
    """Intercepts ``d`` (T, n) and loadings ``Z`` (T, n, 2) for every date."""
    mats = np.where(panel.observed, panel.maturities, 0.0)
    d = compute_A(theta, mats)
    Z = np.stack([np.exp(-theta.kappa * mats), np.exp(-theta.gamma * mats)], axis=-1)
    d = np.where(panel.observed, d, np.nan)
    return np.atleast_2d(d), Z


def _run(panel, theta, init, store):
    if panel.n_dates == 0:
        raise ValueError("panel has no dates")
    if init is None:
        init = init_state(theta)
    elif isinstance(init, str):
        init = init_state(theta, init)
    tr = build_transition(theta, panel.dt)
    d, Z = system_arrays(panel, theta)
    vdiag = measurement_variances(theta, panel.n_contracts)
    return filter_arrays(panel.log_prices, d, Z, vdiag, tr.c, tr.G, tr.W, init, store=store)


def run_filter(panel: FuturesPanel, theta: ModelParams, init=None) -> FilterOutput:
    """Kalman filter over ``panel``.

    ``init`` is a StateDistribution, one of ``"stationary"``/``"diffuse"``, or
    None for the stationary prior.
    """
    return _run(panel, theta, init, store=True)


def log_likelihood(panel: FuturesPanel, theta: ModelParams, init=None) -> float:
    """Prediction-error log-likelihood of ``panel`` under ``theta``.

    A breakdown of the recursion returns ``-inf`` (and logs a warning) so an
    optimizer can treat the point as infeasible.  Call ``run_filter`` to get
    the exception instead.
    """
    try:
        return _run(panel, theta, init, store=False)
    except NumericalError as exc:
        logger.warning("log-likelihood failed at %s: %s", theta, exc)
        return -math.inf


def run_smoother(panel: FuturesPanel, theta: ModelParams, filt: FilterOutput) -> SmootherOutput:
    """Rauch-Tung-Striebel backward pass over a completed filter run."""
    n_T = panel.n_dates
    if len(filt.filtered_means) != n_T:
        raise ValueError("filter output does not match the panel length")
    G = build_transition(theta, panel.dt).G
    ms = filt.filtered_means.copy()
    Ps = filt.filtered_covs.copy()
    gains = np.zeros((n_T, 2, 2))
    for t in range(n_T - 2, -1, -1):
        P_pred = filt.predicted_covs[t + 1]
        try:
            factor = linalg.cho_factor(P_pred, lower=True)
        except linalg.LinAlgError:
            raise NumericalError(
                f"predicted covariance singular at t={t + 1}", time_index=t + 1
            ) from None
        # J = P_f G' P_pred^{-1}
        J = linalg.cho_solve(factor, G @ filt.filtered_covs[t]).T
        ms[t] = filt.filtered_means[t] + J @ (ms[t + 1] - filt.predicted_means[t + 1])
        P = filt.filtered_covs[t] + J @ (Ps[t + 1] - P_pred) @ J.T
        Ps[t] = 0.5 * (P + P.T)
        gains[t] = J
    return SmootherOutput(ms, Ps, gains)
