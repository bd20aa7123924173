"""Pricing errors of filtered and smoothed states.

States are estimated from the in-sample contracts only (C1-C13 by default)
and then used to price every contract, so the out-of-sample contracts
(C14-C20) measure extrapolation across maturities.  Errors are in log-price
units.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass

import numpy as np

from .data import FuturesPanel
from .kalman import FilterOutput, SmootherOutput, run_filter, run_smoother
from .model import ModelParams, compute_A

NUMBER_FORMAT = "{:.10g}"


def fmt(value) -> str:
    value = float(value)
    return "" if np.isnan(value) else NUMBER_FORMAT.format(value)


@dataclass(frozen=True)
class Split:
    """1-based contract indices used to estimate states and to test pricing."""

    in_sample: tuple = tuple(range(1, 14))
    out_of_sample: tuple = tuple(range(14, 21))

    @classmethod
    def parse(cls, text: str) -> "Split":
        """Parse ``"in=1..13,out=14..20"``; ``out=`` may be omitted."""
        parts = {}
        for item in re.split(r",(?=\s*(?:in|out)=)", text.strip()):
            key, _, spec = item.partition("=")
            key = key.strip()
            if key not in ("in", "out") or not spec:
                raise ValueError(f"bad split {text!r}; expected in=A..B,out=C..D")
            parts[key] = _parse_range(spec)
        if "in" not in parts:
            raise ValueError(f"split {text!r} has no in-sample range")
        return cls(parts["in"], parts.get("out", ()))

    def restrict(self, n_contracts: int) -> "Split":
        keep = lambda idx: tuple(i for i in idx if 1 <= i <= n_contracts)  # noqa: E731
        return Split(keep(self.in_sample), keep(self.out_of_sample))

    def label(self, contract: int) -> str:
        if contract in self.in_sample:
            return "in"
        if contract in self.out_of_sample:
            return "out"
        return ""


def _parse_range(spec: str) -> tuple:
    out = []
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if ".." in chunk:
            a, b = chunk.split("..")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(chunk))
    return tuple(out)


def fitted_log_prices(state_mean, theta: ModelParams, maturities) -> np.ndarray:
    """Noise-free model prices ``d + F' x`` for one state."""
    mats = np.asarray(maturities, dtype=float)
    present = ~np.isnan(mats)
    safe = np.where(present, mats, 0.0)
    chi, xi = np.asarray(state_mean, dtype=float)
    out = compute_A(theta, safe) + np.exp(-theta.kappa * safe) * chi + np.exp(-theta.gamma * safe) * xi
    return np.where(present, out, np.nan)


def fitted_panel(panel: FuturesPanel, theta: ModelParams, means: np.ndarray) -> np.ndarray:
    """Model prices for every quote of ``panel`` from per-date state means."""
    means = np.asarray(means, dtype=float)
    if means.shape != (panel.n_dates, 2):
        raise ValueError(f"state means must have shape ({panel.n_dates}, 2)")
    mats = np.where(panel.observed, panel.maturities, 0.0)
    out = (
        compute_A(theta, mats)
        + np.exp(-theta.kappa * mats) * means[:, :1]
        + np.exp(-theta.gamma * mats) * means[:, 1:]
    )
    return np.where(panel.observed, out, np.nan)


def rmse_by_column(observed: np.ndarray, fitted: np.ndarray) -> np.ndarray:
    """Per-column RMSE over non-missing cells; NaN for an empty column."""
    err = np.asarray(observed) - np.asarray(fitted)
    present = ~np.isnan(err)
    counts = present.sum(axis=0)
    sq = np.where(present, err, 0.0) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, np.sqrt(sq.sum(axis=0) / counts), np.nan)


@dataclass(frozen=True, eq=False)
class RmseReport:
    contracts: tuple  # 1-based
    labels: tuple  # "in", "out" or ""
    filter_rmse: np.ndarray
    smoother_rmse: np.ndarray
    fitted_filter: np.ndarray  # (n_T, n)
    fitted_smoother: np.ndarray
    period: str = ""

    def mean(self, estimator: str, label: str) -> float:
        values = self.filter_rmse if estimator == "filter" else self.smoother_rmse
        picked = [v for v, lab in zip(values, self.labels) if lab == label and not np.isnan(v)]
        return float(np.mean(picked)) if picked else float("nan")

    def rows(self):
        for c, lab, f, s in zip(self.contracts, self.labels, self.filter_rmse, self.smoother_rmse):
            yield c, lab, f, s

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["contract", "split", "filter_rmse", "smoother_rmse"])
            for c, lab, f, s in self.rows():
                writer.writerow([f"C{c}", lab, fmt(f), fmt(s)])

    def to_table(self) -> str:
        """Plain-text table with in-sample rows above out-of-sample rows."""
        title = f"Period {self.period}" if self.period else "Period"
        lines = [f"{title:<28}{'Filter':>18}{'Smoother':>18}"]
        for label, heading in (("in", "In-Sample"), ("out", "Out-of-Sample")):
            first = True
            for c, lab, f, s in self.rows():
                if lab != label:
                    continue
                head = heading if first else ""
                first = False
                lines.append(f"{head:<20}{'C' + str(c):<8}{fmt(f):>18}{fmt(s):>18}")
        return "\n".join(lines) + "\n"


def estimate_states(panel: FuturesPanel, theta: ModelParams, split: Split | None = None, init=None):
    """Filter and smooth on the in-sample contracts of ``panel``."""
    split = (split or Split()).restrict(panel.n_contracts)
    if not split.in_sample:
        raise ValueError("split has no in-sample contracts inside the panel")
    sub = panel.select_contracts([i - 1 for i in split.in_sample])
    filt = run_filter(sub, theta, init)
    return filt, run_smoother(sub, theta, filt)


def rmse_report(
    panel: FuturesPanel,
    theta: ModelParams,
    filt: FilterOutput | None = None,
    smth: SmootherOutput | None = None,
    split: Split | None = None,
    period: str = "",
    init=None,
) -> RmseReport:
    """Per-contract RMSE of filter- and smoother-based prices.

    ``filt`` and ``smth`` must come from the in-sample sub-panel (see
    ``estimate_states``); they are computed here when omitted.
    """
    split = (split or Split()).restrict(panel.n_contracts)
    if filt is None or smth is None:
        filt, smth = estimate_states(panel, theta, split, init)
    if filt.innovations.shape != (panel.n_dates, len(split.in_sample)):
        raise ValueError("filter output was not computed on the in-sample contracts of this panel")
    if smth.smoothed_means.shape[0] != panel.n_dates:
        raise ValueError("smoother output does not match the panel length")
    fit_f = fitted_panel(panel, theta, filt.filtered_means)
    fit_s = fitted_panel(panel, theta, smth.smoothed_means)
    contracts = tuple(range(1, panel.n_contracts + 1))
    return RmseReport(
        contracts=contracts,
        labels=tuple(split.label(c) for c in contracts),
        filter_rmse=rmse_by_column(panel.log_prices, fit_f),
        smoother_rmse=rmse_by_column(panel.log_prices, fit_s),
        fitted_filter=fit_f,
        fitted_smoother=fit_s,
        period=period,
    )


@dataclass(frozen=True, eq=False)
class CrossSection:
    date: np.datetime64
    maturities: np.ndarray
    observed: np.ndarray
    filter_fit: np.ndarray
    smoother_fit: np.ndarray
    S_F: float
    S_S: float

    @property
    def shape(self) -> str:
        return classify_term_structure(self.observed)

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["contract", "maturity", "observed", "filter_fit", "smoother_fit"])
            for i in range(self.observed.size):
                writer.writerow(
                    [
                        i + 1,
                        fmt(self.maturities[i]),
                        fmt(self.observed[i]),
                        fmt(self.filter_fit[i]),
                        fmt(self.smoother_fit[i]),
                    ]
                )


def sum_of_squares(observed, fitted) -> float:
    err = np.asarray(observed, dtype=float) - np.asarray(fitted, dtype=float)
    err = err[~np.isnan(err)]
    return float(err @ err)


def cross_section(
    panel: FuturesPanel,
    theta: ModelParams,
    filt: FilterOutput,
    smth: SmootherOutput,
    date,
) -> CrossSection:
    """Observed and fitted curves on one date with their sums of squared errors."""
    t = panel.date_index(date)
    mats = panel.maturities[t]
    observed = panel.log_prices[t].copy()
    f_fit = fitted_log_prices(filt.filtered_means[t], theta, mats)
    s_fit = fitted_log_prices(smth.smoothed_means[t], theta, mats)
    return CrossSection(
        date=panel.dates[t],
        maturities=mats.copy(),
        observed=observed,
        filter_fit=f_fit,
        smoother_fit=s_fit,
        S_F=sum_of_squares(observed, f_fit),
        S_S=sum_of_squares(observed, s_fit),
    )


def classify_term_structure(observed) -> str:
    """``"backwardation"``, ``"contango"`` or ``"mixed"``.

    Backwardation means prices never rise with maturity and fall at least
    once; contango is the reverse.  Flat and humped curves are mixed.
    """
    y = np.asarray(observed, dtype=float)
    y = y[~np.isnan(y)]
    if y.size < 2:
        raise ValueError("need at least two prices to classify a curve")
    steps = np.diff(y)
    if np.all(steps <= 0) and np.any(steps < 0):
        return "backwardation"
    if np.all(steps >= 0) and np.any(steps > 0):
        return "contango"
    return "mixed"
