"""Futures panels and their CSV layout.

A panel file has one header line ``date,price_1,...,price_n,mat_1,...,mat_n``
followed by one row per trading date.  Dates are ISO-8601, maturities are in
years and an empty cell marks a missing quote; a price and its maturity must be
missing together.  Lines starting with ``#`` are comments.

Prices are stored as levels by default and log-transformed on load.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PanelFormatError
from .model import DEFAULT_DT

PRICE_FORMATS = ("level", "log")


@dataclass(frozen=True, eq=False)
class FuturesPanel:
    """Log futures prices with the maturity of every quote.

    ``log_prices`` and ``maturities`` are ``(n_dates, n_contracts)`` arrays
    with NaN where a quote is missing.  ``dt`` is the step between consecutive
    rows in years; every row is one step apart whatever the calendar gap.
    """

    dates: np.ndarray
    log_prices: np.ndarray
    maturities: np.ndarray
    dt: float = DEFAULT_DT

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]").reshape(-1)
        y = np.array(self.log_prices, dtype=float, ndmin=2)
        mats = np.array(self.maturities, dtype=float, ndmin=2)
        if dates.size == 0:
            n = y.shape[-1] if y.ndim == 2 else 0
            y = y.reshape(0, n)
            mats = mats.reshape(0, n)
        if y.shape != mats.shape or y.shape[0] != dates.size:
            raise ValueError(
                f"shape mismatch: {dates.size} dates, prices {y.shape}, maturities {mats.shape}"
            )
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if dates.size > 1 and np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            bad = int(np.argmax(np.diff(dates) <= np.timedelta64(0, "D"))) + 1
            raise ValueError(f"dates must be strictly increasing (row {bad})")
        missing = np.isnan(y)
        if np.any(missing != np.isnan(mats)):
            raise ValueError("missing prices and missing maturities must coincide")
        if np.any(np.isinf(y)) or np.any(np.isinf(mats)):
            raise ValueError("prices and maturities must be finite where present")
        if np.any(mats[~missing] < 0):
            raise ValueError("maturities must be non-negative")
        for t in range(mats.shape[0]):
            row = mats[t][~missing[t]]
            if np.any(np.diff(row) <= 0):
                raise ValueError(f"maturities must increase across contracts (row {t})")
        y.setflags(write=False)
        mats.setflags(write=False)
        dates.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "log_prices", y)
        object.__setattr__(self, "maturities", mats)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_dates(self) -> int:
        return self.log_prices.shape[0]

    @property
    def n_contracts(self) -> int:
        return self.log_prices.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.log_prices)

    def select_contracts(self, columns) -> "FuturesPanel":
        """Sub-panel made of the given zero-based contract columns, in order."""
        columns = list(columns)
        return FuturesPanel(
            self.dates, self.log_prices[:, columns], self.maturities[:, columns], self.dt
        )

    def select_dates(self, rows) -> "FuturesPanel":
        rows = np.asarray(rows)
        return FuturesPanel(
            self.dates[rows], self.log_prices[rows], self.maturities[rows], self.dt
        )

    def date_index(self, date) -> int:
        hits = np.flatnonzero(self.dates == np.datetime64(date, "D"))
        if hits.size == 0:
            raise KeyError(f"date {date} not in panel")
        return int(hits[0])

    def allclose(self, other: "FuturesPanel", atol: float = 1e-12) -> bool:
        """Same dates and missing masks, numeric fields equal within ``atol``."""
        return (
            self.log_prices.shape == other.log_prices.shape
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.observed, other.observed)
            and np.allclose(self.log_prices, other.log_prices, rtol=0, atol=atol, equal_nan=True)
            and np.allclose(self.maturities, other.maturities, rtol=0, atol=atol, equal_nan=True)
            and abs(self.dt - other.dt) <= atol
        )


def panel_header(n: int) -> list[str]:
    return ["date"] + [f"price_{i}" for i in range(1, n + 1)] + [f"mat_{i}" for i in range(1, n + 1)]


def _parse_header(header, lineno):
    if not header or header[0].strip() != "date":
        raise PanelFormatError("first header column must be 'date'", row=lineno)
    if (len(header) - 1) % 2 != 0 or len(header) < 3:
        raise PanelFormatError("header must list price_1..price_n then mat_1..mat_n", row=lineno)
    n = (len(header) - 1) // 2
    expected = panel_header(n)
    for got, want in zip(header, expected):
        if got.strip() != want:
            raise PanelFormatError(f"expected header {want!r}, found {got.strip()!r}", row=lineno)
    return n


def _parse_float(cell, lineno, column):
    cell = cell.strip()
    if cell == "":
        return math.nan
    try:
        value = float(cell)
    except ValueError:
        raise PanelFormatError(f"cannot parse number {cell!r}", row=lineno, column=column) from None
    if not math.isfinite(value):
        raise PanelFormatError(f"non-finite value {cell!r}", row=lineno, column=column)
    return value


def load_panel(path, prices: str = "level", dt: float = DEFAULT_DT) -> FuturesPanel:
    """Read and validate a panel file.

    Parameters
    ----------
    path : str or Path
        CSV file in the layout described in the module docstring.
    prices : {"level", "log"}
        Whether the price columns hold price levels (log-transformed here) or
        log prices already.
    dt : float
        Step between consecutive rows in years.

    Raises
    ------
    PanelFormatError
        On a malformed header, unparsable cell, non-increasing date,
        non-positive price under the log transform, price/maturity mask
        mismatch or non-increasing maturities within a row.
    """
    if prices not in PRICE_FORMATS:
        raise ValueError(f"prices must be one of {PRICE_FORMATS}, got {prices!r}")
    header = None
    dates, y_rows, m_rows = [], [], []
    prev_date = None
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or (record[0].lstrip().startswith("#")):
                continue
            if header is None:
                header = record
                n = _parse_header(header, lineno)
                continue
            if len(record) != 2 * n + 1:
                raise PanelFormatError(
                    f"expected {2 * n + 1} cells, found {len(record)}", row=lineno
                )
            try:
                date = np.datetime64(record[0].strip(), "D")
            except ValueError:
                raise PanelFormatError(
                    f"bad ISO-8601 date {record[0]!r}", row=lineno, column="date"
                ) from None
            if prev_date is not None and date <= prev_date:
                raise PanelFormatError("dates must be strictly increasing", row=lineno, column="date")
            prev_date = date
            y = np.empty(n)
            m = np.empty(n)
            for i in range(n):
                pname, mname = header[1 + i].strip(), header[1 + n + i].strip()
                price = _parse_float(record[1 + i], lineno, pname)
                mat = _parse_float(record[1 + n + i], lineno, mname)
                if math.isnan(price) != math.isnan(mat):
                    raise PanelFormatError(
                        "price and maturity must be missing together", row=lineno, column=pname
                    )
                if not math.isnan(mat) and mat < 0:
                    raise PanelFormatError("negative maturity", row=lineno, column=mname)
                if prices == "level" and not math.isnan(price):
                    if price <= 0:
                        raise PanelFormatError(
                            f"non-positive price {price!r} cannot be log-transformed",
                            row=lineno,
                            column=pname,
                        )
                    price = math.log(price)
                y[i] = price
                m[i] = mat
            present = m[~np.isnan(m)]
            if np.any(np.diff(present) <= 0):
                raise PanelFormatError("maturities must increase across contracts", row=lineno)
            dates.append(date)
            y_rows.append(y)
            m_rows.append(m)
    if header is None:
        raise PanelFormatError("file has no header line")
    return FuturesPanel(
        np.array(dates, dtype="datetime64[D]"),
        np.array(y_rows, dtype=float).reshape(len(y_rows), n),
        np.array(m_rows, dtype=float).reshape(len(m_rows), n),
        dt,
    )


def _fmt(value: float) -> str:
    return "" if math.isnan(value) else repr(float(value))


def save_panel(panel: FuturesPanel, path, prices: str = "level", comment: str | None = None) -> None:
    """Write ``panel`` so that ``load_panel`` reads it back unchanged.

    Numbers are written with full ``repr`` precision.  ``comment`` becomes a
    leading ``#`` line when given.
    """
    if prices not in PRICE_FORMATS:
        raise ValueError(f"prices must be one of {PRICE_FORMATS}, got {prices!r}")
    values = np.exp(panel.log_prices) if prices == "level" else panel.log_prices
    with open(Path(path), "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(panel_header(panel.n_contracts))
        for t in range(panel.n_dates):
            writer.writerow(
                [str(panel.dates[t])]
                + [_fmt(v) for v in values[t]]
                + [_fmt(v) for v in panel.maturities[t]]
            )
