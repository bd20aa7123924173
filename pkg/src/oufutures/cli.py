"""Command-line front end.

Subcommands::

    oufutures simulate --theta THETA --output-dir DIR [--n-dates N] [--n-contracts N] ...
    oufutures fit      --input PANEL --output-dir DIR [--grid-points K] [--budget B] ...
    oufutures filter   --input PANEL --theta THETA --output-dir DIR
    oufutures smooth   --input PANEL --theta THETA --output-dir DIR
    oufutures evaluate --input PANEL --theta THETA --output-dir DIR [--split ...] [--dates ...]
    oufutures forecast --theta THETA --state CHI,XI --output-dir DIR [--maturities ...]

A THETA file holds ``name=value`` lines for the ten model parameters.
Failures print one ``error: <category>: <message>`` line on stderr and exit
with the category's code.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import PRICE_FORMATS, load_panel, save_panel
from .errors import EstimationError, NumericalError, PanelFormatError
from .estimation import FitConfig, fit_mle
from .evaluation import Split, cross_section, estimate_states, fitted_log_prices, fmt, rmse_report
from .kalman import INIT_MODES, run_filter, run_smoother
from .model import DEFAULT_DT, PARAM_NAMES, ModelParams
from .simulation import constant_maturities, rolling_maturities, save_states, simulate

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4
EXIT_ESTIMATION = 5


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- theta files --------------------------------------------------------------


def theta_text(theta: ModelParams) -> str:
    return "".join(f"{name}={getattr(theta, name)!r}\n" for name in PARAM_NAMES)


def theta_hash(theta: ModelParams) -> str:
    return hashlib.sha256(theta_text(theta).encode()).hexdigest()[:12]


def read_theta(path) -> ModelParams:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read theta file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in PARAM_NAMES:
            raise InputError(f"{path}:{lineno}: expected <parameter>=<value>, got {line!r}")
        if key in values:
            raise InputError(f"{path}:{lineno}: duplicate parameter {key}")
        try:
            values[key] = float(value)
        except ValueError:
            raise InputError(f"{path}:{lineno}: bad number {value.strip()!r}") from None
    missing = [name for name in PARAM_NAMES if name not in values]
    if missing:
        raise InputError(f"{path}: missing parameters {', '.join(missing)}")
    try:
        return ModelParams(**values)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_theta(theta: ModelParams, path, comment: str) -> None:
    Path(path).write_text(f"# {comment}\n" + theta_text(theta))


def provenance(seed, theta: ModelParams | None) -> str:
    th = theta_hash(theta) if theta is not None else "none"
    return f"oufutures {__version__} seed={seed} theta={th}"


# -- argument parsing ---------------------------------------------------------


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _split(text):
    try:
        return Split.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oufutures", description="Two-factor OU futures model")
    parser.add_argument("--version", action="version", version=f"oufutures {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, needs_input=True, needs_theta=True):
        if needs_input:
            p.add_argument("--input", required=True, help="panel CSV")
            p.add_argument("--prices", choices=PRICE_FORMATS, default="level")
        if needs_theta:
            p.add_argument("--theta", required=True, help="name=value parameter file")
        p.add_argument("--output-dir", required=True)
        p.add_argument("--dt", type=_positive_float, default=DEFAULT_DT)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="simulate a panel and its true states")
    common(p, needs_input=False)
    p.add_argument("--n-dates", type=_positive_int, default=1000)
    p.add_argument("--n-contracts", type=_positive_int, default=20)
    p.add_argument("--maturity-mode", choices=("constant", "rolling"), default="constant")
    p.add_argument("--start", default="2001-01-02")

    p = sub.add_parser("fit", help="maximum-likelihood fit")
    common(p, needs_theta=False)
    p.add_argument("--grid-points", type=_positive_int, default=3)
    p.add_argument("--budget", type=_positive_int, default=2000)
    p.add_argument("--n-starts", type=_positive_int, default=5)
    p.add_argument("--max-iter", type=_positive_int, default=4000)
    p.add_argument("--init", choices=INIT_MODES, default="stationary")

    for name in ("filter", "smooth"):
        p = sub.add_parser(name, help=f"run the Kalman {name}er")
        common(p)
        p.add_argument("--init", choices=INIT_MODES, default="stationary")

    p = sub.add_parser("evaluate", help="RMSE report and cross-sections")
    common(p)
    p.add_argument("--init", choices=INIT_MODES, default="stationary")
    p.add_argument("--split", type=_split, default=Split())
    p.add_argument("--dates", default="", help="comma-separated ISO dates for cross-sections")
    p.add_argument("--period", default="")

    p = sub.add_parser("forecast", help="model log-price curve from a state")
    common(p, needs_input=False)
    p.add_argument("--state", type=_float_list, required=True, help="CHI,XI")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--maturities", type=_float_list, help="comma-separated years")
    group.add_argument("--n-contracts", type=_positive_int, default=20)
    return parser


# -- subcommands --------------------------------------------------------------


def _load(args):
    try:
        return load_panel(args.input, prices=args.prices, dt=args.dt)
    except OSError as exc:
        raise InputError(f"cannot read panel {args.input}: {exc.strerror}") from None


def _write_states(path, dates, means, covs, header_comment):
    with open(path, "w") as fh:
        fh.write(f"# {header_comment}\n")
        fh.write("date,chi,xi,var_chi,cov_chi_xi,var_xi\n")
        for date, m, P in zip(dates, means, covs):
            cells = [str(date)] + [fmt(v) for v in (m[0], m[1], P[0, 0], P[0, 1], P[1, 1])]
            fh.write(",".join(cells) + "\n")


def cmd_simulate(args, out: Path):
    theta = read_theta(args.theta)
    if args.maturity_mode == "constant":
        mats = constant_maturities(args.n_dates, args.n_contracts)
    else:
        mats = rolling_maturities(args.n_dates, args.n_contracts, args.dt)
    sim = simulate(theta, args.n_dates, args.dt, mats, seed=args.seed, start=args.start)
    comment = provenance(args.seed, theta)
    save_panel(sim.panel, out / "panel.csv", comment=comment)
    save_states(sim, out / "states.csv", comment=comment)
    print(f"wrote {sim.panel.n_dates} dates x {sim.panel.n_contracts} contracts to {out / 'panel.csv'}")


def cmd_fit(args, out: Path):
    panel = _load(args)
    config = FitConfig(
        grid_points=args.grid_points,
        budget=args.budget,
        n_starts=args.n_starts,
        max_iter=args.max_iter,
        seed=args.seed,
        init=args.init,
    )
    res = fit_mle(panel, config)
    theta = res.theta_hat
    comment = provenance(args.seed, theta)
    lines = [f"# {comment}", f"loglik={fmt(res.loglik)}", f"converged={str(res.converged).lower()}",
             f"n_starts={res.n_starts}", f"gradient_norm={fmt(res.gradient_norm)}"]
    for i, name in enumerate(PARAM_NAMES):
        lines.append(f"{name}={fmt(getattr(theta, name))}")
    for i, name in enumerate(PARAM_NAMES):
        se = "" if res.std_errors is None else fmt(res.std_errors[i])
        lines.append(f"se_{name}={se}")
    for note in res.warnings:
        lines.append(f"# warning: {note}")
    text = "\n".join(lines) + "\n"
    (out / "fit.txt").write_text(text)
    write_theta(theta, out / "theta.txt", comment)

    def rounded(x):
        return None if x is None or not np.isfinite(x) else float(fmt(x))

    payload = {
        "provenance": comment,
        "loglik": rounded(res.loglik),
        "converged": res.converged,
        "n_starts": res.n_starts,
        "gradient_norm": rounded(res.gradient_norm),
        "theta": {name: rounded(getattr(theta, name)) for name in PARAM_NAMES},
        "std_errors": None
        if res.std_errors is None
        else {name: rounded(v) for name, v in zip(PARAM_NAMES, res.std_errors)},
        "start_trace": [
            {
                "start": {name: rounded(getattr(r.start, name)) for name in PARAM_NAMES},
                "start_loglik": rounded(r.start_loglik),
                "final_loglik": rounded(r.loglik),
            }
            for r in res.start_trace
        ],
        "warnings": res.warnings,
    }
    (out / "fit.json").write_text(json.dumps(payload, indent=2) + "\n")
    sys.stdout.write(text)


def cmd_filter(args, out: Path, smooth=False):
    panel = _load(args)
    theta = read_theta(args.theta)
    filt = run_filter(panel, theta, args.init)
    comment = provenance(args.seed, theta)
    if smooth:
        smth = run_smoother(panel, theta, filt)
        _write_states(out / "smoothed_states.csv", panel.dates, smth.smoothed_means,
                      smth.smoothed_covs, comment)
    else:
        _write_states(out / "filtered_states.csv", panel.dates, filt.filtered_means,
                      filt.filtered_covs, comment)
    (out / "loglik.txt").write_text(f"# {comment}\nloglik={fmt(filt.loglik)}\n")
    print(f"loglik={fmt(filt.loglik)}")


def cmd_evaluate(args, out: Path):
    panel = _load(args)
    theta = read_theta(args.theta)
    split = args.split.restrict(panel.n_contracts)
    filt, smth = estimate_states(panel, theta, split, args.init)
    report = rmse_report(panel, theta, filt, smth, split, period=args.period)
    comment = provenance(args.seed, theta)
    report.to_csv(out / "rmse.csv", comment=comment)
    table = report.to_table()
    (out / "rmse.txt").write_text(f"# {comment}\n" + table)
    sys.stdout.write(table)
    for date in [d.strip() for d in args.dates.split(",") if d.strip()]:
        try:
            cs = cross_section(panel, theta, filt, smth, date)
        except (KeyError, ValueError):
            raise InputError(f"date {date} not in panel") from None
        cs.to_csv(out / f"cross_section_{date}.csv",
                  comment=f"{comment} S_F={fmt(cs.S_F)} S_S={fmt(cs.S_S)} shape={cs.shape}")
        print(f"{date}: S_F={fmt(cs.S_F)} S_S={fmt(cs.S_S)} shape={cs.shape}")


def cmd_forecast(args, out: Path):
    theta = read_theta(args.theta)
    if len(args.state) != 2:
        raise UsageError("--state needs exactly two values CHI,XI")
    if args.maturities:
        mats = np.array(args.maturities)
        if np.any(mats < 0):
            raise UsageError("--maturities must be non-negative")
    else:
        mats = constant_maturities(1, args.n_contracts)[0]
    curve = fitted_log_prices(args.state, theta, mats)
    with open(out / "forecast.csv", "w") as fh:
        fh.write(f"# {provenance(args.seed, theta)}\n")
        fh.write("maturity,log_price\n")
        for T, y in zip(mats, curve):
            fh.write(f"{fmt(T)},{fmt(y)}\n")
    print(f"wrote {mats.size} maturities to {out / 'forecast.csv'}")


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "filter": cmd_filter,
    "smooth": lambda args, out: cmd_filter(args, out, smooth=True),
    "evaluate": cmd_evaluate,
    "forecast": cmd_forecast,
}


def _fail(category, message, code):
    print(f"error: {category}: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except (InputError, PanelFormatError) as exc:
        return _fail("input", exc, EXIT_INPUT)
    except NumericalError as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    except EstimationError as exc:
        return _fail("estimation", exc, EXIT_ESTIMATION)
    except OSError as exc:
        return _fail("io", exc, EXIT_INTERNAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
