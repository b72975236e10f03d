"""``garchqr`` command line: simulate, fit, forecast, diagnose, bootstrap,
backtest and montecarlo.

Settings come from (highest first) command-line flags, a ``key=value``
config file given by ``--config``, and built-in defaults. Exit status is 0
on success, 1 on usage or input errors and 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .backtest import BIENNIAL_SUBPERIODS, BacktestSpec, backtest, best_ecr_tally
from .backtest import METHODS as BACKTEST_METHODS
from .bootstrap import BootstrapError, WeightLaw, run_ensemble, summarize
from .diagnostics import DiagnosticError, portmanteau_test, qacf, weighted_residuals
from .garch import ConstraintViolation, GarchParams, InnovationLaw, ThetaBox, simulate_with_volatility
from .hybrid import fit_hybrid
from .montecarlo import preset
from .qmle import QmleError, fit as qmle_fit
from .quantreg import SolverError
from .resultio import dumps_result, write_result, write_rows
from .series import IngestionError, ReturnSeries, read_csv

log = logging.getLogger("garchqr")

NUMERICAL_ERRORS = (QmleError, SolverError, BootstrapError, DiagnosticError, ConstraintViolation,
                    FloatingPointError, np.linalg.LinAlgError)

DEFAULTS = {
    "orders": "1,1",
    "tau": "0.05",
    "B": None,
    "lags": 6,
    "weights": "W1",
    "level": 0.95,
    "seed": 0,
    "workers": None,
    "w_lo": 1e-8,
    "w_hi": 10.0,
    "rho0": 0.999,
    "unweighted": False,
    "n": 1000,
    "alpha0": 0.4,
    "alpha": "0.4",
    "beta": "0.4",
    "law": "normal",
    "nu": 5.0,
    "burn_in": 500,
    "window": "expanding",
    "method": "hybrid",
    "subperiods": "none",
    "scale": 1.0,
    "delimiter": None,
    "input_kind": "auto",
}

CONFIG_ALIASES = {"K": "lags", "weight_law": "weights", "burn-in": "burn_in",
                  "input-kind": "input_kind", "w-lo": "w_lo", "w-hi": "w_hi"}

B_DEFAULTS = {"forecast": 300, "diagnose": 1000, "bootstrap": 1000, "backtest": 0,
              "montecarlo": 300}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def read_config(path: Path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = CONFIG_ALIASES.get(key, key).replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


class Settings:
    """Flags over config over defaults."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self._args, self._config = args, config

    def __getattr__(self, key):
        v = getattr(self._args, key, None)
        if v is not None and v is not False:
            return v
        if key in self._config:
            return self._config[key]
        if key == "B":
            return B_DEFAULTS.get(self._args.command)
        return DEFAULTS.get(key)

    @property
    def orders(self) -> tuple:
        o = _ints(self.__getattr__("orders"))
        if len(o) != 2 or min(o) < 0:
            raise UsageError("orders must be 'p,q' with nonnegative integers")
        return o

    @property
    def taus(self) -> tuple:
        t = _floats(self.__getattr__("tau"))
        if not t or not all(0 < v < 1 for v in t):
            raise UsageError("tau values must lie in (0, 1)")
        return t

    @property
    def box(self) -> ThetaBox:
        try:
            return ThetaBox(float(self.w_lo), float(self.w_hi), float(self.rho0))
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def int(self, key) -> Optional[int]:
        v = self.__getattr__(key)
        return None if v is None else int(v)

    def float(self, key) -> float:
        return float(self.__getattr__(key))


def _load_series(s: Settings) -> ReturnSeries:
    if not s.input:
        raise UsageError("--input is required")
    return read_csv(s.input, delimiter=s.delimiter, kind=s.input_kind)


def _emit(s: Settings, kind: str, payload: dict) -> None:
    if s.output:
        write_result(s.output, kind, payload)
        log.info("wrote %s", s.output)
    else:
        sys.stdout.write(dumps_result(kind, payload))


def _qmle_payload(f) -> dict:
    return {"theta": f.theta_hat.vector, "std_errors": f.std_errors, "objective": f.objective,
            "converged": f.converged, "iterations": f.iterations}


# -- subcommands -----------------------------------------------------------------------

def cmd_simulate(s: Settings) -> None:
    alpha = _floats(s.alpha)
    beta = _floats(s.beta)
    params = GarchParams(float(s.alpha0), alpha, beta)
    law = InnovationLaw(str(s.law), float(s.nu))
    series, h, h_next = simulate_with_volatility(params, law, s.int("n"), s.int("burn_in"),
                                                 s.int("seed"))
    if not s.output:
        raise UsageError("--output is required for simulate")
    write_rows(s.output, ["return"], ([v] for v in series.values), sep=",")
    if s.plot_data:
        write_rows(s.plot_data, ["t", "return", "h"],
                   ((t + 1, series.values[t], h[t]) for t in range(len(series))))


def cmd_fit(s: Settings) -> None:
    series = _load_series(s)
    first = qmle_fit(series, s.orders, box=s.box)
    levels = []
    for tau in s.taus:
        f = fit_hybrid(series, s.orders, tau, weighted=not _bool(s.unweighted), qmle_fit=first)
        r = qacf(weighted_residuals(f), tau, s.int("lags"))
        levels.append({"tau": tau, "theta_tau": f.theta_tau, "next_q": f.next_q,
                       "in_sample_violation_rate": float(np.mean(series.values < f.in_sample_q)),
                       "qacf": r})
    _emit(s, "fit", {"n": len(series), "orders": s.orders, "qmle": _qmle_payload(first),
                     "levels": levels})


def _fit_one(s: Settings, series: ReturnSeries):
    taus = s.taus
    if len(taus) != 1:
        raise UsageError("this command takes a single --tau")
    return fit_hybrid(series, s.orders, taus[0], weighted=not _bool(s.unweighted), box=s.box)


def cmd_forecast(s: Settings) -> None:
    series = _load_series(s)
    first = qmle_fit(series, s.orders, box=s.box)
    out = []
    for k, tau in enumerate(s.taus):
        f = fit_hybrid(series, s.orders, tau, weighted=not _bool(s.unweighted), qmle_fit=first)
        row = {"tau": tau, "next_q": f.next_q, "ci": None}
        if s.int("B"):
            ens = run_ensemble(series, f, s.int("B"), WeightLaw(s.weights), s.int("lags"),
                               s.int("seed") + k, workers=s.int("workers"))
            row["ci"] = summarize(ens, s.float("level")).quantile_ci
        out.append(row)
    _emit(s, "forecast", {"n": len(series), "orders": s.orders, "forecasts": out})


def cmd_diagnose(s: Settings) -> None:
    series = _load_series(s)
    f = _fit_one(s, series)
    ens = run_ensemble(series, f, s.int("B"), WeightLaw(s.weights), s.int("lags"), s.int("seed"),
                       workers=s.int("workers"))
    rep = portmanteau_test(f, ens, s.int("lags"))
    _emit(s, "diagnose", {"tau": f.tau, "K": rep.K, "r": rep.r, "q_stat": rep.q_stat,
                          "p_value": rep.p_value, "sigma3_star": rep.sigma3_star,
                          "per_lag_bounds": rep.per_lag_bounds,
                          "significant_lags": rep.significant_lags(), "B": ens.B,
                          "weights": ens.law.label})
    if s.plot_data:
        write_rows(s.plot_data, ["lag", "r", "lower", "upper"], rep.plot_rows())


def cmd_bootstrap(s: Settings) -> None:
    series = _load_series(s)
    f = _fit_one(s, series)
    ens = run_ensemble(series, f, s.int("B"), WeightLaw(s.weights), s.int("lags"), s.int("seed"),
                       workers=s.int("workers"))
    sm = summarize(ens, s.float("level"))
    _emit(s, "bootstrap", {"tau": f.tau, "theta_tau": f.theta_tau, "next_q": f.next_q,
                           "cov_matrix": sm.cov_matrix, "std_errors": sm.std_errors,
                           "level": sm.level, "param_ci": sm.param_ci,
                           "quantile_ci": sm.quantile_ci, "B": ens.B, "weights": ens.law.label,
                           "failures": list(ens.failures)})


def _parse_subperiods(text: str) -> tuple:
    text = str(text).strip()
    if text in ("", "none"):
        return ()
    if text == "biennial":
        return BIENNIAL_SUBPERIODS
    out = []
    for part in text.split(";"):
        try:
            label, a, b = part.split(":")
            out.append((label, date.fromisoformat(a), date.fromisoformat(b)))
        except ValueError:
            raise UsageError(f"bad subperiod {part!r}; use label:YYYY-MM-DD:YYYY-MM-DD") from None
    return tuple(out)


def _start_index(text: str, series: ReturnSeries) -> int:
    text = str(text)
    try:
        return int(text)
    except ValueError:
        pass
    try:
        first = date.fromisoformat(text)
    except ValueError:
        raise UsageError(f"--start must be an index or a YYYY-MM-DD date, got {text!r}") from None
    if series.dates is None:
        raise UsageError("a date --start needs a dated input series")
    for i, d in enumerate(series.dates):
        if isinstance(d, date) and d >= first:
            return i
    raise UsageError(f"no observation on or after {first}")


def cmd_backtest(s: Settings) -> None:
    series = _load_series(s)
    if s.start is None:
        raise UsageError("--start is required for backtest")
    start = _start_index(s.start, series)
    methods = BACKTEST_METHODS if s.method == "all" else tuple(str(s.method).split(","))
    subs = _parse_subperiods(s.subperiods)
    reports = []
    t0 = time.perf_counter()
    for m in methods:
        spec = BacktestSpec(start, s.taus, m, str(s.window), s.int("B") or 0, s.float("level"),
                            str(s.weights), s.orders, subs, s.int("seed"), s.int("workers"))
        reports.append(backtest(series, spec))
    payload = {"reports": [r.to_dict() for r in reports],
               "best_ecr_tally": best_ecr_tally(reports) if len(reports) > 1 else None,
               "seconds": time.perf_counter() - t0}
    _emit(s, "backtest", payload)
    if s.plot_data:
        rep = reports[0]
        rows = []
        for tau, lv in rep.levels.items():
            for j, i in enumerate(lv.targets):
                stamp = series.dates[i] if series.dates is not None else i
                lo, hi = (lv.ci_bands[j] if lv.ci_bands is not None else (np.nan, np.nan))
                rows.append((tau, stamp, series.values[i], lv.forecasts[j], lo, hi))
        write_rows(s.plot_data, ["tau", "date", "return", "forecast", "lower", "upper"], rows)


def cmd_montecarlo(s: Settings) -> None:
    if not s.preset:
        raise UsageError("--preset is required for montecarlo")
    overrides = {"seed": s.int("seed"), "workers": s.int("workers")}
    explicit_b = s._args.B if s._args.B is not None else s._config.get("B")
    if explicit_b is not None:
        overrides["B"] = int(explicit_b)
    try:
        jobs = preset(str(s.preset), float(s.scale), **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cells, tables = [], []
    for runner, spec in jobs:
        res = runner(spec)
        cell = {"runner": runner.__name__, "params": spec.params.vector, "law": asdict(spec.law),
                "n": spec.n, "tau": spec.tau, "reps_used": res.reps_used,
                "failures": list(res.failures), "seconds": res.seconds}
        for key in ("bias_in", "mse_in", "bias_out", "mse_out", "rejection_rate", "iqr_weighted",
                    "iqr_unweighted", "coverage", "bias", "esd", "asd", "r_bias", "r_esd", "r_asd"):
            if hasattr(res, key):
                cell[key] = getattr(res, key)
        cells.append(cell)
        if hasattr(res, "table"):
            header = f"# {runner.__name__} params={tuple(spec.params.vector)} law={spec.law.kind} n={spec.n} tau={spec.tau}"
            tables.append(header + "\n" + res.table())
    _emit(s, "montecarlo", {"preset": s.preset, "scale": float(s.scale), "cells": cells})
    if s.table:
        Path(s.table).write_text("\n".join(tables))


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "diagnose": cmd_diagnose,
    "bootstrap": cmd_bootstrap,
    "backtest": cmd_backtest,
    "montecarlo": cmd_montecarlo,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="garchqr", description="Hybrid quantile estimation for GARCH models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(sp, data=True, model=True):
        sp.add_argument("--config", help="key=value settings file (flags override it)")
        sp.add_argument("--output", "-o", help="result file (JSON); stdout when omitted")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, help="worker processes (default: $GARCHQR_WORKERS or 1)")
        sp.add_argument("--log-level", default="WARNING")
        if data:
            sp.add_argument("--input", "-i", help="CSV of date,price rows or a return column")
            sp.add_argument("--delimiter")
            sp.add_argument("--input-kind", choices=("auto", "returns", "prices"))
        if model:
            sp.add_argument("--orders", help="p,q (default 1,1)")
            sp.add_argument("--tau", help="quantile level(s), comma separated")
            sp.add_argument("--unweighted", action="store_true", default=None,
                            help="unit weights in the quantile regression")
            sp.add_argument("--w-lo", dest="w_lo", type=float)
            sp.add_argument("--w-hi", dest="w_hi", type=float)
            sp.add_argument("--rho0", type=float)
            sp.add_argument("--lags", "-K", type=int, help="QACF lags (default 6)")
            sp.add_argument("--B", type=int, help="bootstrap replicates")
            sp.add_argument("--weights", help="weight law W1/W2/W3 (exponential, rademacher02, mammen)")
            sp.add_argument("--level", type=float, help="confidence level (default 0.95)")
        sp.add_argument("--plot-data", help="delimited plot-data file")

    sp = sub.add_parser("simulate", help="simulate a GARCH series to CSV")
    common(sp, data=False, model=False)
    for name in ("--alpha0",):
        sp.add_argument(name, type=float)
    sp.add_argument("--alpha", help="ARCH coefficients, comma separated")
    sp.add_argument("--beta", help="GARCH coefficients, comma separated")
    sp.add_argument("--law", choices=("normal", "student"))
    sp.add_argument("--nu", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--burn-in", dest="burn_in", type=int)

    for name, text in (("fit", "QMLE and quantile regression estimates"),
                       ("forecast", "one-step conditional quantile with bootstrap interval"),
                       ("diagnose", "residual QACF portmanteau test"),
                       ("bootstrap", "bootstrap covariance and confidence intervals")):
        common(sub.add_parser(name, help=text))

    sp = sub.add_parser("backtest", help="rolling forecasts and empirical coverage")
    common(sp)
    sp.add_argument("--start", help="first forecast target: 0-based index or YYYY-MM-DD")
    sp.add_argument("--method", help=f"one of {', '.join(BACKTEST_METHODS)}, comma list, or 'all'")
    sp.add_argument("--window", choices=("expanding", "fixed"))
    sp.add_argument("--subperiods", help="'biennial' (2010-2016 in two-year windows), 'none' or label:start:end;...")

    sp = sub.add_parser("montecarlo", help="run a simulation study preset")
    common(sp, data=False, model=False)
    sp.add_argument("--preset", choices=("table1", "table2", "table4", "figure3", "coverage"))
    sp.add_argument("--scale", type=float, help="multiplier on replicate counts")
    sp.add_argument("--B", type=int, help="bootstrap replicates")
    sp.add_argument("--table", help="write the delimited summary tables here")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = read_config(Path(args.config)) if args.config else {}
        COMMANDS[args.command](Settings(args, config))
    except (UsageError, IngestionError, FileNotFoundError) as exc:
        print(f"garchqr {args.command}: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"garchqr {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"garchqr {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
