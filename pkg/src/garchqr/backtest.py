"""Rolling one-step-ahead quantile forecasts and empirical coverage rates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Optional, Sequence

import numpy as np

from . import baselines as bl
from ._parallel import map_ordered
from .bootstrap import WeightLaw, run_ensemble, summarize
from .hybrid import fit_hybrid
from .qmle import fit as qmle_fit
from .series import ReturnSeries

__all__ = [
    "BacktestSpec",
    "BacktestReport",
    "LevelReport",
    "backtest",
    "best_ecr_tally",
    "empirical_coverage",
    "BIENNIAL_SUBPERIODS",
    "METHODS",
]

log = logging.getLogger(__name__)

METHODS = ("hybrid", "qgarch1", "qgarch2", "caviar", "riskmetrics")

#: The four evaluation windows used for the 2010-2016 index backtests.
BIENNIAL_SUBPERIODS = (
    ("2010-2011", date(2010, 1, 1), date(2011, 12, 31)),
    ("2012-2013", date(2012, 1, 1), date(2013, 12, 31)),
    ("2014-2015", date(2014, 1, 1), date(2015, 12, 31)),
    ("2016-end", date(2016, 1, 1), date(2016, 12, 31)),
)


@dataclass(frozen=True)
class BacktestSpec:
    """Rolling-forecast protocol.

    ``start_index`` is the 0-based index of the first forecast target, so the
    first estimation sample is ``x[:start_index]``. With ``window="fixed"``
    every estimation sample has length ``start_index``; with ``"expanding"``
    it grows by one per origin. ``B=0`` skips the bootstrap bands.
    """

    start_index: int
    taus: tuple = (0.05,)
    method: str = "hybrid"
    window: str = "expanding"
    B: int = 0
    ci_level: float = 0.95
    weight_law: str = "W1"
    orders: tuple = (1, 1)
    subperiods: tuple = ()
    seed: int = 0
    workers: Optional[int] = None
    min_length: int = 100

    def __post_init__(self):
        if self.window not in ("expanding", "fixed"):
            raise ValueError("window must be 'expanding' or 'fixed'")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.start_index < self.min_length:
            raise ValueError(f"start_index must be at least {self.min_length}")
        object.__setattr__(self, "taus", tuple(float(t) for t in np.atleast_1d(self.taus)))
        for t in self.taus:
            if not 0 < t < 1:
                raise ValueError(f"tau must lie in (0, 1), got {t}")
        if self.B and self.B < 2:
            raise ValueError("B must be 0 (no bands) or at least 2")


@dataclass(frozen=True)
class LevelReport:
    tau: float
    targets: np.ndarray
    forecasts: np.ndarray
    ci_bands: Optional[np.ndarray]
    violations: np.ndarray
    ecr: float
    subperiod_ecr: dict
    skipped: tuple = ()

    @property
    def count(self) -> int:
        return int(np.sum(np.isfinite(self.forecasts)))


@dataclass(frozen=True)
class BacktestReport:
    method: str
    spec: BacktestSpec
    levels: dict = field(default_factory=dict)

    def level(self, tau: float) -> LevelReport:
        return self.levels[float(tau)]

    def to_dict(self) -> dict:
        def arr(a):
            if a is None:
                return None
            return [None if not np.isfinite(v) else float(v) for v in np.ravel(a)]
        out = {"method": self.method, "spec": _spec_dict(self.spec), "levels": []}
        for tau, lv in self.levels.items():
            out["levels"].append({
                "tau": tau,
                "targets": [int(i) for i in lv.targets],
                "forecasts": arr(lv.forecasts),
                "ci_bands": arr(lv.ci_bands),
                "violations": [int(i) for i in lv.violations],
                "ecr": lv.ecr,
                "subperiod_ecr": lv.subperiod_ecr,
                "skipped": [[int(i), msg] for i, msg in lv.skipped],
            })
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BacktestReport":
        def arr(a, shape=None):
            if a is None:
                return None
            v = np.array([np.nan if x is None else x for x in a], dtype=float)
            return v.reshape(shape) if shape is not None else v
        spec = _spec_from_dict(d["spec"])
        levels = {}
        for lv in d["levels"]:
            targets = np.array(lv["targets"], dtype=int)
            bands = arr(lv["ci_bands"], (-1, 2)) if lv["ci_bands"] is not None else None
            levels[float(lv["tau"])] = LevelReport(
                float(lv["tau"]), targets, arr(lv["forecasts"]), bands,
                np.array(lv["violations"], dtype=int), lv["ecr"],
                {k: v for k, v in lv["subperiod_ecr"].items()},
                tuple((int(i), msg) for i, msg in lv["skipped"]))
        return cls(d["method"], spec, levels)


def _spec_dict(spec: BacktestSpec) -> dict:
    return {
        "start_index": spec.start_index, "taus": list(spec.taus), "method": spec.method,
        "window": spec.window, "B": spec.B, "ci_level": spec.ci_level,
        "weight_law": spec.weight_law, "orders": list(spec.orders),
        "subperiods": [[lab, str(a), str(b)] for lab, a, b in spec.subperiods],
        "seed": spec.seed, "min_length": spec.min_length,
    }


def _spec_from_dict(d: dict) -> BacktestSpec:
    subs = tuple((lab, _as_date(a), _as_date(b)) for lab, a, b in d["subperiods"])
    return BacktestSpec(d["start_index"], tuple(d["taus"]), d["method"], d["window"], d["B"],
                        d["ci_level"], d["weight_law"], tuple(d["orders"]), subs, d["seed"],
                        None, d["min_length"])


def _as_date(v):
    if isinstance(v, date):
        return v
    try:
        return date.fromisoformat(str(v))
    except ValueError:
        return int(v)


def _origin(args):
    """Forecasts (and optional bands) for target index ``i`` from the
    estimation sample ending at ``i - 1``."""
    series, spec, i = args
    lo = 0 if spec.window == "expanding" else i - spec.start_index
    sample = series.window(lo, i)
    out = []
    try:
        if spec.method == "hybrid":
            first = qmle_fit(sample, spec.orders)
        for k, tau in enumerate(spec.taus):
            band = (np.nan, np.nan)
            if spec.method == "hybrid":
                f = fit_hybrid(sample, spec.orders, tau, qmle_fit=first)
                q = f.next_q
                if spec.B:
                    seed = int(np.random.SeedSequence(spec.seed, spawn_key=(i, k))
                               .generate_state(1, dtype=np.uint32)[0])
                    ens = run_ensemble(sample, f, spec.B, WeightLaw(spec.weight_law), seed=seed,
                                       workers=1)
                    band = summarize(ens, spec.ci_level).quantile_ci
            elif spec.method == "qgarch1":
                q = bl.qgarch_sieve(sample, tau, variant="single", orders=spec.orders).next_q
            elif spec.method == "qgarch2":
                q = bl.qgarch_sieve(sample, tau, variant="multi", orders=spec.orders).next_q
            elif spec.method == "caviar":
                q = bl.caviar_indirect_garch(sample, tau, seed=spec.seed + i).next_q
            else:
                q = bl.riskmetrics(sample, tau).next_q
            out.append((float(q), band))
        return out, None
    except Exception as exc:  # per-origin failures are recorded, not fatal
        return None, f"{type(exc).__name__}: {exc}"


def _in_period(stamp, lo, hi) -> bool:
    try:
        return lo <= stamp <= hi
    except TypeError:
        return False


def empirical_coverage(values, forecasts) -> tuple:
    """Violation mask and empirical coverage rate.

    A violation is a value strictly below its forecast; non-finite forecasts
    (skipped origins) are neither violations nor counted in the rate.
    """
    x = np.asarray(values, dtype=float)
    fc = np.asarray(forecasts, dtype=float)
    ok = np.isfinite(fc)
    mask = ok & (x < np.where(ok, fc, -np.inf))
    ecr = float(mask.sum() / ok.sum()) if ok.any() else float("nan")
    return mask, ecr


def backtest(series: ReturnSeries, spec: BacktestSpec) -> BacktestReport:
    """Refit at every origin and forecast the next observation.

    A violation is a target with ``x_t`` strictly below its forecast; the
    empirical coverage rate (ECR) is violations over non-skipped forecasts.
    Origins whose fit fails are skipped with a warning and leave the
    denominator. Subperiods are ``(label, start, end)`` inclusive ranges of
    dates (when the series carries dates) or of target indices.
    """
    n = len(series)
    if spec.start_index >= n:
        raise ValueError(f"start_index {spec.start_index} leaves nothing to forecast (n={n})")
    targets = np.arange(spec.start_index, n)
    results = map_ordered(_origin, [(series, spec, int(i)) for i in targets], spec.workers,
                          chunksize=16)
    x = series.values
    stamps = series.dates
    levels = {}
    for k, tau in enumerate(spec.taus):
        fc = np.full(targets.size, np.nan)
        bands = np.full((targets.size, 2), np.nan) if spec.B else None
        skipped = []
        for j, (res, err) in enumerate(results):
            if res is None:
                skipped.append((int(targets[j]), err))
                continue
            fc[j] = res[k][0]
            if bands is not None:
                bands[j] = res[k][1]
        for i, err in skipped:
            log.warning("origin for target %d skipped: %s", i, err)
        ok = np.isfinite(fc)
        viol_mask, ecr = empirical_coverage(x[targets], fc)
        violations = targets[viol_mask]
        sub = {}
        for label, a, b in spec.subperiods:
            keys = [stamps[i] if stamps is not None and not isinstance(a, int) else int(i)
                    for i in targets]
            inside = np.array([_in_period(s, a, b) for s in keys], dtype=bool) & ok
            sub[label] = float(viol_mask[inside].sum() / inside.sum()) if inside.any() else float("nan")
        levels[tau] = LevelReport(tau, targets, fc, bands, violations, ecr, sub, tuple(skipped))
    return BacktestReport(spec.method, spec, levels)


def best_ecr_tally(reports: Sequence[BacktestReport]) -> dict:
    """How often each method's ECR is closest to the nominal level, over all
    levels and over the overall period plus every subperiod; ties credit
    every tied method."""
    tally = {r.method: 0 for r in reports}
    if not reports:
        return tally
    for tau in reports[0].levels:
        cells = ["overall"] + list(reports[0].levels[tau].subperiod_ecr)
        for cell in cells:
            dist = {}
            for r in reports:
                lv = r.levels[tau]
                v = lv.ecr if cell == "overall" else lv.subperiod_ecr.get(cell, np.nan)
                if np.isfinite(v):
                    dist[r.method] = round(abs(v - tau), 12)
            if dist:
                best = min(dist.values())
                for m, dv in dist.items():
                    if dv == best:
                        tally[m] += 1
    return tally
