"""Monte Carlo studies: estimator comparison, bootstrap inference, efficiency
of the weighted estimator, portmanteau size/power and interval coverage.

Each replicate simulates from its own seed stream and every method in a
replicate sees the same series. Replicates may run in worker processes;
results are reduced in replicate order so the output does not depend on
the worker count.
"""

from __future__ import annotations

import io
import logging
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import baselines as bl
from ._parallel import map_ordered
from .bootstrap import WeightLaw, replicate_rng, run_ensemble, summarize
from .diagnostics import DEFAULT_LAGS, portmanteau_test, qacf, weighted_residuals
from .garch import GarchParams, InnovationLaw, simulate_with_volatility
from .hybrid import fit_hybrid
from .qmle import fit as qmle_fit
from .series import transform

__all__ = [
    "ExperimentSpec",
    "ComparisonResult",
    "InferenceResult",
    "SizePowerResult",
    "EfficiencyResult",
    "CoverageResult",
    "MODEL_1",
    "MODEL_2",
    "INFERENCE_MODEL",
    "run_comparison",
    "run_inference_study",
    "run_size_power",
    "run_efficiency",
    "run_coverage",
    "departure_params",
]

log = logging.getLogger(__name__)

MODEL_1 = GarchParams(0.1, (0.8,), (0.15,))
MODEL_2 = GarchParams(0.1, (0.15,), (0.8,))
INFERENCE_MODEL = GarchParams(0.4, (0.4,), (0.4,))
METHODS = ("hybrid", "qgarch1", "qgarch2", "caviar", "riskmetrics")


def departure_params(d: float, alpha0: float = 0.4, alpha1: float = 0.2,
                     beta1: float = 0.2) -> GarchParams:
    """``h_t = alpha0 + alpha1 x_{t-1}^2 + d x_{t-4}^2 + beta1 h_{t-1}``."""
    if d < 0:
        raise ValueError("departure d must be nonnegative")
    return GarchParams(alpha0, (alpha1, 0.0, 0.0, float(d)), (beta1,))


@dataclass(frozen=True)
class ExperimentSpec:
    params: GarchParams = MODEL_1
    law: InnovationLaw = InnovationLaw()
    n: int = 1000
    reps: int = 200
    tau: float = 0.05
    methods: tuple = ("hybrid", "qgarch1", "qgarch2")
    B: int = 300
    weight_laws: tuple = ("W1",)
    K: int = DEFAULT_LAGS
    seed: int = 0
    orders: tuple = (1, 1)
    burn_in: int = 500
    workers: Optional[int] = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        object.__setattr__(self, "weight_laws",
                           tuple(WeightLaw(w).label for w in self.weight_laws))

    def theta_tau0(self) -> np.ndarray:
        """True quantile-regression coefficients ``T(Q_tau(eta)) theta``."""
        return transform(self.law.quantile(self.tau)) * self.params.vector

    def sample(self, r: int):
        rng = replicate_rng(self.seed, r)
        return simulate_with_volatility(self.params, self.law, self.n, self.burn_in, rng)

    def boot_seed(self, r: int, j: int = 0) -> int:
        ss = np.random.SeedSequence(self.seed, spawn_key=(r, 1, j))
        return int(ss.generate_state(1, dtype=np.uint32)[0])


def _run(kind: str, spec: ExperimentSpec):
    t0 = time.perf_counter()
    out = map_ordered(_replicate, [(kind, spec, r) for r in range(spec.reps)], spec.workers)
    good = [(r, res) for r, (res, err) in enumerate(out) if err is None]
    failures = tuple((r, err) for r, (res, err) in enumerate(out) if err is not None)
    for r, err in failures:
        log.warning("%s replicate %d (seed %d) failed: %s", kind, r, spec.seed, err)
    if not good:
        raise RuntimeError(f"every {kind} replicate failed; first error: {failures[0][1]}")
    return good, failures, time.perf_counter() - t0


def _replicate(args):
    kind, spec, r = args
    try:
        return _WORKERS[kind](spec, r), None
    except Exception as exc:  # isolate per-replicate failures
        return None, f"{type(exc).__name__}: {exc}"


# -- estimator comparison -------------------------------------------------------

@dataclass(frozen=True)
class ComparisonResult:
    spec: ExperimentSpec
    methods: tuple
    bias_in: dict
    mse_in: dict
    var_in: dict
    bias_out: dict
    mse_out: dict
    reps_used: int
    failures: tuple
    seconds: float

    def table(self, sep: str = "\t") -> str:
        """Delimited table: bias is printed x10 as labelled in the header."""
        buf = io.StringIO()
        buf.write(sep.join(["method", "bias_in_x10", "mse_in", "bias_out_x10", "mse_out"]) + "\n")
        for m in self.methods:
            buf.write(sep.join([m, f"{10 * self.bias_in[m]:.3f}", f"{self.mse_in[m]:.3f}",
                                f"{10 * self.bias_out[m]:.3f}", f"{self.mse_out[m]:.3f}"]) + "\n")
        return buf.getvalue()


def _comparison_rep(spec: ExperimentSpec, r: int):
    series, h, h_next = spec.sample(r)
    qe = spec.law.quantile(spec.tau)
    true_in = np.sqrt(h) * qe
    true_out = np.sqrt(h_next) * qe
    rows = {}
    for m in spec.methods:
        if m == "hybrid":
            f = fit_hybrid(series, spec.orders, spec.tau)
        elif m == "qgarch1":
            f = bl.qgarch_sieve(series, spec.tau, variant="single", orders=spec.orders)
        elif m == "qgarch2":
            f = bl.qgarch_sieve(series, spec.tau, variant="multi", orders=spec.orders)
        elif m == "caviar":
            f = bl.caviar_indirect_garch(series, spec.tau, seed=spec.boot_seed(r))
        else:
            f = bl.riskmetrics(series, spec.tau)
        e = f.in_sample_q - true_in
        rows[m] = (float(e.mean()), float(np.mean(e * e)), float(f.next_q - true_out))
    return rows


def run_comparison(spec: ExperimentSpec) -> ComparisonResult:
    """Bias and MSE of each method's conditional quantiles against the truth
    ``sqrt(h_t) Q_tau(eta)``; in-sample errors are averaged over t within a
    replicate and then over replicates."""
    good, failures, secs = _run("comparison", spec)
    b_in, m_in, v_in, b_out, m_out = {}, {}, {}, {}, {}
    for m in spec.methods:
        arr = np.array([res[m] for _, res in good])
        b_in[m] = float(arr[:, 0].mean())
        m_in[m] = float(arr[:, 1].mean())
        v_in[m] = m_in[m] - b_in[m] ** 2
        b_out[m] = float(arr[:, 2].mean())
        m_out[m] = float(np.mean(arr[:, 2] ** 2))
    return ComparisonResult(spec, tuple(spec.methods), b_in, m_in, v_in, b_out, m_out,
                            len(good), failures, secs)


# -- bootstrap inference ---------------------------------------------------------

@dataclass(frozen=True)
class InferenceResult:
    spec: ExperimentSpec
    laws: tuple
    bias: np.ndarray
    esd: np.ndarray
    asd: dict
    r_bias: np.ndarray
    r_esd: np.ndarray
    r_asd: dict
    estimates: np.ndarray
    reps_used: int
    failures: tuple
    seconds: float

    def table(self, sep: str = "\t") -> str:
        buf = io.StringIO()
        head = ["quantity", "bias_x10", "esd"] + [f"asd_{w}" for w in self.laws]
        buf.write(sep.join(head) + "\n")
        d = self.bias.size
        names = ["alpha0"] + [f"alpha{i}" for i in range(1, self.spec.orders[1] + 1)] + \
                [f"beta{j}" for j in range(1, self.spec.orders[0] + 1)]
        for i in range(d):
            buf.write(sep.join([names[i], f"{10 * self.bias[i]:.3f}", f"{self.esd[i]:.3f}"] +
                               [f"{self.asd[w][i]:.3f}" for w in self.laws]) + "\n")
        for k in range(self.r_bias.size):
            buf.write(sep.join([f"r{k + 1}_x10", f"{10 * self.r_bias[k]:.3f}",
                                f"{10 * self.r_esd[k]:.3f}"] +
                               [f"{10 * self.r_asd[w][k]:.3f}" for w in self.laws]) + "\n")
        return buf.getvalue()


def _inference_rep(spec: ExperimentSpec, r: int):
    series, _, _ = spec.sample(r)
    fit = fit_hybrid(series, spec.orders, spec.tau)
    r_vec = qacf(weighted_residuals(fit), spec.tau, spec.K)
    asd, r_asd = {}, {}
    for j, w in enumerate(spec.weight_laws):
        ens = run_ensemble(series, fit, spec.B, WeightLaw(w), spec.K, spec.boot_seed(r, j),
                           workers=1)
        asd[w] = summarize(ens).std_errors
        r_asd[w] = np.sqrt(np.var(ens.t_stat, axis=0, ddof=1) / fit.n)
    return fit.theta_tau, asd, r_vec, r_asd


def run_inference_study(spec: ExperimentSpec) -> InferenceResult:
    """Bias, empirical SD (ESD) and mean bootstrap SD (ASD) of the quantile
    regression estimates and of the residual QACF."""
    good, failures, secs = _run("inference", spec)
    est = np.array([g[1][0] for g in good])
    rs = np.array([g[1][2] for g in good])
    asd = {w: np.mean([g[1][1][w] for g in good], axis=0) for w in spec.weight_laws}
    r_asd = {w: np.mean([g[1][3][w] for g in good], axis=0) for w in spec.weight_laws}
    ddof = 1 if len(good) > 1 else 0
    return InferenceResult(spec, spec.weight_laws, est.mean(0) - spec.theta_tau0(),
                           est.std(0, ddof=ddof), asd, rs.mean(0), rs.std(0, ddof=ddof), r_asd,
                           est, len(good), failures, secs)


# -- size and power ---------------------------------------------------------------

@dataclass(frozen=True)
class SizePowerResult:
    spec: ExperimentSpec
    laws: tuple
    rejection_rate: dict
    p_values: dict
    level: float
    reps_used: int
    failures: tuple
    seconds: float

    def table(self, sep: str = "\t") -> str:
        buf = io.StringIO()
        buf.write(sep.join(["n", "tau"] + [f"Q_{w}_x100" for w in self.laws]) + "\n")
        buf.write(sep.join([str(self.spec.n), f"{self.spec.tau:g}"] +
                           [f"{100 * self.rejection_rate[w]:.1f}" for w in self.laws]) + "\n")
        return buf.getvalue()


def _size_power_rep(spec: ExperimentSpec, r: int):
    series, _, _ = spec.sample(r)
    fit = fit_hybrid(series, spec.orders, spec.tau)
    out = {}
    for j, w in enumerate(spec.weight_laws):
        ens = run_ensemble(series, fit, spec.B, WeightLaw(w), spec.K, spec.boot_seed(r, j),
                           workers=1)
        out[w] = portmanteau_test(fit, ens, spec.K).p_value
    return out


def run_size_power(spec: ExperimentSpec, level: float = 0.05) -> SizePowerResult:
    """Rejection rate of the portmanteau test; the fitted model is always
    ``spec.orders`` whatever the simulating model. All weight laws in a
    replicate share the simulated series and the fit."""
    good, failures, secs = _run("size_power", spec)
    pv = {w: np.array([g[1][w] for g in good]) for w in spec.weight_laws}
    rate = {w: float(np.mean(pv[w] < level)) for w in spec.weight_laws}
    return SizePowerResult(spec, spec.weight_laws, rate, pv, level, len(good), failures, secs)


# -- weighted vs unweighted efficiency ---------------------------------------------

@dataclass(frozen=True)
class EfficiencyResult:
    spec: ExperimentSpec
    weighted: np.ndarray
    unweighted: np.ndarray
    iqr_weighted: np.ndarray
    iqr_unweighted: np.ndarray
    reps_used: int
    failures: tuple
    seconds: float

    def plot_rows(self) -> list:
        """``(replicate, component, weighted_error, unweighted_error)`` rows
        (errors relative to the true coefficients) for box plots."""
        t0 = self.spec.theta_tau0()
        rows = []
        for r in range(self.weighted.shape[0]):
            for c in range(t0.size):
                rows.append((r, c, float(self.weighted[r, c] - t0[c]),
                             float(self.unweighted[r, c] - t0[c])))
        return rows


def _efficiency_rep(spec: ExperimentSpec, r: int):
    series, _, _ = spec.sample(r)
    first = qmle_fit(series, spec.orders)
    w = fit_hybrid(series, spec.orders, spec.tau, weighted=True, qmle_fit=first)
    u = fit_hybrid(series, spec.orders, spec.tau, weighted=False, qmle_fit=first)
    return w.theta_tau, u.theta_tau


def _iqr(a: np.ndarray) -> np.ndarray:
    q75, q25 = np.percentile(a, [75, 25], axis=0)
    return q75 - q25


def run_efficiency(spec: ExperimentSpec) -> EfficiencyResult:
    """Sampling spread of the ``1/h``-weighted versus the unweighted
    estimator on identical first-stage fits."""
    good, failures, secs = _run("efficiency", spec)
    wt = np.array([g[1][0] for g in good])
    un = np.array([g[1][1] for g in good])
    return EfficiencyResult(spec, wt, un, _iqr(wt), _iqr(un), len(good), failures, secs)


# -- coverage of the forecast interval ----------------------------------------------

@dataclass(frozen=True)
class CoverageResult:
    spec: ExperimentSpec
    level: float
    coverage: float
    covered: np.ndarray
    reps_used: int
    failures: tuple
    seconds: float


def _coverage_rep(spec: ExperimentSpec, r: int, level: float = 0.95):
    series, _, h_next = spec.sample(r)
    fit = fit_hybrid(series, spec.orders, spec.tau)
    ens = run_ensemble(series, fit, spec.B, WeightLaw(spec.weight_laws[0]), spec.K,
                       spec.boot_seed(r), workers=1)
    lo, hi = summarize(ens, level).quantile_ci
    truth = float(np.sqrt(h_next) * spec.law.quantile(spec.tau))
    return lo <= truth <= hi


def run_coverage(spec: ExperimentSpec) -> CoverageResult:
    """Share of replicates whose 95% bootstrap interval for the one-step
    conditional quantile contains the true ``sqrt(h_{n+1}) Q_tau(eta)``."""
    good, failures, secs = _run("coverage", spec)
    covered = np.array([g[1] for g in good], dtype=bool)
    return CoverageResult(spec, 0.95, float(covered.mean()), covered, len(good), failures, secs)


_WORKERS = {
    "comparison": _comparison_rep,
    "inference": _inference_rep,
    "size_power": _size_power_rep,
    "efficiency": _efficiency_rep,
    "coverage": _coverage_rep,
}


# -- presets ------------------------------------------------------------------------

def preset(name: str, scale: float = 1.0, **overrides) -> list:
    """Named study layouts as ``(runner, spec)`` pairs; ``scale`` multiplies
    the replicate counts (desk-scale defaults: 200 replicates, B=300)."""
    reps = lambda base: max(1, int(round(base * scale)))
    normal, student = InnovationLaw("normal"), InnovationLaw("student", 5.0)
    out = []
    if name == "table1":
        for model in (MODEL_1, MODEL_2):
            for law in (normal, student):
                for n in (500, 1000):
                    for tau in (0.01, 0.05):
                        out.append((run_comparison, ExperimentSpec(
                            model, law, n, reps(200), tau, METHODS)))
    elif name == "table2":
        for law in (normal, student):
            for n in (500, 1000, 2000):
                for tau in (0.1, 0.25):
                    out.append((run_inference_study, ExperimentSpec(
                        INFERENCE_MODEL, law, n, reps(200), tau, ("hybrid",), 300,
                        ("W1", "W2", "W3"))))
    elif name == "table4":
        for law in (normal, student):
            for d in (0.0, 0.3, 0.6):
                for n in (500, 1000, 2000):
                    out.append((run_size_power, ExperimentSpec(
                        departure_params(d), law, n, reps(200), 0.1, ("hybrid",), 300,
                        ("W1", "W2", "W3"))))
    elif name == "figure3":
        for model in (GarchParams(0.4, (0.2,), (0.2,)), GarchParams(0.4, (0.2,), (0.6,))):
            for law in (normal, student):
                for tau in (0.1, 0.25):
                    out.append((run_efficiency, ExperimentSpec(
                        model, law, 2000, reps(300), tau, ("hybrid",))))
    elif name == "coverage":
        out.append((run_coverage, ExperimentSpec(
            INFERENCE_MODEL, normal, 1000, reps(200), 0.1, ("hybrid",), 500)))
    else:
        raise ValueError(f"unknown preset {name!r}; choose table1, table2, table4, figure3 or coverage")
    return [(fn, replace(spec, **overrides)) for fn, spec in out]
