"""Mixed random-weighting bootstrap for the hybrid quantile estimator.

Each replicate draws i.i.d. weights ``w_t`` (mean and variance one), moves
the QMLE by a one-step sample-averaging update instead of re-optimizing,
rebuilds the volatility recursion there and solves the randomly weighted
quantile regression. The replicate yields three statistics: the parameter
deviation ``E``, the one-step-ahead quantile ``Q`` and the QACF deviation
``T`` used by the portmanteau test.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import qmle as _qmle
from ._parallel import map_ordered
from .diagnostics import DEFAULT_LAGS, qacf, weighted_qacf, weighted_residuals
from .garch import recursion
from .quantreg import SolverError, solve_arrays
from .series import ReturnSeries, inverse_transform

__all__ = [
    "WeightLaw",
    "BootstrapError",
    "BootstrapReplicate",
    "BootstrapEnsemble",
    "BootstrapSummary",
    "draw_weights",
    "theta_star_update",
    "replicate",
    "run_ensemble",
    "summarize",
    "replicate_rng",
]

log = logging.getLogger(__name__)

_SQRT5 = np.sqrt(5.0)
MAMMEN_LOW = (3.0 - _SQRT5) / 2.0
MAMMEN_HIGH = (3.0 + _SQRT5) / 2.0
MAMMEN_P_LOW = (_SQRT5 + 1.0) / (2.0 * _SQRT5)

_ALIASES = {
    "w1": "exponential", "exponential": "exponential", "exp": "exponential",
    "w2": "rademacher02", "rademacher02": "rademacher02", "zero-two": "rademacher02",
    "w3": "mammen", "mammen": "mammen",
}


class BootstrapError(RuntimeError):
    """Too many replicates failed, or the information matrix is singular."""


@dataclass(frozen=True)
class WeightLaw:
    """Random-weight law with mean 1 and variance 1.

    ``exponential`` (W1) is standard exponential, ``rademacher02`` (W2) puts
    mass 1/2 on each of 0 and 2, ``mammen`` (W3) is the two-point law on
    ``(3 -+ sqrt 5)/2``.
    """

    kind: str = "exponential"

    def __post_init__(self):
        key = str(self.kind).lower()
        if key not in _ALIASES:
            raise ValueError(f"unknown weight law {self.kind!r}; use W1, W2 or W3")
        object.__setattr__(self, "kind", _ALIASES[key])

    @property
    def label(self) -> str:
        return {"exponential": "W1", "rademacher02": "W2", "mammen": "W3"}[self.kind]

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "exponential":
            return rng.standard_exponential(n)
        if self.kind == "rademacher02":
            return 2.0 * rng.integers(0, 2, size=n).astype(float)
        return np.where(rng.random(n) < MAMMEN_P_LOW, MAMMEN_LOW, MAMMEN_HIGH)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for replicate ``index``: the seed stream is split by index
    so the draws do not depend on scheduling."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def draw_weights(law: WeightLaw, n: int, seed=None) -> np.ndarray:
    """``n`` i.i.d. weights; ``seed`` may be an int or a Generator."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return law.draw(rng, int(n))


@dataclass(frozen=True)
class BootstrapReplicate:
    theta_star: np.ndarray
    theta_tau_star: np.ndarray
    e_stat: np.ndarray
    q_stat: float
    t_stat: np.ndarray


@dataclass(frozen=True)
class BootstrapEnsemble:
    """Replicates stacked row-wise in replicate-index order."""

    theta_star: np.ndarray
    theta_tau_star: np.ndarray
    e_stat: np.ndarray
    q_stat: np.ndarray
    t_stat: np.ndarray
    seed: int
    law: WeightLaw
    K: int
    n: int
    theta_tau: np.ndarray
    indices: np.ndarray
    failures: tuple = field(default=())

    @property
    def B(self) -> int:
        return self.q_stat.size

    @property
    def replicates(self) -> list:
        return [BootstrapReplicate(self.theta_star[i], self.theta_tau_star[i], self.e_stat[i],
                                   float(self.q_stat[i]), self.t_stat[i])
                for i in range(self.B)]


@dataclass(frozen=True)
class BootstrapSummary:
    cov_matrix: np.ndarray
    std_errors: np.ndarray
    level: float
    param_ci: np.ndarray
    quantile_ci: tuple

    def ci(self, target) -> tuple:
        """CI for parameter index ``target`` or ``"next_quantile"``."""
        if target == "next_quantile":
            return self.quantile_ci
        lo, hi = self.param_ci[int(target)]
        return float(lo), float(hi)


def _check_information(j: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(j)
    if not np.isfinite(cond) or cond >= 1e12:
        raise BootstrapError(
            f"information matrix is near singular (condition {cond:.3g}); "
            "use a longer series or lower model orders")
    return np.linalg.inv(j)


def theta_star_update(fit: _qmle.QmleFit, weights: np.ndarray,
                      jinv: Optional[np.ndarray] = None) -> np.ndarray:
    """One-step perturbation of the QMLE.

    ``theta* = theta~ - J~^-1 n^-1 sum_t (w_t - 1) s_t`` with ``s_t`` the
    score rows ``(1 - x_t^2/h~_t) h~_t^-1 dh~_t/dtheta``. The result may leave
    the admissible box; it is used as is.
    """
    if jinv is None:
        jinv = _check_information(fit.j_tilde)
    w = np.asarray(weights, dtype=float)
    if w.size != fit.n:
        raise ValueError(f"expected {fit.n} weights, got {w.size}")
    step = jinv @ (fit.score_path.T @ (w - 1.0)) / fit.n
    return fit.theta_hat.vector - step


class _Context:
    """Everything a replicate needs, precomputed once per fit (picklable)."""

    def __init__(self, series: ReturnSeries, fit, K: int, full_reoptimize: bool):
        if fit.qmle is None:
            raise ValueError("the bootstrap needs a fit with a QMLE first stage")
        qf = fit.qmle
        self.series = series
        self.n = fit.n
        self.q, self.p = qf.theta_hat.q, qf.theta_hat.p
        self.orders = (self.p, self.q)
        self.x2 = np.ascontiguousarray(series.squared)
        self.y = fit.responses
        self.h = fit.vol_path.h
        self.x2_init = fit.vol_path.x2_init
        self.h_init = fit.vol_path.h_init
        self.theta_tilde = qf.theta_hat.vector
        self.jinv = _check_information(qf.j_tilde)
        self.shift = (self.jinv @ qf.score_path.T) / self.n
        self.theta_tau = fit.theta_tau
        self.tau = fit.tau
        self.basis = fit.solution.active_basis
        self.K = int(K)
        res = weighted_residuals(fit)
        self.sigma2 = res.sigma2_a
        self.r = qacf(res, self.tau, self.K)
        self.full = full_reoptimize
        self.qmle_fit = qf
        self.x2_last = self.x2[::-1][:self.q]

    def theta_star(self, w: np.ndarray) -> np.ndarray:
        if self.full:
            return _qmle.fit(self.series, self.orders, weights=w, start=self.theta_tilde,
                             ftol=1e-13, max_iter=2000).theta_hat.vector
        return self.theta_tilde - self.shift @ (w - 1.0)

    def run(self, w: np.ndarray) -> BootstrapReplicate:
        th_star = self.theta_star(w)
        h_star, z_star, _ = recursion(th_star, self.q, self.p, self.x2, self.x2_init,
                                      self.h_init, False)
        sol = solve_arrays(self.y, z_star, w / self.h, self.tau, start_basis=self.basis,
                           check_rank=False)
        coef = sol.coef
        root_n = np.sqrt(self.n)
        z_next = np.empty(1 + self.q + self.p)
        z_next[0] = 1.0
        for i in range(1, self.q + 1):
            z_next[i] = self.x2[self.n - i] if self.n - i >= 0 else self.x2_init
        for j in range(1, self.p + 1):
            z_next[self.q + j] = h_star[self.n - j] if self.n - j >= 0 else self.h_init
        q_stat = float(inverse_transform(float(z_next @ coef)))
        eps_star = (self.y - z_star @ coef) / self.h
        eps_star[sol.active_basis] = 0.0
        r_star = weighted_qacf(eps_star, w, self.tau, self.sigma2, self.K)
        return BootstrapReplicate(th_star, coef, root_n * (coef - self.theta_tau), q_stat,
                                  root_n * (r_star - self.r))


def replicate(series: ReturnSeries, fit, weights: np.ndarray, K: int = DEFAULT_LAGS,
              full_reoptimize: bool = False) -> BootstrapReplicate:
    """One bootstrap replicate for the given weights.

    With ``full_reoptimize`` the weighted QMLE is re-optimized instead of
    using the one-step update (slow; meant for validating the update).
    The quantile regression weights are ``w_t / h~_t`` with the ORIGINAL
    volatilities, while the design rows come from the perturbed recursion.
    """
    w = np.asarray(weights, dtype=float)
    if w.size != fit.n:
        raise ValueError(f"expected {fit.n} weights, got {w.size}")
    return _Context(series, fit, K, full_reoptimize).run(w)


def _run_chunk(args):
    ctx, law, seed, indices = args
    out = []
    for i in indices:
        w = law.draw(replicate_rng(seed, i), ctx.n)
        try:
            out.append((i, ctx.run(w), None))
        except (SolverError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            out.append((i, None, f"{type(exc).__name__}: {exc}"))
    return out


def run_ensemble(series: ReturnSeries, fit, B: int = 1000, law: WeightLaw = WeightLaw(),
                 K: int = DEFAULT_LAGS, seed: int = 0, workers: Optional[int] = None,
                 full_reoptimize: bool = False, max_failure_rate: float = 0.01) -> BootstrapEnsemble:
    """``B`` independent replicates with per-index seed streams.

    Parameters
    ----------
    series, fit :
        Data and the hybrid fit produced from it.
    B : int
        Number of replicates (at least 2; 100 or more for inference).
    law : WeightLaw
    K : int
        Number of QACF lags carried in the T-statistics.
    seed : int
    workers : int, optional
        Process count; defaults to ``GARCHQR_WORKERS`` or 1. Results do not
        depend on it.

    Raises
    ------
    BootstrapError
        If more than ``max_failure_rate`` of the replicates fail.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if not isinstance(law, WeightLaw):
        law = WeightLaw(law)
    ctx = _Context(series, fit, K, full_reoptimize)
    chunks = np.array_split(np.arange(B), max(1, min(B, 8 * (workers or 1))))
    results = map_ordered(_run_chunk, [(ctx, law, int(seed), c) for c in chunks], workers)
    flat = [r for chunk in results for r in chunk]
    failures = tuple((i, msg) for i, rep, msg in flat if rep is None)
    if len(failures) > max_failure_rate * B:
        raise BootstrapError(f"{len(failures)} of {B} replicates failed; first: {failures[0][1]}")
    for i, msg in failures:
        log.warning("bootstrap replicate %d failed: %s", i, msg)
    good = [(i, rep) for i, rep, _ in flat if rep is not None]
    stack = lambda attr: np.array([getattr(rep, attr) for _, rep in good])
    return BootstrapEnsemble(stack("theta_star"), stack("theta_tau_star"), stack("e_stat"),
                             stack("q_stat"), stack("t_stat").reshape(len(good), ctx.K),
                             int(seed), law, ctx.K, ctx.n, ctx.theta_tau,
                             np.array([i for i, _ in good]), failures)


def summarize(ensemble: BootstrapEnsemble, level: float = 0.95) -> BootstrapSummary:
    """Covariance and confidence intervals from an ensemble.

    The covariance is the sample covariance of the E-statistics (so it
    estimates the covariance of ``sqrt(n)(theta_hat - theta)``). Parameter
    intervals are basic-bootstrap intervals
    ``[theta_hat - e_hi/sqrt(n), theta_hat - e_lo/sqrt(n)]``; the interval
    for the next conditional quantile is the percentile interval of the
    Q-statistics. Quantiles use linear interpolation between order
    statistics.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    e = ensemble.e_stat
    d = e.shape[1]
    cov = np.atleast_2d(np.cov(e, rowvar=False)) if ensemble.B > 1 else np.zeros((d, d))
    se = np.sqrt(np.diag(cov) / ensemble.n)
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(e, [a, 1.0 - a], axis=0, method="linear")
    root_n = np.sqrt(ensemble.n)
    param_ci = np.column_stack([ensemble.theta_tau - hi / root_n,
                                ensemble.theta_tau - lo / root_n])
    q_lo, q_hi = np.quantile(ensemble.q_stat, [a, 1.0 - a], method="linear")
    return BootstrapSummary(cov, se, float(level), param_ci, (float(q_lo), float(q_hi)))
