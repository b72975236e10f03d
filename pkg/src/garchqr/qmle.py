"""Gaussian quasi-maximum likelihood for GARCH(p,q)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy import optimize

from .garch import (
    DEFAULT_BOX,
    GarchParams,
    ThetaBox,
    VolatilityPath,
    recursion,
)
from .series import ReturnSeries

__all__ = ["QmleError", "QmleFit", "qmle_objective", "qmle_gradient", "fit", "information_matrix"]

log = logging.getLogger(__name__)


class QmleError(RuntimeError):
    """The optimizer did not converge; ``best`` holds the best point found."""

    def __init__(self, message: str, best: Optional["QmleFit"] = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class QmleFit:
    theta_hat: GarchParams
    loglik_terms: np.ndarray
    j_tilde: np.ndarray
    score_path: np.ndarray
    converged: bool
    iterations: int
    path: VolatilityPath
    objective: float
    std_errors: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.loglik_terms.size


@njit(cache=True)
def _objective_and_gradient(theta, q, p, x2, init, weights):
    n = x2.size
    d = 1 + q + p
    h = np.empty(n)
    grad = np.zeros((n, d))
    zt = np.empty(d)
    obj = 0.0
    g = np.zeros(d)
    for t in range(n):
        zt[0] = 1.0
        for i in range(1, q + 1):
            zt[i] = x2[t - i] if t - i >= 0 else init
        for j in range(1, p + 1):
            zt[q + j] = h[t - j] if t - j >= 0 else init
        acc = 0.0
        for k in range(d):
            acc += theta[k] * zt[k]
        h[t] = acc
        for k in range(d):
            gk = zt[k]
            for j in range(1, p + 1):
                if t - j >= 0:
                    gk += theta[q + j] * grad[t - j, k]
            grad[t, k] = gk
        if acc <= 0:
            return np.inf, g
        ratio = x2[t] / acc
        obj += weights[t] * (ratio + np.log(acc))
        c = weights[t] * (1.0 - ratio) / acc
        for k in range(d):
            g[k] += c * grad[t, k]
    return obj, g


def _unit_weights(n: int) -> np.ndarray:
    return np.ones(n)


def qmle_objective(params: GarchParams, series: ReturnSeries,
                   box: ThetaBox = DEFAULT_BOX) -> float:
    """``sum_t x_t^2 / h~_t + log h~_t`` at ``params``."""
    box.check(params)
    x2 = series.squared
    obj, _ = _objective_and_gradient(params.vector, params.q, params.p, x2,
                                     float(x2.mean()), _unit_weights(x2.size))
    return float(obj)


def qmle_gradient(params: GarchParams, series: ReturnSeries) -> np.ndarray:
    """Analytic gradient of :func:`qmle_objective` with respect to theta."""
    x2 = series.squared
    _, g = _objective_and_gradient(params.vector, params.q, params.p, x2,
                                   float(x2.mean()), _unit_weights(x2.size))
    return g


def information_matrix(path: VolatilityPath) -> np.ndarray:
    """``n^-1 sum_t h~_t^-2 (dh~_t/dtheta)(dh~_t/dtheta)'``."""
    g = path.gradient / path.h[:, None]
    return g.T @ g / path.h.size


def _starts(s2: float, p: int, q: int, box: ThetaBox) -> list:
    starts = []
    for a, b in ((0.05, 0.50), (0.10, 0.80), (0.05, 0.93)):
        a = a if q else 0.0
        b = min(b, 0.9 * box.rho0) if p else 0.0
        vec = np.r_[s2 * max(1.0 - a - b, 0.02), np.full(q, a / max(q, 1)),
                    np.full(p, b / max(p, 1))]
        starts.append(np.clip(vec, box.w_lo * 1.01, box.w_hi * 0.99))
    return starts


def _minimize(x2, p, q, box, weights, starts, ftol, max_iter):
    n = x2.size
    init = float(x2.mean())
    d = 1 + p + q

    def fun(phi):
        theta = np.exp(phi)
        obj, g = _objective_and_gradient(theta, q, p, x2, init, weights)
        if not np.isfinite(obj):
            return 1e300, np.zeros(d)
        return obj / n, g * theta / n

    lo = np.full(d, np.log(box.w_lo))
    hi = np.full(d, np.log(box.w_hi))
    if p == 1:
        hi[-1] = np.log(min(box.w_hi, box.rho0))
    best = None
    for x0 in starts:
        phi0 = np.clip(np.log(x0), lo, hi)
        if p <= 1:
            res = optimize.minimize(fun, phi0, jac=True, method="L-BFGS-B",
                                    bounds=list(zip(lo, hi)),
                                    options={"ftol": ftol, "gtol": 1e-9, "maxiter": max_iter})
            hit_limit = res.nit >= max_iter
        else:
            cons = {"type": "ineq",
                    "fun": lambda phi: box.rho0 - np.exp(phi[1 + q:]).sum(),
                    "jac": lambda phi: np.r_[np.zeros(1 + q), -np.exp(phi[1 + q:])]}
            res = optimize.minimize(fun, phi0, jac=True, method="SLSQP",
                                    bounds=list(zip(lo, hi)), constraints=[cons],
                                    options={"ftol": ftol, "maxiter": max_iter})
            hit_limit = res.nit >= max_iter
        if best is None or res.fun < best[0].fun:
            best = (res, hit_limit)
    return best


def _assemble(theta: np.ndarray, series: ReturnSeries, p: int, q: int, converged: bool,
              iterations: int) -> QmleFit:
    x2 = series.squared
    init = float(x2.mean())
    h, z, grad = recursion(theta, q, p, x2, init, init, True)
    path = VolatilityPath(h, z, q, p, init, init, grad)
    terms = x2 / h + np.log(h)
    score = ((1.0 - x2 / h) / h)[:, None] * grad
    j = information_matrix(path)
    j = 0.5 * (j + j.T)
    try:
        jinv = np.linalg.inv(j)
        meat = score.T @ score / h.size
        se = np.sqrt(np.clip(np.diag(jinv @ meat @ jinv) / h.size, 0, None))
    except np.linalg.LinAlgError:
        se = np.full(theta.size, np.nan)
    params = GarchParams.from_vector(theta, p, q)
    return QmleFit(params, terms, j, score, converged, iterations, path,
                   float(terms.sum()), se)


def fit(series: ReturnSeries, orders: Sequence[int] = (1, 1), box: ThetaBox = DEFAULT_BOX,
        ftol: float = 1e-8, max_iter: int = 500, weights: Optional[np.ndarray] = None,
        start: Optional[Sequence[float]] = None, raise_on_failure: bool = True) -> QmleFit:
    """Gaussian QMLE of a GARCH(p,q) model.

    Parameters
    ----------
    series : ReturnSeries
    orders : (p, q)
        Number of lagged volatilities and lagged squared returns.
    box : ThetaBox
        Admissible parameter set; the optimum is searched in its interior on
        a log scale, so the fit always lies inside the box.
    ftol, max_iter :
        Relative objective-change tolerance and iteration cap per start.
    weights : array, optional
        Observation weights for a randomly weighted QMLE
        (``sum_t w_t l~_t``); the information matrix and scores of the
        returned fit are always the unweighted ones.
    start : sequence, optional
        Single starting point; default is three canonical starts at low,
        medium and high persistence, keeping the best.

    Raises
    ------
    QmleError
        If the iteration cap is reached; ``err.best`` carries the best point.
    """
    p, q = (int(o) for o in orders)
    n = len(series)
    d = 1 + p + q
    if n <= 10 * d:
        raise ValueError(f"need more than {10 * d} observations for a GARCH({p},{q}) fit")
    x2 = series.squared
    if not np.any(x2 > 0):
        raise QmleError("all returns are zero; the likelihood is unbounded")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    starts = [np.asarray(start, dtype=float)] if start is not None else \
        _starts(float(x2.mean()), p, q, box)
    res, hit_limit = _minimize(x2, p, q, box, w, starts, ftol, max_iter)
    theta = np.clip(np.exp(res.x), box.w_lo, box.w_hi)
    if p >= 1 and theta[1 + q:].sum() > box.rho0:
        theta[1 + q:] *= box.rho0 / theta[1 + q:].sum()
    result = _assemble(theta, series, p, q, not hit_limit, int(res.nit))
    if hit_limit:
        log.warning("QMLE stopped at the iteration cap (%d)", max_iter)
        if raise_on_failure:
            raise QmleError(f"QMLE did not converge in {max_iter} iterations", result)
    return result

