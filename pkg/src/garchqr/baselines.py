"""Comparator conditional-quantile estimators.

* RiskMetrics: fixed IGARCH filter ``h_t = 0.06 x_{t-1}^2 + 0.94 h_{t-1}``
  with normal quantiles.
* Sieve QGARCH: a long-ARCH quantile regression supplies volatility proxies
  in place of the QMLE, then the transformed weighted quantile regression
  runs as in the hybrid pipeline. ``qgarch1`` uses the single level being
  estimated; ``qgarch2`` pools the levels ``i/20`` by a rank-one
  minimum-distance fit.
* Indirect-GARCH CAViaR: ``q_t^2 = a0 + a1 x_{t-1}^2 + a2 q_{t-1}^2`` fitted by
  direct minimization of the check loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy import optimize, stats

from .hybrid import fit_with_path, supplied_path
from .quantreg import SolverError, check_loss, solve_arrays
from .series import ReturnSeries, inverse_transform

__all__ = [
    "BaselineForecast",
    "SieveConfig",
    "riskmetrics",
    "qgarch_sieve",
    "caviar_indirect_garch",
    "sieve_order",
    "QGARCH2_LEVELS",
]

QGARCH2_LEVELS = tuple(i / 20 for i in range(1, 20))


@dataclass(frozen=True)
class BaselineForecast:
    method: str
    in_sample_q: np.ndarray
    next_q: float
    info: dict = field(default_factory=dict, compare=False)


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    return tau


# -- RiskMetrics -------------------------------------------------------------

def riskmetrics(series: ReturnSeries, tau: float, lam: float = 0.94,
                h1: Optional[float] = None) -> BaselineForecast:
    """Exponential smoothing volatility with normal quantiles.

    ``h_1`` defaults to ``x_1^2``; nothing is estimated.
    """
    tau = _check_tau(tau)
    x2 = series.squared
    if x2.size < 2:
        raise ValueError("RiskMetrics needs at least two observations")
    h = np.empty(x2.size + 1)
    h[0] = x2[0] if h1 is None else float(h1)
    for t in range(1, x2.size + 1):
        h[t] = (1.0 - lam) * x2[t - 1] + lam * h[t - 1]
    z = stats.norm.ppf(tau)
    q = np.sqrt(h) * z
    return BaselineForecast("riskmetrics", q[:-1], float(q[-1]), {"h": h[:-1]})


# -- sieve QGARCH -------------------------------------------------------------

def sieve_order(n: int) -> int:
    """Default sieve length ``ceil(3 n^(1/4))``."""
    return int(math.ceil(3.0 * n ** 0.25))


@dataclass(frozen=True)
class SieveConfig:
    m: Optional[int] = None
    proxy_floor: float = 1e-3
    mode: str = "hybrid"

    def order(self, n: int) -> int:
        m = sieve_order(n) if self.m is None else int(self.m)
        if not 0 <= m < n / 2:
            raise ValueError(f"sieve order must satisfy 0 <= m < n/2, got m={m}, n={n}")
        return m

    def __post_init__(self):
        if self.mode not in ("hybrid", "direct"):
            raise ValueError("mode must be 'hybrid' or 'direct'")


def _sieve_design(x2: np.ndarray, m: int) -> np.ndarray:
    """Rows ``(1, x_{t-1}^2..x_{t-m}^2)`` for t = 1..n, pre-sample lags set
    to the mean of ``x^2``."""
    n = x2.size
    fill = float(x2.mean())
    s = np.empty((n, m + 1))
    s[:, 0] = 1.0
    for j in range(1, m + 1):
        s[:j, j] = fill
        s[j:, j] = x2[:n - j]
    return s


def _sieve_fit(y, s, m, tau):
    try:
        return solve_arrays(y[m:], s[m:], np.ones(y.size - m), tau).coef
    except SolverError as exc:
        raise SolverError(f"sieve regression failed ({exc}); try a smaller m") from exc


def _proxy(pred: np.ndarray, intercept: float, floor: float) -> np.ndarray:
    """Scale-free volatility proxy ``pred / mean(pred)``.

    Values are floored at the sieve's own constant term (its prediction at
    zero past returns), and never below ``floor``: crossing sieve
    coefficients otherwise produce near-zero proxies whose ``1/h`` weights
    swamp the second-stage regression.
    """
    mean = pred.mean()
    if mean == 0 or not np.isfinite(mean):
        raise SolverError("sieve predictor has zero mean; level too close to the median")
    return np.maximum(pred / mean, max(floor, intercept / mean))


def qgarch_sieve(series: ReturnSeries, tau: float, config: SieveConfig = SieveConfig(),
                 variant: str = "single", orders=(1, 1), weighted: bool = True) -> BaselineForecast:
    """Sieve-based QGARCH conditional quantiles.

    Parameters
    ----------
    variant : {"single", "multi"}
        ``single`` runs the sieve regression at ``tau`` only; ``multi``
        runs it at the 19 levels ``i/20`` and keeps the common direction
        ``gamma`` of the rank-one fit ``Pi ~ b gamma'`` (identity weights,
        via the leading singular vectors).
    config : SieveConfig
        ``mode="hybrid"`` (default) turns the sieve predictor into a
        volatility proxy (divided by its sample mean, floored at the
        scaled constant term and at ``proxy_floor``) and runs the transformed weighted quantile
        regression on it; ``mode="direct"`` maps the sieve fit through
        ``T^{-1}`` directly.
    """
    tau = _check_tau(tau)
    if variant not in ("single", "multi"):
        raise ValueError("variant must be 'single' or 'multi'")
    x2 = series.squared
    n = x2.size
    m = config.order(n)
    if n <= 4 * m:
        raise ValueError(f"need n > 4m for the sieve (n={n}, m={m})")
    y = series.transformed
    s = _sieve_design(x2, m)
    s_next = np.r_[1.0, x2[::-1][:m]]
    if variant == "single":
        coef = _sieve_fit(y, s, m, tau)
        direction = coef
        info = {"m": m, "coef": coef}
    else:
        pi = np.array([_sieve_fit(y, s, m, lv) for lv in QGARCH2_LEVELS])
        u, sv, vt = np.linalg.svd(pi, full_matrices=False)
        gamma = vt[0] * sv[0]
        b = u[:, 0]
        if np.mean(s @ gamma) < 0:
            gamma, b = -gamma, -b
        direction = gamma
        coef = gamma * float(np.interp(tau, QGARCH2_LEVELS, b))
        info = {"m": m, "gamma": gamma, "b": b}
    if config.mode == "direct":
        return BaselineForecast(f"qgarch{1 if variant == 'single' else 2}",
                                inverse_transform(s @ coef),
                                float(inverse_transform(float(s_next @ coef))), info)
    proxy = _proxy(s @ direction, direction[0], config.proxy_floor)
    p, q = orders
    path = supplied_path(proxy, series, q, p, h_init=float(proxy.mean()))
    fit = fit_with_path(series, path, tau, weighted=weighted)
    info["theta_tau"] = fit.theta_tau
    return BaselineForecast(f"qgarch{1 if variant == 'single' else 2}", fit.in_sample_q,
                            fit.next_q, info)


# -- indirect-GARCH CAViaR ------------------------------------------------------

@njit(cache=True)
def _caviar_path(a0, a1, a2, x2, q0, sign):
    n = x2.size
    q = np.empty(n + 1)
    q[0] = q0
    for t in range(1, n + 1):
        v = a0 + a1 * x2[t - 1] + a2 * q[t - 1] * q[t - 1]
        if not v >= 0:
            return q, False
        q[t] = sign * np.sqrt(v)
    return q, True


@njit(cache=True)
def _caviar_loss(a0, a1, a2, x, x2, q0, sign, tau):
    q, ok = _caviar_path(a0, a1, a2, x2, q0, sign)
    if not ok:
        return np.inf
    total = 0.0
    for t in range(x.size):
        u = x[t] - q[t]
        total += u * (tau - (1.0 if u < 0 else 0.0))
    return total


@njit(cache=True)
def _screen(cands, x, x2, q0, sign, tau):
    out = np.empty(cands.shape[0])
    for i in range(cands.shape[0]):
        out[i] = _caviar_loss(cands[i, 0], cands[i, 1], cands[i, 2], x, x2, q0, sign, tau)
    return out


def caviar_indirect_garch(series: ReturnSeries, tau: float, n_screen: int = 10_000,
                          n_refine: int = 3, init_window: int = 300,
                          seed: int = 0) -> BaselineForecast:
    """Indirect-GARCH(1,1) CAViaR fitted by random screening and Nelder-Mead.

    The recursion starts at the empirical ``tau``-quantile of the first
    ``init_window`` observations; ``q_t`` takes the sign of that quantile's
    side (negative for ``tau < 0.5``). Parameters giving a negative
    ``q_t^2`` score ``inf``. ``info["converged"]`` is false when every
    Nelder-Mead run hit its iteration cap; the best point found is returned
    either way.
    """
    tau = _check_tau(tau)
    x = np.ascontiguousarray(series.values)
    x2 = x * x
    n = x.size
    if n < 20:
        raise ValueError("CAViaR needs a longer series")
    q0 = float(np.quantile(x[:min(n, init_window)], tau))
    sign = -1.0 if tau < 0.5 else 1.0
    if q0 == 0:
        q0 = sign * float(np.sqrt(x2.mean())) * 1e-3
    scale = q0 * q0
    s2 = float(x2.mean()) or 1.0
    rng = np.random.default_rng(seed)
    a2 = rng.uniform(0.0, 1.0, n_screen)
    a1 = rng.uniform(0.0, 1.0, n_screen) * scale / s2 * (1.0 - a2)
    a0 = rng.uniform(0.0, 1.0, n_screen) * scale * (1.0 - a2)
    cands = np.column_stack([a0, a1, a2])
    losses = _screen(cands, x, x2, q0, sign, tau)
    order = np.argsort(losses)[:n_refine]

    def fun(a):
        if a[0] < 0 or a[1] < 0 or a[2] < 0:
            return np.inf
        return _caviar_loss(a[0], a[1], a[2], x, x2, q0, sign, tau)

    best, best_val, converged = cands[order[0]], losses[order[0]], False
    for i in order:
        res = optimize.minimize(fun, cands[i], method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 4000})
        converged |= bool(res.success)
        if res.fun < best_val:
            best, best_val = res.x, float(res.fun)
    q, _ = _caviar_path(best[0], best[1], best[2], x2, q0, sign)
    return BaselineForecast("caviar", q[:-1], float(q[-1]),
                            {"params": np.asarray(best), "objective": best_val,
                             "converged": converged, "q0": q0})


def check_objective(x: np.ndarray, q: np.ndarray, tau: float) -> float:
    return float(np.sum(check_loss(np.asarray(x) - np.asarray(q), tau)))
