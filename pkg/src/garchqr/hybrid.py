"""Hybrid conditional-quantile estimation for GARCH(p,q).

A Gaussian QMLE supplies initial volatilities ``h~_t``; the signed square
``y_t = T(x_t)`` is then regressed on the recursion rows ``z~_t`` by weighted
linear quantile regression (weights ``1/h~_t``), and conditional quantiles of
``x_t`` follow by applying ``T^{-1}`` to the fitted linear predictor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import qmle as _qmle
from .garch import DEFAULT_BOX, ThetaBox, VolatilityPath, next_regressor, recursion
from .quantreg import QrSolution, solve_arrays
from .series import ReturnSeries, inverse_transform

__all__ = ["QuantileParams", "HybridFit", "fit_hybrid", "fit_with_path",
           "supplied_path", "forecast_next"]


@dataclass(frozen=True)
class QuantileParams:
    theta_tau: np.ndarray
    tau: float
    weighted: bool = True

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        object.__setattr__(self, "theta_tau", np.asarray(self.theta_tau, dtype=float))


@dataclass(frozen=True)
class HybridFit:
    """Outputs of the hybrid pipeline.

    ``qmle`` is ``None`` when the volatility path was supplied rather than
    estimated (known-volatility oracle, sieve baselines).
    """

    qmle: Optional[_qmle.QmleFit]
    qparams: QuantileParams
    vol_path: VolatilityPath
    in_sample_q: np.ndarray
    next_q: float
    next_z: np.ndarray
    solution: QrSolution
    responses: np.ndarray

    @property
    def tau(self) -> float:
        return self.qparams.tau

    @property
    def theta_tau(self) -> np.ndarray:
        return self.qparams.theta_tau

    @property
    def n(self) -> int:
        return self.in_sample_q.size


def supplied_path(h: np.ndarray, series: ReturnSeries, q: int, p: int,
                  x2_init: Optional[float] = None, h_init: Optional[float] = None) -> VolatilityPath:
    """Build design rows from an externally supplied volatility sequence.

    Pre-sample squared returns default to the sample mean of ``x_t^2`` and
    pre-sample volatilities to the mean of ``h``.
    """
    h = np.asarray(h, dtype=float)
    x2 = series.squared
    if h.size != x2.size:
        raise ValueError("volatility path and series differ in length")
    if not np.all(h > 0):
        raise ValueError("supplied volatilities must be positive")
    x2_init = float(x2.mean()) if x2_init is None else float(x2_init)
    h_init = float(h.mean()) if h_init is None else float(h_init)
    n = x2.size
    z = np.empty((n, 1 + q + p))
    z[:, 0] = 1.0
    for i in range(1, q + 1):
        z[:i, i] = x2_init
        z[i:, i] = x2[:n - i]
    for j in range(1, p + 1):
        z[:j, q + j] = h_init
        z[j:, q + j] = h[:n - j]
    return VolatilityPath(h, z, q, p, x2_init, h_init)


def fit_with_path(series: ReturnSeries, path: VolatilityPath, tau: float,
                  weighted: bool = True, start_basis=None,
                  qmle_fit: Optional[_qmle.QmleFit] = None) -> HybridFit:
    """Quantile-regression and inversion stages given a volatility path."""
    params_tau = float(tau)
    if not 0 < params_tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    y = series.transformed
    w = 1.0 / path.h if weighted else np.ones(path.h.size)
    sol = solve_arrays(y, path.design, w, params_tau, start_basis=start_basis)
    z_next = next_regressor(path, series)
    in_q = inverse_transform(path.design @ sol.coef)
    next_q = float(inverse_transform(float(z_next @ sol.coef)))
    return HybridFit(qmle_fit, QuantileParams(sol.coef, params_tau, weighted), path,
                     np.atleast_1d(in_q), next_q, z_next, sol, y)


def fit_hybrid(series: ReturnSeries, orders: Sequence[int] = (1, 1), tau: float = 0.05,
               weighted: bool = True, box: ThetaBox = DEFAULT_BOX,
               qmle_fit: Optional[_qmle.QmleFit] = None) -> HybridFit:
    """QMLE volatilities, transformed quantile regression and inversion.

    Parameters
    ----------
    series : ReturnSeries
    orders : (p, q)
    tau : float
        Quantile level in (0, 1).
    weighted : bool
        Weights ``1/h~_t`` when true; unit weights give the unweighted
        estimator.
    box : ThetaBox
    qmle_fit : QmleFit, optional
        Reuse an existing first-stage fit (e.g. across several levels).
    """
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    if qmle_fit is None:
        qmle_fit = _qmle.fit(series, orders, box=box)
    return fit_with_path(series, qmle_fit.path, tau, weighted, qmle_fit=qmle_fit)


def forecast_next(fit: HybridFit, series: Optional[ReturnSeries] = None) -> float:
    """One-step-ahead conditional quantile ``T^{-1}(theta_tau' z~_{n+1})``."""
    if series is not None and len(series) != fit.n:
        raise ValueError("fit was not produced from this series")
    return fit.next_q


def path_at(theta: np.ndarray, series: ReturnSeries, q: int, p: int,
            like: VolatilityPath, want_gradient: bool = False) -> VolatilityPath:
    """Recursion at an arbitrary (unchecked) theta using the pre-sample
    constants of ``like``."""
    h, z, g = recursion(theta, q, p, series.squared, like.x2_init, like.h_init, want_gradient)
    return VolatilityPath(h, z, q, p, like.x2_init, like.h_init, g if want_gradient else None)
