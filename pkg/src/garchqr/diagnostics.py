"""Residual quantile autocorrelations and the bootstrap portmanteau test."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy import stats

__all__ = [
    "DiagnosticError",
    "WeightedResiduals",
    "QacfReport",
    "weighted_residuals",
    "residuals_from",
    "qacf",
    "weighted_qacf",
    "portmanteau_test",
    "portmanteau_from",
    "DEFAULT_LAGS",
]

DEFAULT_LAGS = 6


class DiagnosticError(ValueError):
    """Residuals are degenerate (zero spread) so the QACF is undefined."""


@dataclass(frozen=True)
class WeightedResiduals:
    eps_hat: np.ndarray
    mu_a: float
    sigma2_a: float


@dataclass(frozen=True)
class QacfReport:
    r: np.ndarray
    K: int
    q_stat: float
    sigma3_star: np.ndarray
    p_value: float
    per_lag_bounds: np.ndarray
    tau: float
    n: int

    def significant_lags(self) -> list:
        """Lags whose ``r_k`` falls outside its bootstrap percentile band."""
        lo, hi = self.per_lag_bounds[:, 0], self.per_lag_bounds[:, 1]
        return [k + 1 for k in np.flatnonzero((self.r < lo) | (self.r > hi))]

    def plot_rows(self) -> list:
        """``(lag, r_k, lower, upper)`` rows for a QACF chart."""
        return [(k + 1, float(self.r[k]), float(self.per_lag_bounds[k, 0]),
                 float(self.per_lag_bounds[k, 1])) for k in range(self.K)]


def residuals_from(y: np.ndarray, design: np.ndarray, h: np.ndarray,
                   theta_tau: np.ndarray, basis=None) -> WeightedResiduals:
    """``eps_t = (y_t - theta' z_t) / h_t`` and the moments of ``|eps_t|``.

    Both moments divide by n. Rows in ``basis`` (the interpolated points of
    the quantile fit) are set to exactly zero so roundoff cannot flip their
    sign.
    """
    eps = (y - design @ theta_tau) / h
    if basis is not None:
        eps[np.asarray(basis, dtype=np.int64)] = 0.0
    a = np.abs(eps)
    mu = float(a.mean())
    s2 = float(np.mean((a - mu) ** 2))
    return WeightedResiduals(eps, mu, s2)


def weighted_residuals(fit) -> WeightedResiduals:
    """Weighted residuals of a :class:`~garchqr.hybrid.HybridFit`."""
    path = fit.vol_path
    return residuals_from(fit.responses, path.design, path.h, fit.theta_tau,
                          fit.solution.active_basis)


@njit(cache=True)
def _qacf_sums(eps, weights, tau, K):
    n = eps.size
    out = np.zeros(K)
    for k in range(1, K + 1):
        acc = 0.0
        for t in range(k, n):
            psi = tau - 1.0 if eps[t] < 0 else tau
            acc += weights[t] * psi * abs(eps[t - k])
        out[k - 1] = acc / n
    return out


def _scale(tau: float, sigma2: float) -> float:
    if not sigma2 > 0:
        raise DiagnosticError("residual absolute values have zero variance; degenerate fit")
    return 1.0 / np.sqrt((tau - tau * tau) * sigma2)


def qacf(res: WeightedResiduals, tau: float, K: int = DEFAULT_LAGS) -> np.ndarray:
    """Residual QACF ``r_1..r_K``.

    ``psi_tau(u) = tau - 1[u < 0]``, so an exactly zero residual gets ``tau``;
    the sums divide by n, not n - k.
    """
    n = res.eps_hat.size
    if not 1 <= K < n / 4:
        raise ValueError(f"need 1 <= K < n/4, got K={K} with n={n}")
    return _scale(tau, res.sigma2_a) * _qacf_sums(res.eps_hat, np.ones(n), float(tau), int(K))


def weighted_qacf(eps_star: np.ndarray, weights: np.ndarray, tau: float, sigma2_a: float,
                  K: int = DEFAULT_LAGS) -> np.ndarray:
    """Randomly weighted QACF ``r*_1..r*_K``, normalized by the original ``sigma2_a``."""
    return _scale(tau, sigma2_a) * _qacf_sums(np.ascontiguousarray(eps_star, dtype=float),
                                              np.ascontiguousarray(weights, dtype=float),
                                              float(tau), int(K))


def _robust_inverse(s: np.ndarray) -> np.ndarray:
    K = s.shape[0]
    try:
        cond = np.linalg.cond(s)
    except np.linalg.LinAlgError:
        cond = np.inf
    if np.isfinite(cond) and cond < 1e12:
        return np.linalg.inv(s)
    lam = 1e-8 * max(np.trace(s), np.finfo(float).tiny) / K
    warnings.warn(f"bootstrap covariance is singular; adding ridge {lam:.3g}", RuntimeWarning,
                  stacklevel=3)
    return np.linalg.inv(s + lam * np.eye(K))


def portmanteau_from(r: np.ndarray, t_stats: np.ndarray, n: int, tau: float) -> QacfReport:
    """Q(K) from ``R`` and bootstrap draws ``T^(i) = sqrt(n)(R*_i - R)``."""
    r = np.asarray(r, dtype=float)
    t_stats = np.atleast_2d(np.asarray(t_stats, dtype=float))
    K = r.size
    if t_stats.shape[1] != K:
        raise ValueError(f"bootstrap statistics have {t_stats.shape[1]} lags, expected {K}")
    if t_stats.shape[0] < 2:
        raise ValueError("need at least two bootstrap replicates")
    sigma = np.atleast_2d(np.cov(t_stats, rowvar=False))
    sigma = 0.5 * (sigma + sigma.T)
    q = float(n * r @ _robust_inverse(sigma) @ r)
    p = float(stats.chi2.sf(q, K))
    bounds = np.percentile(t_stats, [2.5, 97.5], axis=0).T / np.sqrt(n)
    return QacfReport(r, K, q, sigma, min(max(p, 0.0), 1.0), bounds, float(tau), int(n))


def portmanteau_test(fit, ensemble, K: Optional[int] = None) -> QacfReport:
    """Bootstrap portmanteau test of the fitted conditional quantiles.

    ``Sigma3*`` is the sample covariance of the ensemble's T-statistics,
    ``Q(K) = n R' Sigma3*^-1 R`` is referred to chi-square(K), and per-lag
    bands are the 2.5/97.5 percentiles of ``T_k / sqrt(n)``. A singular
    ``Sigma3*`` gets a ridge of ``1e-8 trace/K`` with a warning.
    """
    K = ensemble.K if K is None else int(K)
    if K != ensemble.K:
        raise ValueError(f"ensemble carries {ensemble.K} lags, asked for {K}")
    res = weighted_residuals(fit)
    r = qacf(res, fit.tau, K)
    return portmanteau_from(r, ensemble.t_stat, fit.n, fit.tau)
