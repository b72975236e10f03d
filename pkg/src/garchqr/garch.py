"""GARCH(p,q) parameters, the volatility recursion and simulation.

Parameter vectors are ordered ``(alpha0, alpha_1..alpha_q, beta_1..beta_p)``
throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy import stats

from .series import ReturnSeries

__all__ = [
    "ConstraintViolation",
    "GarchParams",
    "ThetaBox",
    "InnovationLaw",
    "VolatilityPath",
    "volatility_path",
    "regressor_matrix",
    "next_regressor",
    "simulate",
    "simulate_with_volatility",
]


class ConstraintViolation(ValueError):
    """Parameters fall outside the admissible set."""


@dataclass(frozen=True)
class GarchParams:
    alpha0: float
    alpha: tuple = ()
    beta: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "alpha0", float(self.alpha0))
        object.__setattr__(self, "alpha", tuple(float(a) for a in np.atleast_1d(self.alpha)))
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        vec = self.vector
        if not np.all(np.isfinite(vec)):
            raise ConstraintViolation("non-finite GARCH parameter")
        if self.alpha0 <= 0:
            raise ConstraintViolation(f"alpha0 must be positive, got {self.alpha0}")
        if np.any(vec[1:] < 0):
            raise ConstraintViolation("ARCH/GARCH coefficients must be nonnegative")

    @property
    def q(self) -> int:
        return len(self.alpha)

    @property
    def p(self) -> int:
        return len(self.beta)

    @property
    def dim(self) -> int:
        return 1 + self.q + self.p

    @property
    def vector(self) -> np.ndarray:
        return np.array((self.alpha0,) + self.alpha + self.beta, dtype=float)

    @property
    def persistence(self) -> float:
        return float(sum(self.alpha) + sum(self.beta))

    @classmethod
    def from_vector(cls, vec: Sequence[float], p: int, q: int) -> "GarchParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size != 1 + p + q:
            raise ValueError(f"expected {1 + p + q} parameters, got {vec.size}")
        return cls(vec[0], tuple(vec[1:1 + q]), tuple(vec[1 + q:]))

    def unconditional_variance(self) -> float:
        s = self.persistence
        return self.alpha0 / (1.0 - s) if s < 1 else self.alpha0


@dataclass(frozen=True)
class ThetaBox:
    """Compact parameter set: every component in ``[w_lo, w_hi]`` and
    ``sum(beta) <= rho0``."""

    w_lo: float = 1e-8
    w_hi: float = 10.0
    rho0: float = 0.999

    def __post_init__(self):
        if not (0 < self.w_lo < self.w_hi):
            raise ValueError("need 0 < w_lo < w_hi")
        if not (0 < self.rho0 < 1):
            raise ValueError("rho0 must lie in (0, 1)")

    def violations(self, params: GarchParams) -> list:
        vec = params.vector
        out = []
        if params.p * self.w_lo >= self.rho0:
            out.append(f"p*w_lo = {params.p * self.w_lo} must be below rho0")
        lo = np.flatnonzero(vec < self.w_lo)
        hi = np.flatnonzero(vec > self.w_hi)
        out += [f"component {i} = {vec[i]:.6g} below w_lo" for i in lo]
        out += [f"component {i} = {vec[i]:.6g} above w_hi" for i in hi]
        if sum(params.beta) > self.rho0:
            out.append(f"sum(beta) = {sum(params.beta):.6g} exceeds rho0 = {self.rho0}")
        return out

    def contains(self, params: GarchParams) -> bool:
        return not self.violations(params)

    def check(self, params: GarchParams) -> None:
        problems = self.violations(params)
        if problems:
            raise ConstraintViolation("; ".join(problems))

    def lower(self, dim: int) -> np.ndarray:
        return np.full(dim, self.w_lo)

    def upper(self, dim: int) -> np.ndarray:
        return np.full(dim, self.w_hi)


DEFAULT_BOX = ThetaBox()


@dataclass(frozen=True)
class InnovationLaw:
    """Unit-variance innovation law: ``"normal"`` or standardized ``"student"``."""

    kind: str = "normal"
    nu: float = 5.0

    def __post_init__(self):
        if self.kind not in ("normal", "student"):
            raise ValueError(f"unknown innovation law {self.kind!r}")
        if self.kind == "student" and not self.nu > 2:
            raise ValueError("Student innovations need nu > 2 for unit variance")

    @property
    def _scale(self) -> float:
        return np.sqrt((self.nu - 2.0) / self.nu)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "normal":
            return rng.standard_normal(size)
        return rng.standard_t(self.nu, size) * self._scale

    def quantile(self, tau):
        if self.kind == "normal":
            return stats.norm.ppf(tau)
        return stats.t.ppf(tau, self.nu) * self._scale

    def cdf(self, x):
        if self.kind == "normal":
            return stats.norm.cdf(x)
        return stats.t.cdf(np.asarray(x) / self._scale, self.nu)


@dataclass(frozen=True)
class VolatilityPath:
    """Fitted volatilities ``h~_1..h~_n``.

    ``design`` holds the rows ``z~_t = (1, x_{t-1}^2..x_{t-q}^2, h~_{t-1}..h~_{t-p})``
    built during the recursion; ``x2_init``/``h_init`` are the pre-sample
    constants.
    """

    h: np.ndarray
    design: np.ndarray
    q: int
    p: int
    x2_init: float
    h_init: float
    gradient: Optional[np.ndarray] = None


@njit(cache=True)
def _recursion(theta, q, p, x2, x2_init, h_init, want_grad):
    n = x2.size
    d = 1 + q + p
    h = np.empty(n)
    z = np.empty((n, d))
    grad = np.zeros((n if want_grad else 0, d))
    for t in range(n):
        z[t, 0] = 1.0
        for i in range(1, q + 1):
            z[t, i] = x2[t - i] if t - i >= 0 else x2_init
        for j in range(1, p + 1):
            z[t, q + j] = h[t - j] if t - j >= 0 else h_init
        acc = 0.0
        for k in range(d):
            acc += theta[k] * z[t, k]
        h[t] = acc
        if want_grad:
            for k in range(d):
                g = z[t, k]
                for j in range(1, p + 1):
                    if t - j >= 0:
                        g += theta[q + j] * grad[t - j, k]
                grad[t, k] = g
    return h, z, grad


def recursion(theta: np.ndarray, q: int, p: int, x2: np.ndarray, x2_init: float,
              h_init: float, want_grad: bool = False):
    """Unchecked recursion; callers own the parameter validation."""
    return _recursion(np.ascontiguousarray(theta, dtype=float), q, p,
                      np.ascontiguousarray(x2, dtype=float), float(x2_init),
                      float(h_init), bool(want_grad))


def volatility_path(params: GarchParams, series: ReturnSeries,
                    want_gradient: bool = False,
                    box: ThetaBox = DEFAULT_BOX) -> VolatilityPath:
    """Run ``h~_t(theta)`` over the series.

    All pre-sample squared returns and volatilities are set to the sample
    mean of ``x_t^2``; pre-sample gradients are zero.
    """
    box.check(params)
    x2 = series.squared
    init = float(x2.mean())
    h, z, grad = recursion(params.vector, params.q, params.p, x2, init, init, want_gradient)
    return VolatilityPath(h, z, params.q, params.p, init, init,
                          grad if want_gradient else None)


def regressor_matrix(path: VolatilityPath, series: Optional[ReturnSeries] = None) -> np.ndarray:
    """Rows ``z~_t`` for t = 1..n (already assembled by the recursion)."""
    if series is not None and len(series) != path.h.size:
        raise ValueError("path and series are not aligned")
    return path.design


def next_regressor(path: VolatilityPath, series: ReturnSeries) -> np.ndarray:
    """``z~_{n+1}`` from the last q squared returns and last p volatilities."""
    x2 = series.squared
    n = x2.size
    row = [1.0]
    row += [x2[n - i] if n - i >= 0 else path.x2_init for i in range(1, path.q + 1)]
    row += [path.h[n - j] if n - j >= 0 else path.h_init for j in range(1, path.p + 1)]
    return np.array(row)


@njit(cache=True)
def _simulate(theta, q, p, eta, start):
    total = eta.size
    x = np.empty(total)
    h = np.empty(total + 1)
    for t in range(total + 1):
        acc = theta[0]
        for i in range(1, q + 1):
            acc += theta[i] * (x[t - i] * x[t - i] if t - i >= 0 else start)
        for j in range(1, p + 1):
            acc += theta[q + j] * (h[t - j] if t - j >= 0 else start)
        h[t] = acc
        if t < total:
            x[t] = np.sqrt(acc) * eta[t]
    return x, h


def simulate_with_volatility(params: GarchParams, law: InnovationLaw, n: int,
                             burn_in: int = 500, seed=None):
    """Simulate and also return the true volatility path.

    Returns ``(series, h, h_next)`` where ``h`` holds ``h_1..h_n`` and
    ``h_next`` is ``h_{n+1}``. Zero ARCH/GARCH coefficients are allowed here
    so that restricted designs (e.g. a single extra lag) can be expressed.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    eta = law.draw(rng, burn_in + n)
    start = params.unconditional_variance()
    x, h = _simulate(params.vector, params.q, params.p, eta, start)
    return ReturnSeries(x[burn_in:]), h[burn_in:burn_in + n], float(h[-1])


def simulate(params: GarchParams, law: InnovationLaw, n: int, burn_in: int = 500,
             seed=None) -> ReturnSeries:
    return simulate_with_volatility(params, law, n, burn_in, seed)[0]
