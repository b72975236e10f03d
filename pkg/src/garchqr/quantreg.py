"""Exact weighted linear quantile regression.

Minimizes ``sum_t w_t * rho_tau(y_t - z_t' b)`` over b by a vertex-to-vertex
descent in the spirit of Barrodale and Roberts: at a basic solution (d
observations fitted exactly) every edge is obtained by releasing one basic
observation above or below the fit, and the step along the best edge jumps
over as many breakpoints as keep the objective decreasing. Optima are
vertices, so residual signs of the returned fit are never ambiguous.

Ties in the responses make vertices degenerate; the walk runs on responses
perturbed by a deterministic offset of relative size 1e-9, and the basis it
ends on is re-evaluated on the original data. When the optimum is not unique
the lexicographically smallest optimal vertex is returned, so results do
not depend on the starting basis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy import linalg

__all__ = ["SolverError", "QrProblem", "QrSolution", "check_loss", "solve", "solve_arrays"]

OPTIMAL = "optimal"
DEGENERATE_OPTIMAL = "degenerate-optimal"


class SolverError(RuntimeError):
    """Quantile regression could not be solved."""


def check_loss(u, tau: float):
    """``rho_tau(u) = u * (tau - 1{u < 0})``."""
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QrProblem:
    responses: np.ndarray
    design: np.ndarray
    weights: np.ndarray
    tau: float

    def __post_init__(self):
        y = np.ascontiguousarray(self.responses, dtype=float).ravel()
        z = np.ascontiguousarray(self.design, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        w = np.ascontiguousarray(
            np.ones_like(y) if self.weights is None else self.weights, dtype=float
        ).ravel()
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if z.shape[0] != y.size or w.size != y.size:
            raise ValueError("responses, design and weights must have matching rows")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            raise ValueError("responses and design must be finite")
        object.__setattr__(self, "responses", y)
        object.__setattr__(self, "design", z)
        object.__setattr__(self, "weights", w)

    def objective(self, coef) -> float:
        resid = self.responses - self.design @ np.asarray(coef, dtype=float)
        return float(np.sum(self.weights * check_loss(resid, self.tau)))


@dataclass(frozen=True)
class QrSolution:
    coef: np.ndarray
    objective: float
    active_basis: np.ndarray
    status: str
    iterations: int


@njit(cache=True)
def _vertex(z, y, w, tau, basis, r, zero, isbasic, dp, dm, nrm):
    """Fit at a basis plus the directional derivative along each of its edges.

    ``dp[k]``/``dm[k]`` is the slope when basic row k leaves below/above the
    fit; zero-residual nonbasic rows contribute their one-sided slopes.
    """
    n, d = z.shape
    bmat = np.empty((d, d))
    yb = np.empty(d)
    for k in range(d):
        bmat[k, :] = z[basis[k], :]
        yb[k] = y[basis[k]]
    binv = np.linalg.inv(bmat)
    coef = binv @ yb
    v = z @ binv
    isbasic[:] = False
    for k in range(d):
        isbasic[basis[k]] = True
        wk = w[basis[k]]
        dp[k] = wk * (1.0 - tau)
        dm[k] = wk * tau
        nrm[k] = wk
    nzero = 0
    for t in range(n):
        zero[t] = False
        if isbasic[t]:
            r[t] = 0.0
            continue
        fit = 0.0
        mag = abs(y[t])
        for k in range(d):
            fit += z[t, k] * coef[k]
            mag += abs(z[t, k] * coef[k])
        rt = y[t] - fit
        wt = w[t]
        if abs(rt) <= 1e-11 * mag:
            r[t] = 0.0
            zero[t] = True
            nzero += 1
            for k in range(d):
                vk = v[t, k]
                nrm[k] += wt * abs(vk)
                if vk < 0:
                    dp[k] -= wt * tau * vk
                    dm[k] -= wt * (1.0 - tau) * vk
                else:
                    dp[k] += wt * (1.0 - tau) * vk
                    dm[k] += wt * tau * vk
        else:
            r[t] = rt
            psi = tau if rt > 0 else tau - 1.0
            for k in range(d):
                vk = v[t, k]
                nrm[k] += wt * abs(vk)
                dp[k] -= wt * psi * vk
                dm[k] += wt * psi * vk
    return coef, v, nzero


@njit(cache=True)
def _simplex(z, y, w, tau, basis, max_iter):
    n, d = z.shape
    basis = basis.copy()
    r = np.empty(n)
    zero = np.zeros(n, dtype=np.bool_)
    isbasic = np.zeros(n, dtype=np.bool_)
    cand_s = np.empty(n)
    cand_w = np.empty(n)
    cand_t = np.empty(n, dtype=np.int64)
    dp = np.empty(d)
    dm = np.empty(d)
    nrm = np.empty(d)
    status = 2
    it = 0
    while it < max_iter:
        it += 1
        coef, v, nzero = _vertex(z, y, w, tau, basis, r, zero, isbasic, dp, dm, nrm)
        # steepest edge after normalizing by the total weight it moves
        best = -1e-12
        bk = -1
        bsig = 0.0
        for k in range(d):
            if nrm[k] <= 0:
                continue
            if dp[k] / nrm[k] < best:
                best = dp[k] / nrm[k]
                bk = k
                bsig = 1.0
            if dm[k] / nrm[k] < best:
                best = dm[k] / nrm[k]
                bk = k
                bsig = -1.0
        if bk < 0:
            status = 0
            break
        slope = dp[bk] if bsig > 0 else dm[bk]
        m = 0
        for t in range(n):
            if isbasic[t] or zero[t]:
                continue
            a = -bsig * v[t, bk]
            if a != 0.0 and r[t] * a < 0:
                cand_s[m] = -r[t] / a
                cand_w[m] = w[t] * abs(a)
                cand_t[m] = t
                m += 1
        order = np.argsort(cand_s[:m])
        enter = -1
        for idx in order:
            slope += cand_w[idx]
            if slope >= 0:
                enter = cand_t[idx]
                break
        if enter < 0:
            status = 3
            break
        basis[bk] = enter
    return basis, status, it


@njit(cache=True)
def _edge_summary(z, y, w, tau, basis):
    n, d = z.shape
    r = np.empty(n)
    zero = np.zeros(n, dtype=np.bool_)
    isbasic = np.zeros(n, dtype=np.bool_)
    dp = np.empty(d)
    dm = np.empty(d)
    nrm = np.empty(d)
    coef, v, nzero = _vertex(z, y, w, tau, basis, r, zero, isbasic, dp, dm, nrm)
    flat = 1e300
    for k in range(d):
        if nrm[k] > 0:
            flat = min(flat, dp[k] / nrm[k], dm[k] / nrm[k])
    return nzero, flat


def _initial_basis(z: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """d rows spanning the design, picked near a weighted least-squares fit."""
    n, d = z.shape
    sw = np.sqrt(w)
    coef = np.linalg.lstsq(z * sw[:, None], y * sw, rcond=None)[0]
    resid = np.abs(y - z @ coef)
    order = np.argsort(resid, kind="stable")
    chosen: list = []
    for t in order:
        trial = chosen + [int(t)]
        if np.linalg.matrix_rank(z[trial]) == len(trial):
            chosen = trial
            if len(chosen) == d:
                return np.array(chosen, dtype=np.int64)
    _, _, piv = linalg.qr(z.T, pivoting=True)
    return np.sort(piv[:d]).astype(np.int64)


def _dependent_columns(z: np.ndarray) -> Optional[list]:
    rank = np.linalg.matrix_rank(z)
    if rank == z.shape[1]:
        return None
    _, _, piv = linalg.qr(z, mode="economic", pivoting=True)
    return sorted(int(c) for c in piv[rank:])


def _perturbation(rows: np.ndarray) -> np.ndarray:
    # deterministic, generic offsets keyed by the original row index
    return np.modf((rows + 1) * 0.6180339887498949)[0] - 0.5


def _lex_min_vertex(y, z, w, tau, fstar, coef):
    """Lexicographically smallest optimal vertex, via a sequence of LPs.

    Only reached when the optimum is not unique (flat edge or degenerate
    vertex), which is rare outside tied or integer-valued data.
    """
    from scipy.optimize import linprog

    n, d = z.shape
    scale = max(1.0, abs(fstar))
    c_obj = np.r_[np.zeros(d), tau * w, (1 - tau) * w]
    a_eq = np.hstack([z, np.eye(n), -np.eye(n)])
    a_ub = [c_obj]
    b_ub = [fstar + 1e-10 * scale]
    bounds = [(None, None)] * d + [(0, None)] * (2 * n)
    point = None
    for k in range(d):
        cost = np.zeros(d + 2 * n)
        cost[k] = 1.0
        res = linprog(cost, A_ub=np.array(a_ub), b_ub=np.array(b_ub), A_eq=a_eq,
                      b_eq=y, bounds=bounds, method="highs")
        if res.status != 0:
            return None
        point = res.x
        row = np.zeros(d + 2 * n)
        row[k] = 1.0
        a_ub.append(row)
        b_ub.append(point[k] + 1e-9 * max(1.0, abs(point[k])))
    resid = np.abs(y - z @ point[:d])
    chosen: list = []
    for t in np.argsort(resid, kind="stable"):
        trial = chosen + [int(t)]
        if np.linalg.matrix_rank(z[trial]) == len(trial):
            chosen = trial
            if len(chosen) == d:
                break
    basis = np.sort(np.array(chosen, dtype=np.int64))
    if basis.size < d:
        return None
    cand = np.linalg.solve(z[basis], y[basis])
    if np.sum(w * check_loss(y - z @ cand, tau)) > fstar + 1e-9 * scale:
        return None
    return cand, basis


def _lex_less(a, b, tol=1e-12) -> bool:
    for ai, bi in zip(a, b):
        if abs(ai - bi) > tol * max(1.0, abs(ai), abs(bi)):
            return ai < bi
    return False


def solve_arrays(y, z, w, tau, start_basis=None, check_rank=True,
                 max_iter=10_000) -> QrSolution:
    """Solve from raw arrays; ``start_basis`` (row indices) warm-starts the walk."""
    y = np.ascontiguousarray(y, dtype=float)
    z = np.ascontiguousarray(z, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n, d = z.shape
    keep = np.flatnonzero(w > 0)
    full = keep.size == n
    zk, yk, wk = (z, y, w) if full else (z[keep], y[keep], w[keep])
    if keep.size < d:
        raise SolverError(f"only {keep.size} positively weighted rows for {d} coefficients")
    if check_rank:
        dep = _dependent_columns(zk)
        if dep is not None:
            raise SolverError(f"design is rank deficient; dependent columns {dep}")
    basis = None
    if start_basis is not None:
        sb = np.asarray(start_basis, dtype=np.int64)
        if not full:
            pos = np.searchsorted(keep, sb)
            ok = (pos < keep.size) & (keep[np.minimum(pos, keep.size - 1)] == sb)
            sb = pos if np.all(ok) else None
        if sb is not None and np.linalg.cond(zk[sb]) < 1e12:
            basis = sb
    if basis is None:
        basis = _initial_basis(zk, yk, wk)
    yscale = float(np.mean(np.abs(yk))) or 1.0
    ypert = yk + 1e-9 * yscale * _perturbation(keep.astype(float))
    basis, status, iters = _simplex(zk, ypert, wk, float(tau), basis, int(max_iter))
    if status == 3:
        raise SolverError("objective unbounded along an edge; check weights and design")
    if status == 2:
        raise SolverError(f"no optimal vertex after {max_iter} pivots")
    basis = np.sort(basis)
    coef = np.linalg.solve(zk[basis], yk[basis])
    # leftover descent on the unperturbed problem (tiny residuals near the
    # perturbation scale can flip sign)
    basis2, status2, it2 = _simplex(zk, yk, wk, float(tau), basis, int(max_iter))
    if status2 == 0 and not np.array_equal(np.sort(basis2), basis):
        basis = np.sort(basis2)
        coef = np.linalg.solve(zk[basis], yk[basis])
    iters += it2 - 1
    nzero, flat = _edge_summary(zk, yk, wk, float(tau), basis)
    status_txt = DEGENERATE_OPTIMAL if nzero else OPTIMAL
    if nzero or flat <= 1e-9:
        fstar = float(np.sum(wk * check_loss(yk - zk @ coef, tau)))
        lex = _lex_min_vertex(yk, zk, wk, float(tau), fstar, coef)
        if lex is not None and _lex_less(lex[0], coef):
            coef, basis = lex
    if not full:
        basis = keep[basis]
    obj = float(np.sum(w * check_loss(y - z @ coef, tau)))
    return QrSolution(coef, obj, basis, status_txt, int(iters))


def solve(problem: QrProblem, start_basis=None) -> QrSolution:
    """Globally minimize the weighted check-loss objective of ``problem``.

    Zero-weight rows are dropped before solving, so they have no influence
    at all. Raises :class:`SolverError` naming the dependent columns when
    the design is rank deficient.
    """
    return solve_arrays(problem.responses, problem.design, problem.weights,
                        problem.tau, start_basis=start_basis)
