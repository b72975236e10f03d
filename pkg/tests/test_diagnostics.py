import math

import numpy as np
import pytest
from scipy import stats

from garchqr.bootstrap import WeightLaw, run_ensemble
from garchqr.diagnostics import (DiagnosticError, WeightedResiduals, portmanteau_from,
                                 portmanteau_test, qacf, residuals_from, weighted_qacf,
                                 weighted_residuals)
from garchqr.garch import GarchParams, InnovationLaw, simulate
from garchqr.hybrid import fit_hybrid


def _res(eps):
    a = [abs(e) for e in eps]
    mu = math.fsum(a) / len(a)
    return WeightedResiduals(np.asarray(eps, dtype=float), mu,
                             math.fsum((v - mu) ** 2 for v in a) / len(a))


@pytest.fixture(scope="module")
def hfit(garch11_series):
    return fit_hybrid(garch11_series, tau=0.1)


def test_basis_points_have_zero_residual(hfit):
    res = weighted_residuals(hfit)
    assert np.all(res.eps_hat[hfit.solution.active_basis] == 0.0)
    others = np.delete(res.eps_hat, hfit.solution.active_basis)
    assert np.all(others != 0.0)


def test_hand_four_point_residuals():
    y = np.array([1.0, -2.0, 0.5, 3.0])
    z = np.array([[1.0, 2.0], [1.0, 0.5], [1.0, 1.0], [1.0, 4.0]])
    h = np.array([2.0, 1.0, 0.5, 4.0])
    theta = np.array([-0.5, 0.25])
    res = residuals_from(y, z, h, theta)
    # (y - (-0.5 + 0.25 z1)) / h
    expected = np.array([(1.0 - 0.0) / 2.0, (-2.0 + 0.375) / 1.0, (0.5 + 0.25) / 0.5,
                         (3.0 - 0.5) / 4.0])
    np.testing.assert_allclose(res.eps_hat, expected, rtol=1e-15)
    oracle = _res(expected)
    assert res.mu_a == pytest.approx(oracle.mu_a, abs=1e-12)
    assert res.sigma2_a == pytest.approx(oracle.sigma2_a, abs=1e-12)


def test_two_pass_variance_oracle(hfit):
    res = weighted_residuals(hfit)
    oracle = _res(res.eps_hat.tolist())
    assert abs(res.sigma2_a - oracle.sigma2_a) < 1e-12
    assert abs(res.mu_a - oracle.mu_a) < 1e-12


def test_hand_six_point_lag_one():
    eps = [0.4, -1.0, 0.0, 2.0, -0.5, 1.5]
    tau = 0.25
    res = _res(eps)
    psi = [tau - (e < 0) for e in eps]
    total = sum(psi[t] * abs(eps[t - 1]) for t in range(1, 6)) / 6
    expected = total / math.sqrt((tau - tau * tau) * res.sigma2_a)
    # K must stay below n/4, so go through the weighted form with unit weights
    r1 = weighted_qacf(np.array(eps), np.ones(6), tau, res.sigma2_a, K=1)
    assert r1[0] == pytest.approx(expected, rel=1e-14)
    assert psi[2] == tau  # zero residual convention


@pytest.mark.parametrize("tau", [0.1, 0.5])
def test_iid_residuals_have_small_qacf(tau):
    # for iid residuals sqrt(n) r_k has variance E|e|^2 / Var|e|, so the
    # CLT-scale bound is 4 standard deviations of that
    n = 10_000
    for seed in range(5):
        z = np.random.default_rng(seed).standard_normal(n)
        eps = z - stats.norm.ppf(tau)
        res = _res(eps.tolist())
        r = qacf(res, tau, 6)
        sd = np.sqrt(np.mean(eps ** 2) / res.sigma2_a)
        assert np.all(np.abs(r) < 4 * sd / np.sqrt(n))


def test_lag_bound_and_degenerate_residuals():
    with pytest.raises(ValueError):
        qacf(_res([0.1] * 20 + [-0.2] * 20), 0.1, 10)
    with pytest.raises(DiagnosticError):
        qacf(_res([1.0] * 40), 0.5, 2)


def test_unit_weights_match_plain_qacf(hfit):
    res = weighted_residuals(hfit)
    np.testing.assert_allclose(weighted_qacf(res.eps_hat, np.ones(hfit.n), 0.1, res.sigma2_a),
                               qacf(res, 0.1), rtol=1e-14)


def test_zero_r_gives_zero_statistic(rng):
    rep = portmanteau_from(np.zeros(6), rng.standard_normal((300, 6)), 1000, 0.1)
    assert rep.q_stat == 0.0 and rep.p_value == 1.0


def test_report_definitions(rng):
    r = rng.normal(scale=0.03, size=4)
    t = rng.standard_normal((500, 4)) @ np.diag([1.0, 0.8, 1.2, 0.9])
    rep = portmanteau_from(r, t, 900, 0.05)
    s = np.cov(t, rowvar=False)
    np.testing.assert_allclose(rep.sigma3_star, s)
    assert rep.q_stat == pytest.approx(900 * r @ np.linalg.solve(s, r))
    assert rep.p_value == pytest.approx(stats.chi2.sf(rep.q_stat, 4))
    np.testing.assert_allclose(rep.per_lag_bounds,
                               np.percentile(t, [2.5, 97.5], axis=0).T / 30.0)
    assert np.min(np.linalg.eigvalsh(rep.sigma3_star)) >= -1e-12
    assert len(rep.plot_rows()) == 4
    outside = [k + 1 for k in range(4)
               if not rep.per_lag_bounds[k, 0] <= r[k] <= rep.per_lag_bounds[k, 1]]
    assert rep.significant_lags() == outside


def test_singular_covariance_gets_ridge(rng):
    t = rng.standard_normal((100, 1)) @ np.ones((1, 3))
    with pytest.warns(RuntimeWarning, match="singular"):
        rep = portmanteau_from(np.array([0.01, 0.02, 0.0]), t, 500, 0.1)
    assert np.isfinite(rep.q_stat) and 0 <= rep.p_value <= 1


def test_rescaling_invariance(hfit, garch11_series):
    ens = run_ensemble(garch11_series, hfit, B=200, seed=8)
    res = weighted_residuals(hfit)
    c = 7.3
    base = portmanteau_from(qacf(res, 0.1), ens.t_stat, hfit.n, 0.1)
    scaled_res = residuals_from(c * hfit.responses, hfit.vol_path.design, hfit.vol_path.h,
                                c * hfit.theta_tau, hfit.solution.active_basis)
    np.testing.assert_allclose(scaled_res.eps_hat, c * res.eps_hat, rtol=1e-12, atol=1e-13)
    np.testing.assert_array_equal(np.sign(scaled_res.eps_hat), np.sign(res.eps_hat))
    r_c = qacf(scaled_res, 0.1)
    np.testing.assert_allclose(r_c, qacf(res, 0.1), rtol=1e-10)
    # T-statistics recomputed from rescaled replicate residuals are unchanged
    rep = portmanteau_from(r_c, ens.t_stat, hfit.n, 0.1)
    assert rep.q_stat == pytest.approx(base.q_stat, rel=1e-9)


def test_bootstrap_qacf_centering(hfit, garch11_series):
    # reweighting alone is exactly centered since E(w) = 1
    res = weighted_residuals(hfit)
    r = qacf(res, 0.1)
    law = WeightLaw("W1")
    d = np.array([weighted_qacf(res.eps_hat, law.draw(np.random.default_rng(i), hfit.n), 0.1,
                                res.sigma2_a) - r for i in range(2000)])
    mc_se = d.std(axis=0, ddof=1) / np.sqrt(len(d))
    assert np.all(np.abs(d.mean(axis=0)) < 3 * mc_se)
    # after the quantile refit, sign flips of near-zero residuals leave a
    # bias that vanishes slowly in n; it stays well inside the spread
    t = run_ensemble(garch11_series, hfit, B=2000, seed=21).t_stat
    assert np.all(np.abs(t.mean(axis=0)) < t.std(axis=0))


def test_portmanteau_test_uses_ensemble(hfit, garch11_series):
    ens = run_ensemble(garch11_series, hfit, B=100, seed=2)
    rep = portmanteau_test(hfit, ens)
    assert rep.K == 6 and rep.n == 1000
    np.testing.assert_allclose(rep.r, qacf(weighted_residuals(hfit), 0.1))
    with pytest.raises(ValueError):
        portmanteau_test(hfit, ens, K=4)


@pytest.mark.slow
def test_qacf_spread_matches_bootstrap_covariance():
    n, reps = 2000, 300
    root_r, diag = [], []
    for i in range(reps):
        x = simulate(GarchParams(0.4, (0.4,), (0.4,)), InnovationLaw(), n, seed=4000 + i)
        f = fit_hybrid(x, tau=0.1)
        ens = run_ensemble(x, f, B=200, law=WeightLaw("W1"), seed=i)
        rep = portmanteau_test(f, ens)
        root_r.append(np.sqrt(n) * rep.r)
        diag.append(np.diag(rep.sigma3_star))
    emp = np.var(np.array(root_r), axis=0, ddof=1)
    boot = np.mean(np.array(diag), axis=0)
    assert np.all(np.abs(emp / boot - 1) < 0.25), (emp, boot)
