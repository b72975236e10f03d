import dataclasses

import numpy as np
import pytest

from garchqr import bootstrap as bs
from garchqr.bootstrap import (MAMMEN_HIGH, MAMMEN_LOW, BootstrapError, WeightLaw, draw_weights,
                               replicate, run_ensemble, summarize, theta_star_update)
from garchqr.garch import recursion
from garchqr.hybrid import fit_hybrid
from garchqr.qmle import _assemble
from garchqr.quantreg import solve_arrays
from garchqr.series import ReturnSeries


@pytest.fixture(scope="module")
def hfit(garch11_series):
    return fit_hybrid(garch11_series, tau=0.1)


def test_law_aliases():
    assert WeightLaw("W1").kind == "exponential"
    assert WeightLaw("w2").label == "W2"
    assert WeightLaw("W3").label == "W3"
    with pytest.raises(ValueError):
        WeightLaw("W4")


def test_w2_support():
    w = draw_weights(WeightLaw("W2"), 10_000, seed=1)
    assert set(np.unique(w)) == {0.0, 2.0}


def test_w3_support_and_probabilities():
    s5 = np.sqrt(5.0)
    assert MAMMEN_LOW == pytest.approx((3 - s5) / 2)
    assert MAMMEN_HIGH == pytest.approx((3 + s5) / 2)
    w = draw_weights(WeightLaw("W3"), 1_000_000, seed=2)
    assert set(np.unique(w)) == {MAMMEN_LOW, MAMMEN_HIGH}
    p_low = (s5 + 1) / (2 * s5)
    assert np.mean(w == MAMMEN_LOW) == pytest.approx(p_low, abs=0.002)


@pytest.mark.parametrize("law", ["W1", "W2", "W3"])
def test_law_moments(law):
    w = draw_weights(WeightLaw(law), 1_000_000, seed=3)
    assert abs(w.mean() - 1) < 0.01
    assert abs(w.var() - 1) < 0.02
    assert np.all(w >= 0)
    np.testing.assert_array_equal(w, draw_weights(WeightLaw(law), 1_000_000, seed=3))


def test_update_is_identity_at_unit_weights(hfit):
    th = theta_star_update(hfit.qmle, np.ones(hfit.n))
    np.testing.assert_array_equal(th, hfit.qmle.theta_hat.vector)


def test_update_hand_check_five_points():
    x = np.array([0.3, -1.2, 0.8, 0.1, -0.5])
    theta = np.array([0.5, 0.3])
    w = np.array([0.2, 1.7, 0.9, 2.4, 0.8])
    f = _assemble(theta, ReturnSeries(x), 0, 1, True, 0)
    # explicit loops
    x2 = x ** 2
    init = x2.mean()
    h, grads = [], []
    for t in range(5):
        lag = x2[t - 1] if t > 0 else init
        h.append(theta[0] + theta[1] * lag)
        grads.append(np.array([1.0, lag]))
    J = sum(np.outer(g, g) / hh ** 2 for g, hh in zip(grads, h)) / 5
    s = sum((w[t] - 1) * (1 - x2[t] / h[t]) / h[t] * grads[t] for t in range(5))
    expected = theta - np.linalg.solve(J, s) / 5
    np.testing.assert_allclose(theta_star_update(f, w), expected, rtol=1e-12)


def test_update_centering(hfit):
    law = WeightLaw("W1")
    diffs = np.array([theta_star_update(hfit.qmle, law.draw(bs.replicate_rng(5, i), hfit.n))
                      for i in range(2000)]) - hfit.qmle.theta_hat.vector
    mc_se = diffs.std(axis=0, ddof=1) / np.sqrt(2000)
    assert np.all(np.abs(diffs.mean(axis=0)) < 3 * mc_se)


def test_singular_information_raises(hfit):
    bad = dataclasses.replace(hfit.qmle, j_tilde=np.zeros((3, 3)))
    with pytest.raises(BootstrapError, match="longer series"):
        theta_star_update(bad, np.ones(hfit.n))


def test_unit_weights_reproduce_fit(garch11_series, hfit):
    rep = replicate(garch11_series, hfit, np.ones(hfit.n))
    np.testing.assert_allclose(rep.theta_tau_star, hfit.theta_tau, rtol=1e-10)
    np.testing.assert_allclose(rep.e_stat, 0.0, atol=1e-9)
    np.testing.assert_allclose(rep.t_stat, 0.0, atol=1e-9)
    assert rep.q_stat == pytest.approx(hfit.next_q, rel=1e-10)


def test_zero_weight_rows_can_be_deleted(garch11_series, hfit):
    w = draw_weights(WeightLaw("W2"), hfit.n, seed=9)
    rep = replicate(garch11_series, hfit, w)
    th = theta_star_update(hfit.qmle, w)
    np.testing.assert_allclose(rep.theta_star, th)
    _, z_star, _ = recursion(th, 1, 1, garch11_series.squared, hfit.vol_path.x2_init,
                             hfit.vol_path.h_init)
    keep = w > 0
    sol = solve_arrays(hfit.responses[keep], z_star[keep], (w / hfit.vol_path.h)[keep], 0.1)
    np.testing.assert_allclose(rep.theta_tau_star, sol.coef, rtol=1e-10)


def test_q_statistic_sign(garch11_series, hfit):
    w = draw_weights(WeightLaw("W1"), hfit.n, seed=4)
    rep = replicate(garch11_series, hfit, w)
    th = theta_star_update(hfit.qmle, w)
    h_star, _, _ = recursion(th, 1, 1, garch11_series.squared, hfit.vol_path.x2_init,
                             hfit.vol_path.h_init)
    z_next = np.array([1.0, garch11_series.squared[-1], h_star[-1]])
    lin = z_next @ rep.theta_tau_star
    assert np.sign(rep.q_stat) == np.sign(lin)
    assert rep.q_stat == pytest.approx(np.sign(lin) * np.sqrt(abs(lin)))


def test_ensemble_is_deterministic_and_worker_independent(garch11_series, hfit):
    a = run_ensemble(garch11_series, hfit, B=2, seed=17)
    b = run_ensemble(garch11_series, hfit, B=2, seed=17)
    np.testing.assert_array_equal(a.e_stat, b.e_stat)
    c = run_ensemble(garch11_series, hfit, B=24, seed=17, workers=1)
    d = run_ensemble(garch11_series, hfit, B=24, seed=17, workers=2)
    np.testing.assert_array_equal(c.e_stat, d.e_stat)
    np.testing.assert_array_equal(c.q_stat, d.q_stat)
    np.testing.assert_array_equal(c.e_stat[:2], a.e_stat)
    assert c.B == 24 and len(c.replicates) == 24
    assert np.all(np.isfinite(c.t_stat)) and c.t_stat.shape == (24, 6)


def test_ensemble_rejects_tiny_B(garch11_series, hfit):
    with pytest.raises(ValueError):
        run_ensemble(garch11_series, hfit, B=1)


def test_failures_are_aggregated(garch11_series, hfit, monkeypatch):
    real = bs._Context.run
    calls = {"k": 0}

    def flaky(self, w):
        calls["k"] += 1
        if calls["k"] % 50 == 0:
            raise ValueError("boom")
        return real(self, w)

    monkeypatch.setattr(bs._Context, "run", flaky)
    ens = run_ensemble(garch11_series, hfit, B=100, seed=1, max_failure_rate=0.05)
    assert ens.B == 98 and len(ens.failures) == 2
    with pytest.raises(BootstrapError, match="failed"):
        run_ensemble(garch11_series, hfit, B=100, seed=1)


def test_summarize_degenerate_ensemble(hfit):
    d = 3
    ens = bs.BootstrapEnsemble(np.zeros((100, d)), np.tile(hfit.theta_tau, (100, 1)),
                               np.zeros((100, d)), np.full(100, -1.5), np.zeros((100, 6)),
                               0, WeightLaw(), 6, 1000, hfit.theta_tau, np.arange(100))
    s = summarize(ens)
    np.testing.assert_array_equal(s.cov_matrix, np.zeros((d, d)))
    for j in range(d):
        assert s.ci(j) == (hfit.theta_tau[j], hfit.theta_tau[j])
    assert s.ci("next_quantile") == (-1.5, -1.5)


def test_summarize_nesting_and_permutation(garch11_series, hfit):
    ens = run_ensemble(garch11_series, hfit, B=200, seed=3)
    s95, s90 = summarize(ens, 0.95), summarize(ens, 0.90)
    for j in range(3):
        assert s95.ci(j)[0] <= s90.ci(j)[0] <= s90.ci(j)[1] <= s95.ci(j)[1]
    assert s95.ci("next_quantile")[0] <= s90.ci("next_quantile")[0]
    assert s90.ci("next_quantile")[1] <= s95.ci("next_quantile")[1]
    np.testing.assert_allclose(s95.cov_matrix, np.cov(ens.e_stat, rowvar=False))
    np.testing.assert_allclose(s95.std_errors, np.sqrt(np.diag(s95.cov_matrix) / hfit.n))
    perm = np.random.default_rng(0).permutation(200)
    shuffled = dataclasses.replace(ens, e_stat=ens.e_stat[perm], q_stat=ens.q_stat[perm])
    s_perm = summarize(shuffled)
    np.testing.assert_allclose(s_perm.cov_matrix, s95.cov_matrix, rtol=1e-12)
    np.testing.assert_allclose(s_perm.param_ci, s95.param_ci, rtol=1e-12)
    assert s_perm.quantile_ci == pytest.approx(s95.quantile_ci)


def test_full_reoptimization_is_stationary_and_near_one_step(garch11_series, hfit):
    from garchqr.qmle import _objective_and_gradient
    w = draw_weights(WeightLaw("W1"), hfit.n, seed=12)
    one = replicate(garch11_series, hfit, w).theta_star
    full = replicate(garch11_series, hfit, w, full_reoptimize=True).theta_star
    x2 = garch11_series.squared
    _, g = _objective_and_gradient(full, 1, 1, x2, x2.mean(), w)
    assert np.max(np.abs(g)) < 1e-3
    theta = hfit.qmle.theta_hat.vector
    # the one-step error is second order in the perturbation size
    assert np.linalg.norm(one - full) < 0.5 * np.linalg.norm(full - theta)
