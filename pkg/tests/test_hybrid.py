import numpy as np
import pytest
from scipy import stats

from garchqr.garch import GarchParams, InnovationLaw, next_regressor, simulate, volatility_path
from garchqr.hybrid import fit_hybrid, fit_with_path, forecast_next, supplied_path
from garchqr.series import ReturnSeries, inverse_transform, transform

THETA0 = np.array([0.4, 0.4, 0.4])


def test_normal_quantile_constant():
    assert transform(stats.norm.ppf(0.1)) == pytest.approx(-1.6424, abs=1e-4)


def test_consistency_at_tau_01():
    target = transform(stats.norm.ppf(0.1)) * THETA0
    est = np.array([fit_hybrid(simulate(GarchParams(0.4, (0.4,), (0.4,)), InnovationLaw(), 2000,
                                        seed=300 + r), tau=0.1).theta_tau for r in range(60)])
    mc_se = est.std(axis=0, ddof=1) / np.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - target) < 3 * mc_se)


def test_median_with_symmetric_law():
    est = np.array([fit_hybrid(simulate(GarchParams(0.4, (0.4,), (0.4,)), InnovationLaw(), 2000,
                                        seed=700 + r), tau=0.5) for r in range(20)])
    thetas = np.array([f.theta_tau for f in est])
    mc_se = thetas.std(axis=0, ddof=1) / np.sqrt(len(thetas))
    assert np.all(np.abs(thetas.mean(axis=0)) < 3 * mc_se)
    assert np.median(np.abs(est[0].in_sample_q)) < 0.2


def test_known_volatility_constant_model_is_sort_oracle(rng):
    x = ReturnSeries(rng.standard_normal(101) * 0.7)
    path = supplied_path(np.full(101, 0.49), x, q=0, p=0)
    f = fit_with_path(x, path, 0.1)
    expected = inverse_transform(np.sort(x.transformed)[10])
    np.testing.assert_allclose(f.in_sample_q, expected, rtol=1e-14)
    assert f.next_q == pytest.approx(expected, rel=1e-14)
    assert expected == np.sort(x.values)[10]


def test_supplied_path_matches_recursion(garch11_series):
    params = GarchParams(0.4, (0.4,), (0.4,))
    rec = volatility_path(params, garch11_series)
    sup = supplied_path(rec.h, garch11_series, 1, 1, x2_init=rec.x2_init, h_init=rec.h_init)
    np.testing.assert_allclose(sup.design, rec.design, rtol=1e-14)


def test_hand_forecast_arch1():
    x = ReturnSeries([0.5, -1.0])
    path = volatility_path(GarchParams(1.0, (0.5,), ()), x)
    z = next_regressor(path, x)
    np.testing.assert_array_equal(z, [1.0, 1.0])
    assert inverse_transform(z @ np.array([-1.0, -2.0])) == pytest.approx(-np.sqrt(3.0))


def test_fit_invariants(garch11_series):
    f = fit_hybrid(garch11_series, tau=0.05)
    lin = f.vol_path.design @ f.theta_tau
    assert np.all(np.isfinite(f.in_sample_q))
    np.testing.assert_array_equal(np.sign(f.in_sample_q), np.sign(lin))
    np.testing.assert_allclose(f.in_sample_q, inverse_transform(lin))
    assert forecast_next(f, garch11_series) == f.next_q
    assert f.next_q == pytest.approx(inverse_transform(f.next_z @ f.theta_tau))
    assert np.sign(f.next_q) == np.sign(f.next_z @ f.theta_tau)
    np.testing.assert_allclose(f.solution.coef, f.theta_tau)
    with pytest.raises(ValueError):
        forecast_next(f, garch11_series.head(10))


def test_unweighted_uses_unit_weights(garch11_series):
    f = fit_hybrid(garch11_series, tau=0.1, weighted=False)
    from garchqr.quantreg import solve_arrays
    sol = solve_arrays(garch11_series.transformed, f.vol_path.design, np.ones(1000), 0.1)
    np.testing.assert_allclose(f.theta_tau, sol.coef)
    assert not f.qparams.weighted


def test_violation_rate_within_binomial_band():
    tau, n = 0.05, 2000
    rates = []
    for r in range(10):
        x = simulate(GarchParams(0.4, (0.4,), (0.4,)), InnovationLaw(), n, seed=900 + r)
        f = fit_hybrid(x, tau=tau)
        rates.append(np.mean(x.values < f.in_sample_q))
    band = 3 * np.sqrt(tau * (1 - tau) / n)
    assert all(abs(v - tau) <= band for v in rates)


def test_quantile_levels_rarely_cross():
    ok = 0
    for r in range(40):
        x = simulate(GarchParams(0.4, (0.4,), (0.4,)), InnovationLaw(), 1000, seed=1500 + r)
        f1 = fit_hybrid(x, tau=0.05)
        f2 = fit_hybrid(x, tau=0.1, qmle_fit=f1.qmle)
        ok += f1.next_q <= f2.next_q
    assert ok / 40 >= 0.95


def test_tau_validation(garch11_series):
    with pytest.raises(ValueError):
        fit_hybrid(garch11_series, tau=1.0)
