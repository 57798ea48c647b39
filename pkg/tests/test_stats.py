import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughbl.stats import (DecayFit, bootstrap_mean_ci, correlation_scan, error_scaling_fit, estimate_alpha,
                           normality_test, v_growth_check, variance_decay_fit)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(-4, 4), c=st.floats(0.01, 100))
def test_power_law_recovered_exactly(p, c):
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    fit = DecayFit.from_points(x, c * x**p)
    assert fit.exponent == pytest.approx(p, abs=1e-9)
    assert np.exp(fit.intercept) == pytest.approx(c, rel=1e-9)
    assert fit.r_squared > 1 - 1e-9 or abs(p) < 1e-12


def test_semilog_fit_and_predict():
    x = np.linspace(0.25, 1.5, 6)
    fit = DecayFit.from_points(x, 3.0 * np.exp(-2 * np.pi * x), semilog=True)
    assert fit.exponent == pytest.approx(-2 * np.pi)
    assert fit.predict(1.0) == pytest.approx(3.0 * np.exp(-2 * np.pi))


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        DecayFit.from_points([1.0], [1.0])
    with pytest.raises(ValueError):
        DecayFit.from_points([1.0, 2.0], [1.0, 0.0])


def test_refit_and_round_trip():
    fit = DecayFit.from_points([1, 2, 4], [1.0, 0.6, 0.2])
    again = fit.refit()
    assert again.exponent == pytest.approx(fit.exponent) and again.r_squared == pytest.approx(fit.r_squared)
    assert set(fit.to_dict()) >= {"exponent", "intercept", "r_squared", "points", "ci95"}


def test_bootstrap_ci_covers_true_exponent():
    rng = np.random.default_rng(0)
    x = np.array([4.0, 8.0, 16.0, 32.0])
    samples = x**-1.0 * rng.exponential(1.0, size=(400, 4))
    fit = DecayFit.from_samples(x, samples, seed=1)
    assert abs(fit.exponent + 1.0) < 2 * fit.ci95 + 0.02
    assert 0 < fit.ci95 < 0.2


def test_estimate_alpha():
    r = estimate_alpha([1.0, 2.0, 3.0])
    assert r["mean"] == 2.0 and r["std_error"] == pytest.approx(1 / np.sqrt(3))
    with pytest.raises(ValueError):
        estimate_alpha([1.0])


def synthetic_fields(M, heights, alpha, rng):
    # Gaussian deviations with variance C / y2 per component
    H = len(heights)
    sd = np.sqrt(1.0 / np.asarray(heights))[None, :, None, None]
    return alpha + sd * rng.standard_normal((M, H, 4, 2))


def test_variance_decay_fit_on_synthetic_clt():
    rng = np.random.default_rng(3)
    heights = [4.0, 8.0, 16.0, 32.0]
    f = synthetic_fields(300, heights, 0.0, rng)
    f[..., 0] += 0.4
    rep = variance_decay_fit(f, heights, alpha=0.4)
    assert rep.fit.exponent == pytest.approx(-1.0, abs=0.1)
    assert np.allclose(rep.scaled, 2.0, rtol=0.15)
    assert all(p > 0.001 for p in rep.ks_pvalues)
    assert all(lo <= v <= hi for (lo, hi), v in zip(rep.variance_ci, rep.variances))


def test_variance_decay_fit_guards():
    f = np.zeros((10, 3, 2, 2))
    with pytest.raises(ValueError):
        variance_decay_fit(f, [1, 2, 3], 0.0)
    with pytest.raises(ValueError):
        variance_decay_fit(np.zeros((200, 2, 2, 2)), [1, 2], 0.0)


def test_v_growth_of_random_walk_is_linear():
    rng = np.random.default_rng(5)
    steps = rng.standard_normal((300, 256, 2))
    V = np.cumsum(steps, axis=1)
    t = np.arange(1, 257)
    fit = v_growth_check(t, V, t_min=4, t_max=128)
    assert fit.exponent == pytest.approx(1.0, abs=0.1)
    assert fit.extra["passes"]


def test_correlation_scan_white_and_ma1():
    rng = np.random.default_rng(7)
    e = rng.standard_normal((2000, 33))
    X = e[:, 1:] + e[:, :-1]
    c = correlation_scan(X, max_lag=3)
    assert c["value"][0] == pytest.approx(2.0, rel=0.1)
    assert c["value"][1] == pytest.approx(1.0, rel=0.15)
    assert abs(c["value"][2]) < 4 * c["std_error"][2]
    circ = correlation_scan(X, max_lag=3, circular=True)
    assert circ["std_error"][1] < c["std_error"][1]


def test_error_scaling_fit():
    eps = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
    out = error_scaling_fit(eps, {"a": eps, "b": 2 * eps**1.5})
    assert out["a"].exponent == pytest.approx(1.0) and out["b"].exponent == pytest.approx(1.5)
    with pytest.raises(ValueError):
        error_scaling_fit(eps[:3], {"a": eps[:3]})


def test_normality_test():
    rng = np.random.default_rng(2)
    assert normality_test(rng.standard_normal(500))["p_value"] > 0.01
    assert normality_test(rng.exponential(size=500))["p_value"] < 0.01
    assert normality_test(np.ones(10))["degenerate"]


def test_bootstrap_mean_ci_brackets_mean():
    v = np.random.default_rng(4).normal(1.0, 1.0, 400)
    lo, hi = bootstrap_mean_ci(v, seed=0)
    assert lo < v.mean() < hi and hi - lo < 0.4
