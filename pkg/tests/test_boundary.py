import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, stats as sps

from roughbl.boundary import (BoundaryMap, CovarianceSpec, RoughBoundary, cache_path, constant_boundary,
                              couple_pair, load_cache, sample_boundary, sample_periodic_boundary,
                              save_cache, translate)

SPEC = CovarianceSpec()
BMAP = BoundaryMap()


def gaussian_at(seed, x, window=16.0):
    b = sample_boundary(SPEC, BMAP, window, seed, x0=-window / 2)
    return b.evaluator.gaussian(np.asarray(x, float))[0]


def test_zero_amplitude_gives_constant_wall():
    b = sample_boundary(CovarianceSpec(amplitude=0.0), BMAP, 32.0, seed=4)
    assert np.all(b.omega == BMAP.center)
    assert np.all(b.omega1 == 0)


def test_rho_is_self_convolution_of_bump():
    # independent oracle: direct quadrature of f * f
    r = SPEC.bump_half_width
    for lag in (0.0, 0.7, 2.5, 3.9):
        direct = integrate.quad(lambda u: SPEC.bump(u) * SPEC.bump(u - lag), lag - r, r, limit=200)[0]
        assert SPEC.rho(lag) == pytest.approx(direct, rel=1e-6, abs=1e-14)
    assert SPEC.rho(4.5) == 0.0


def test_covariance_lag_zero_and_beyond_kappa():
    X = np.array([gaussian_at(s, [0.0, 0.25, 5.0]) for s in range(4000)])
    var = X[:, 0] ** 2
    se = var.std(ddof=1) / np.sqrt(len(var))
    assert abs(var.mean() - SPEC.rho(0.0)) < 3 * se
    prod = X[:, 1] * X[:, 2]            # lag 4.75 > kappa = 4
    assert abs(prod.mean()) < 3 * prod.std(ddof=1) / np.sqrt(len(prod))


def test_stationarity_of_mean_and_variance():
    X = np.array([gaussian_at(s, [-5.0, 0.0, 3.3]) for s in range(4000)])
    m, v = X.mean(axis=0), X.var(axis=0, ddof=1)
    se_m = np.sqrt(v / len(X))
    assert np.all(np.abs(m) < 3 * se_m)
    # variance of a sample variance ~ 2 sigma^4 / (M - 1) for Gaussians
    se_v = np.sqrt(2 * v.mean() ** 2 / (len(X) - 1))
    assert np.ptp(v) < 2 * 3 * se_v


def test_window_shift_reproduces_the_same_field():
    a = sample_boundary(SPEC, BMAP, 32.0, seed=9, x0=0.0)
    b = sample_boundary(SPEC, BMAP, 32.0, seed=9, x0=8.0)
    assert_allclose(a.omega[16:], b.omega[:-16], atol=1e-14)


def test_rejects_small_window():
    with pytest.raises(ValueError):
        sample_boundary(SPEC, BMAP, 2 * SPEC.kappa - 1, seed=0)


def test_second_derivative_refinement_is_second_order():
    b = sample_boundary(SPEC, BMAP, 32.0, seed=2)
    x0 = 10.3
    errs = []
    for h in (0.1, 0.05, 0.025):
        w = b.evaluate(np.array([x0 - h, x0, x0 + h]))[0]
        fd = (w[0] - 2 * w[1] + w[2]) / h**2
        errs.append(abs(fd - b.evaluate(np.array([x0]))[2][0]))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.7)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), amp=st.floats(0.0, 5.0),
       kind=st.sampled_from(["scaled-tanh", "scaled-atan"]), periodic=st.booleans())
def test_range_strictly_inside(seed, amp, kind, periodic):
    b = sample_boundary(CovarianceSpec(amplitude=amp), BoundaryMap(kind=kind), 16.0, seed, periodic=periodic)
    assert np.all(b.omega > -1) and np.all(b.omega < 0)


def test_sinusoid_closed_form_and_lipschitz():
    L, d = 2.0, 0.4
    b = sample_periodic_boundary("sinusoid", L, d)
    assert_allclose(b.omega, -(1 + d * np.cos(2 * np.pi * b.x_grid / L)) / 2, atol=1e-15)
    assert b.omega.min() >= -(1 + d) / 2 - 1e-15 and b.omega.max() <= -(1 - d) / 2 + 1e-15
    x = np.linspace(0, L, 20001)
    w = b.evaluate(x)[0]
    K_fd = np.max(np.abs(np.diff(w) / np.diff(x)))
    assert K_fd == pytest.approx(np.pi * d / L, rel=0.01)
    assert b.lipschitz_K == pytest.approx(np.pi * d / L, rel=0.01)


@pytest.mark.parametrize("shape", ["sinusoid", "bump-train"])
def test_periodic_translation_by_period(shape):
    b = sample_periodic_boundary(shape, 1.5, 0.5)
    t = translate(b, 1.5)
    assert_allclose(t.omega, b.omega, atol=1e-12)


@pytest.mark.parametrize("depth", [0.0, 1.0, 1.2])
def test_periodic_depth_rejected(depth):
    with pytest.raises(ValueError):
        sample_periodic_boundary("sinusoid", 1.0, depth)


def test_translate_identity_and_group_law():
    b = sample_boundary(SPEC, BMAP, 32.0, seed=5)
    assert_allclose(translate(b, 0.0).omega, b.omega)
    back = translate(translate(b, 2.5), -2.5)
    assert_allclose(back.x_grid, b.x_grid)
    x = np.array([3.1, 7.7])
    assert_allclose(back.evaluate(x)[0], b.evaluate(x)[0], atol=1e-14)
    # tau_h omega (x) = omega(x + h)
    assert_allclose(translate(b, 2.5).evaluate(x)[0], b.evaluate(x + 2.5)[0], atol=1e-14)


def test_couple_pair_agreement_and_full_overlap():
    p = couple_pair(SPEC, BMAP, 8.0, 64.0, seed=1)
    inside = np.abs(p.left.x_grid) <= 8.0
    assert np.array_equal(p.left.omega[inside], p.right.omega[inside])
    assert not np.array_equal(p.left.omega, p.right.omega)
    q = couple_pair(SPEC, BMAP, 80.0, 64.0, seed=1)
    assert np.array_equal(q.left.omega, q.right.omega)


def test_couple_pair_left_independent_of_n():
    a = couple_pair(SPEC, BMAP, 4.0, 64.0, seed=3)
    b = couple_pair(SPEC, BMAP, 16.0, 64.0, seed=3)
    assert np.array_equal(a.left.omega, b.left.omega)


def test_couple_pair_rejects_ambiguous_window():
    with pytest.raises(ValueError):
        couple_pair(SPEC, BMAP, 30.0, 32.0, seed=0)


def test_coupled_tails_uncorrelated():
    n = 4.0
    x = np.array([n + 2 * SPEC.kappa + 1.0])
    lr = []
    for s in range(1000):
        p = couple_pair(SPEC, BMAP, n, 32.0, seed=s)
        lr.append((p.left.evaluator.gaussian(x)[0][0], p.right.evaluator.gaussian(x)[0][0]))
    lr = np.array(lr)
    prod = lr[:, 0] * lr[:, 1]
    assert abs(prod.mean()) < 3 * prod.std(ddof=1) / np.sqrt(len(prod))


def test_coupled_marginal_matches_sample_boundary():
    left = [couple_pair(SPEC, BMAP, 4.0, 32.0, seed=s).left.omega[40] for s in range(600)]
    ref = [sample_boundary(SPEC, BMAP, 16.0, seed=10_000 + s).omega[5] for s in range(600)]
    assert sps.ks_2samp(left, ref).pvalue > 0.01


def test_csv_and_cache_round_trip(tmp_path):
    b = sample_boundary(SPEC, BMAP, 16.0, seed=8, periodic=True)
    b.to_csv(tmp_path / "b.csv")
    c = RoughBoundary.from_csv(tmp_path / "b.csv", period=16.0)
    assert np.array_equal(c.omega, b.omega) and np.array_equal(c.omega2, b.omega2)
    path = cache_path(tmp_path, SPEC, BMAP, 8)
    save_cache(b, path)
    d = load_cache(path)
    assert np.array_equal(d.omega, b.omega) and d.period == 16.0
    assert cache_path(tmp_path, SPEC, BMAP, 9) != path


def test_constant_boundary():
    b = constant_boundary(0.3, 8.0)
    assert np.all(b.omega == -0.3) and b.lipschitz_K == 0.0
