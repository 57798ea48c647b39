import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from roughbl.boundary import BoundaryMap, CovarianceSpec, constant_boundary, couple_pair, sample_periodic_boundary
from roughbl.kernels import hitting_prob_closed_form
from roughbl.scalar import (TiltedEnsemble, WalkerDomain, brownian_value, clt_report, coupled_table,
                            coupled_walk_differences, discrete_max_principle, pair_summaries, plateau_profile,
                            poisson_extend, solve_harmonic_cell, walk_exits)

SPEC, BMAP = CovarianceSpec(), BoundaryMap()


@pytest.fixture(scope="module")
def sinus():
    b = sample_periodic_boundary("sinusoid", 1.0, 0.5)
    return b, solve_harmonic_cell(b, top=8.0, h=1 / 32)


def test_flat_wall_is_constant():
    sol = solve_harmonic_cell(constant_boundary(0.3, 1.0), top=4.0, h=1 / 8)
    assert np.abs(sol.u + 0.3).max() < 1e-12
    est = brownian_value(constant_boundary(0.3, 1.0), (0.0, 0.5), paths=200, ykill=8.0)
    assert est["estimate"] == pytest.approx(-0.3, abs=1e-12)


def test_max_principle_and_limit_range(sinus):
    b, sol = sinus
    assert discrete_max_principle(sol) == 0.0
    assert b.omega.min() < sol.alpha < b.omega.max()
    assert sol.data_mean == pytest.approx(-0.5)


def test_poisson_extension_of_a_mode():
    L, n = 4.0, 64
    x = np.arange(n) * L / n
    tr = 0.2 + np.cos(2 * np.pi * x / L)
    for y in (0.5, 2.0):
        assert_allclose(poisson_extend(tr, L, y), 0.2 + np.exp(-2 * np.pi * y / L) * np.cos(2 * np.pi * x / L),
                        atol=1e-12)
    with pytest.raises(ValueError):
        poisson_extend(tr, L, 0.0)


def test_above_interpolates_between_abscissas(sinus):
    _, sol = sinus
    full = sol.above([1.0, 2.0])
    assert full.shape == (2, len(sol.trace_x))
    assert sol.above(1.0, x=sol.trace_x[3]) == pytest.approx(full[0, 3])


@pytest.mark.parametrize("start", [(0.0, 0.0), (0.3, 0.2)])
def test_walk_on_spheres_matches_grid_solution(sinus, start):
    b, sol = sinus
    est = brownian_value(b, start, paths=20_000, ykill=8.0, seed=3)
    fe = sol.value(np.array(start))[0]
    assert abs(est["estimate"] - fe) < 3 * est["std_error"] + 2e-3


def test_walks_are_deterministic_per_key(sinus):
    b, _ = sinus
    dom = WalkerDomain.from_boundary(b)
    a = walk_exits(dom, paths=500, seed=1, member=2, ykill=8.0)[0]
    assert np.array_equal(a, walk_exits(dom, paths=500, seed=1, member=2, ykill=8.0)[0])
    assert not np.array_equal(a, walk_exits(dom, paths=500, seed=1, member=3, ykill=8.0)[0])


def test_walk_rejects_bad_starts(sinus):
    b, _ = sinus
    dom = WalkerDomain.from_boundary(b)
    with pytest.raises(ValueError):
        walk_exits(dom, start=(0.0, -0.9), paths=10)
    with pytest.raises(ValueError):
        walk_exits(dom, start=(0.0, 70.0), paths=10, ykill=64.0)


def test_common_random_numbers_reduce_variance():
    pairs = {4.0: [couple_pair(SPEC, BMAP, 4.0, 32.0, seed=s, periodic=True) for s in range(4)]}
    shared = coupled_walk_differences(pairs, paths=2000, ykill=16.0)
    indep = coupled_walk_differences(pairs, paths=2000, ykill=16.0, independent=True)
    v_shared = np.mean([np.var(d) for d in shared[4.0]])
    v_indep = np.mean([np.var(d) for d in indep[4.0]])
    assert v_shared < 0.5 * v_indep


def test_identical_walls_give_zero_difference():
    pairs = {80.0: [couple_pair(SPEC, BMAP, 80.0, 64.0, seed=0, periodic=True)]}
    raw = coupled_walk_differences(pairs, paths=50, ykill=16.0)
    assert np.all(raw[80.0][0] == 0)


def test_coupled_table_on_synthetic_decay():
    rng = np.random.default_rng(0)
    ns = [4.0, 8.0, 16.0, 32.0]
    summ = {n: np.column_stack([rng.normal(0, 0.5 / n, 200), np.full(200, 1e-8)]) for n in ns}
    fit, table = coupled_table(summ, seed=1, sup_norm=1.0)
    assert fit.exponent == pytest.approx(-1.0, abs=0.15)
    assert table["within_bound"]
    assert_allclose(table["bound"], [4 * hitting_prob_closed_form(n) for n in ns])
    assert pair_summaries({2: [np.array([1.0, 3.0])]})[2][0] == pytest.approx([2.0, 1.0])


def test_clt_report_on_synthetic_fields():
    rng = np.random.default_rng(1)
    heights = np.array([4.0, 8.0, 16.0, 32.0])
    fields = 0.1 + rng.standard_normal((200, 4, 8)) / np.sqrt(heights)[None, :, None]
    rep = clt_report(fields, heights, omega0=np.full(200, 0.1))
    assert rep["fit"].exponent == pytest.approx(-1.0, abs=0.1)
    assert_allclose(rep["scaled"], 1.0, rtol=0.1)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(-5, 5, allow_nan=False))
def test_plateau_profile_range(s):
    g = float(plateau_profile(s))
    assert 0.0 <= g <= 1.0
    if abs(s) <= 1:
        assert g == 1.0
    if abs(s) >= 2:
        assert g == 0.0


def test_tilted_shift_matches_quadrature_and_mass():
    e = TiltedEnsemble(SPEC, BMAP, 16.0)
    assert e.m(0.0) == pytest.approx(e.m_quad(0.0), rel=1e-6)
    assert e.m(100.0) == 0.0
    # on the plateau sqrt(y2) m equals the mass of rho
    e4 = TiltedEnsemble(SPEC, BMAP, 4.0)
    assert np.sqrt(16.0) * e.m(0.0) == pytest.approx(np.sqrt(4.0) * e4.m(0.0), rel=1e-6)
    with pytest.raises(ValueError):
        TiltedEnsemble(SPEC, BMAP, 0.5)
