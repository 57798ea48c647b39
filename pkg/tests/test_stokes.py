import numpy as np
import pytest
from numpy.testing import assert_allclose

from roughbl.boundary import (BoundaryMap, CovarianceSpec, constant_boundary, sample_boundary,
                              sample_periodic_boundary, translate)
from roughbl.stokes import (CellDomain, GreenDomain, SolverError, build_approximation, build_corrector,
                            cell_field, estimate_green, green_near_field_fit, green_scaling_check,
                            green_translation_check, poiseuille, reconstruct_trace_field, solve_cell,
                            solve_channel, solve_channel_navier, stress_jump_check, u1_profile, v_mean_square)


@pytest.fixture(scope="module")
def sinus():
    b = sample_periodic_boundary("sinusoid", 1.0, 0.5)
    return solve_cell(CellDomain(b, top_height=8.0, h=1 / 16))


@pytest.fixture(scope="module")
def green_dom():
    b = sample_boundary(CovarianceSpec(), BoundaryMap(), 64.0, seed=1, x0=-32.0)
    return GreenDomain(b, half_width=16, top=16, h_fine=0.05, h_coarse=2, fine_radius=0.25)


def test_flat_wall_gives_uniform_shear_free_flow():
    sol = solve_cell(CellDomain(constant_boundary(0.3, 1.0), top_height=4.0, h=1 / 8))
    assert sol.alpha == pytest.approx(0.3, abs=1e-12)
    assert_allclose(sol.v, np.tile([0.3, 0.0], (len(sol.v), 1)), atol=1e-12)


def test_solver_diagnostics(sinus):
    assert sinus.residual < 1e-9
    assert sinus.divergence < 1e-10
    assert sinus.energy == pytest.approx(sinus.boundary_work, rel=1e-10)


def test_slip_constant_plus_energy_is_mean_depth(sinus):
    # discrete identity: alpha = mean depth - Dirichlet energy of the cell flow
    b = sinus.domain.boundary
    assert sinus.alpha + sinus.energy == pytest.approx(-b.omega.mean(), abs=1e-10)
    assert 0 < sinus.alpha < 0.5


def test_slip_constant_converges_at_second_order():
    b = sample_periodic_boundary("sinusoid", 1.0, 0.5)
    a = [solve_cell(CellDomain(b, top_height=8.0, h=h)).alpha for h in (1 / 8, 1 / 16, 1 / 32)]
    rate = np.log2(abs(a[0] - a[1]) / abs(a[1] - a[2]))
    assert rate > 1.7


def test_translated_wall_gives_same_slip_constant(sinus):
    b = sinus.domain.boundary
    moved = solve_cell(CellDomain(translate(b, 0.37), top_height=8.0, h=1 / 16))
    assert moved.alpha == pytest.approx(sinus.alpha, abs=1e-4)


def test_stress_jump_is_minus_one(sinus):
    assert stress_jump_check(sinus) == pytest.approx(-1.0, abs=0.05)


def test_fourier_extension_matches_fe_and_decays(sinus):
    devs = []
    for y in (0.25, 0.5, 1.0):
        f = reconstruct_trace_field(sinus.trace_x, sinus.trace0, 1.0, y)
        fe = sinus.value(np.column_stack([sinus.trace_x, np.full(len(sinus.trace_x), y)]))
        assert np.abs(f - fe).max() < 1e-5
        devs.append(np.abs(f - [sinus.alpha, 0.0]).max())
    assert devs[0] > devs[1] > devs[2]
    # leading mode decays like (1 + 2 pi y2) exp(-2 pi y2) for a unit period
    env = lambda y: (1 + 2 * np.pi * y) * np.exp(-2 * np.pi * y)
    assert devs[2] < 1.05 * devs[0] * env(1.0) / env(0.25)


def test_cell_field_switches_smoothly(sinus):
    pts = np.array([[0.2, 1.99], [0.2, 2.01]])
    v = cell_field(sinus, pts, fe_height=2.0)
    assert np.abs(v[0] - v[1]).max() < 1e-4


def test_v_mean_square_oracle():
    # trace alpha + a cos(2 pi x / L): E|V(t)|^2 = (a L / 2 pi)^2 (1 - cos(2 pi t / L))
    L, a, alpha = 8.0, 0.3, 0.2
    x = np.arange(512) * (L / 512)
    tr = np.column_stack([alpha + a * np.cos(2 * np.pi * x / L), np.zeros_like(x)])
    lags = np.array([1.0, 2.0, 4.0, 10.0])
    exact = (a * L / (2 * np.pi)) ** 2 * (1 - np.cos(2 * np.pi * lags / L))
    assert_allclose(v_mean_square(x, tr, L, alpha, lags), exact, rtol=1e-6, atol=1e-12)
    const = np.column_stack([np.full_like(x, alpha), np.zeros_like(x)])
    assert_allclose(v_mean_square(x, const, L, alpha, lags), 0.0, atol=1e-20)


def test_flat_channel_is_poiseuille():
    sol = solve_channel(None, 0.0, phi=0.7)
    assert sol.l2_error(poiseuille(0.7)) < 1e-10
    assert_allclose(sol.section_fluxes(), 0.7, rtol=1e-10)


def test_channel_mode_validation():
    with pytest.raises(ValueError):
        solve_channel(None, 0.0, phi=1.0, mode="euler")


def test_navier_profile_invariants():
    prof = solve_channel_navier(0.8, 0.1)
    assert prof.flux() == pytest.approx(0.8)
    assert prof(1.0) == pytest.approx(0.0)
    assert prof(0.0) == pytest.approx(0.1 * prof.derivative(0.0))
    assert solve_channel_navier(0.8, 0.0)(0.5) == pytest.approx(poiseuille(0.8)(0, [0.5])[0, 0])
    with pytest.raises(ValueError):
        solve_channel_navier(1.0, -0.1)


def test_u1_profile_boundary_values():
    assert u1_profile(0.4, 0.0) == 0.0
    assert u1_profile(0.4, 1.0) == pytest.approx(-0.4)


def test_approximation_meets_no_slip_on_top(sinus):
    eps = 1 / 8
    corr = build_corrector(sinus, eps)
    app = build_approximation(sinus, corr, eps, phi=1.0)
    x1 = np.linspace(0, eps, 7)
    top = app(x1, np.ones_like(x1))
    assert np.abs(top[:, 0]).max() < 1e-10
    # v2 keeps the discrete trace flux, small but not zero
    assert np.abs(top[:, 1]).max() < 1e-5
    # the corrector vanishes on the mean wall
    assert np.abs(corr.velocity(x1, np.zeros_like(x1))).max() < 1e-14


def test_solver_error_is_runtime_error():
    assert issubclass(SolverError, RuntimeError)


def test_green_scaling_and_translation(green_dom):
    z = np.array([0.0, 0.5])
    ys = np.array([[2.0, 0.5], [0.0, 3.0]])
    sc = green_scaling_check(green_dom, z, ys, factor=0.5)
    assert sc["max_abs_diff"] <= 1e-6 * sc["max_abs"]
    tr = green_translation_check(green_dom, z, ys, 3.0)
    assert tr["max_abs_diff"] <= 1e-6 * tr["max_abs"]


def test_green_reciprocity_and_near_field(green_dom):
    z, y = np.array([0.0, 0.5]), np.array([2.0, 1.0])
    g = estimate_green(green_dom, z, extra_sources=[y], probes=[y])
    assert_allclose(g.value(y, 0), g.value(z, 1).T, atol=2e-3 * np.abs(g.value(y, 0)).max())
    fit = green_near_field_fit(g, [0.1, 0.2, 0.4])
    assert fit["slope"] < 0 and fit["r_squared"] > 0.95


def test_green_rejects_bad_sources(green_dom):
    with pytest.raises(ValueError):
        estimate_green(green_dom, [0.0, -2.0])
    with pytest.raises(ValueError):
        estimate_green(green_dom, [0.0, 12.0])
