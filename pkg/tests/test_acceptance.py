"""Acceptance criteria at their stated tolerances, each with its runtime budget.

Every experiment runs through ``roughbl.cli.run`` with the default config.
The terminal summary prints one PASS/FAIL line per criterion."""

import time

import numpy as np
import pytest

from roughbl.boundary import constant_boundary
from roughbl.cli import ExperimentConfig, run
from roughbl.kernels import check_suite
from roughbl.stokes import CellDomain, poiseuille, solve_cell, solve_channel


def run_default(experiment, out, **kw):
    return run(ExperimentConfig.from_mapping({"experiment": experiment, "out": str(out), **kw}))


def note(record_property, **vals):
    record_property("detail", " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                                       for k, v in vals.items()))


@pytest.fixture(scope="module")
def clt_run(tmp_path_factory):
    return run_default("clt", tmp_path_factory.mktemp("clt"))


@pytest.mark.criterion(1, "kernel identity suite")
def test_c01_kernel_suite(record_property):
    t0 = time.perf_counter()
    rep = check_suite(seed=0, n_points=20)
    dt = time.perf_counter() - t0
    note(record_property, all_pass=rep["all_pass"], seconds=dt)
    assert rep["all_pass"]
    assert dt < 1.0


@pytest.mark.criterion(2, "flat-wall exactness")
def test_c02_flat_wall(record_property):
    t0 = time.perf_counter()
    c = 0.3
    sol = solve_cell(CellDomain(constant_boundary(c, 1.0), top_height=8.0, h=1 / 16))
    cell_err = float(np.abs(sol.v - [c, 0.0]).max())
    h = 1 / 24
    ch = solve_channel(None, 0.0, phi=1.0, h_bulk=h)
    pts = ch.mesh.dof_coords2
    ch_err = float(np.abs(ch.u - poiseuille(1.0)(pts[:, 0], pts[:, 1])).max())
    dt = time.perf_counter() - t0
    note(record_property, cell_err=cell_err, channel_err=ch_err, seconds=dt)
    assert cell_err <= 1e-8
    assert ch_err <= h**2          # C = 1
    assert dt < 10.0


@pytest.mark.criterion(3, "periodic boundary layer decay")
def test_c03_periodic_decay(tmp_path, record_property):
    man = run_default("decay", tmp_path)
    s = man.summary
    note(record_property, slope=s["slope"], r2=s["r_squared"], rel_error=s["rel_error"], seconds=man.wall_clock)
    assert s["r_squared"] > 0.98
    assert abs(s["slope"] + 2 * np.pi) <= 0.25 * 2 * np.pi
    assert man.wall_clock < 60.0


@pytest.mark.criterion(4, "random ensemble CLT variance decay")
def test_c04_clt_variance(clt_run, record_property):
    s = clt_run.summary
    note(record_property, exponent=s["variance_exponent"], samples=clt_run.config["params"]["samples"],
         seconds=clt_run.wall_clock)
    assert clt_run.config["params"]["samples"] >= 200
    assert clt_run.config["heights"] == [4.0, 8.0, 16.0, 32.0]
    assert -1.25 <= s["variance_exponent"] <= -0.75
    assert clt_run.wall_clock < 30 * 60


@pytest.mark.criterion(5, "V growth")
def test_c05_v_growth(clt_run, record_property):
    e = clt_run.summary["v_growth_exponent"]
    note(record_property, exponent=e)
    assert 0.75 <= e <= 1.2


@pytest.mark.criterion(6, "scalar coupled decay (walk on spheres)")
def test_c06_scalar_couple(tmp_path, record_property):
    man = run_default("scalar-couple", tmp_path)
    s, p = man.summary, man.config["params"]
    note(record_property, exponent=s["exponent"], within_bound=s["within_bound"], seconds=man.wall_clock)
    assert p["pairs"] >= 200 and p["paths"] >= 10_000
    assert man.config["n"] == [4.0, 8.0, 16.0, 32.0]
    assert -1.4 <= s["exponent"] <= -0.7
    assert s["within_bound"]
    assert man.wall_clock < 10 * 60


@pytest.mark.criterion(7, "Stokes coupled decay")
def test_c07_stokes_couple(tmp_path, record_property):
    man = run_default("couple", tmp_path)
    s = man.summary
    note(record_property, exponent=s["exponent"], pairs=man.config["params"]["pairs"], seconds=man.wall_clock)
    assert man.config["params"]["pairs"] >= 50
    assert man.config["n"] == [4.0, 8.0, 16.0, 32.0]
    assert s["exponent"] <= -0.5
    assert man.wall_clock < 60 * 60


@pytest.mark.criterion(8, "wall-law error exponents")
def test_c08_wall_law(tmp_path, record_property):
    man = run_default("wall-law", tmp_path)
    s = man.summary
    note(record_property, dirichlet=s["dirichlet_exponent"], navier=s["navier_exponent"], gap=s["gap"],
         seconds=man.wall_clock)
    assert man.config["params"]["phi"] == 0.1 and man.config["params"]["mode"] == "stokes"
    assert 0.8 <= s["dirichlet_exponent"] <= 1.2
    assert s["navier_exponent"] >= 1.35
    assert s["navier_exponent"] - s["dirichlet_exponent"] >= 0.25
    assert man.wall_clock < 60 * 60


@pytest.mark.criterion(9, "Green function decay, near field, scaling")
def test_c09_green(tmp_path, record_property):
    man = run_default("green", tmp_path)
    s = man.summary
    sc = s["scaling"]
    note(record_property, far=s["far_exponent"], near_r2=s["near_r_squared"],
         scaling_rel=sc["max_abs_diff"] / sc["max_abs"], seconds=man.wall_clock)
    assert -2.4 <= s["far_exponent"] <= -1.6
    assert s["near_r_squared"] > 0.95
    assert sc["max_abs_diff"] <= 1e-6 * sc["max_abs"]
    assert man.wall_clock < 20 * 60


@pytest.mark.criterion(10, "optimality (tilted measure)")
def test_c10_optimality(tmp_path, record_property):
    man = run_default("optimality", tmp_path)
    s = man.summary
    note(record_property, H_ratio=s["H_ratio"], floor=s["floor"], ci_low=s["floor_ci95"][0],
         seconds=man.wall_clock)
    assert s["H_ratio"] <= 3.0
    assert s["floor"] > 0 and s["floor_ci95"][0] > 0
    assert man.wall_clock < 15 * 60


@pytest.mark.criterion(11, "determinism across reruns and worker counts")
def test_c11_determinism(tmp_path, record_property):
    def csvs(d):
        return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}

    run_default("kernels-check", tmp_path / "k1", workers=1)
    run_default("kernels-check", tmp_path / "k2", workers=2)
    small = {"params": {"samples": 4, "window": 32.0}, "grid": {"top": 16.0}}
    run_default("alpha", tmp_path / "a1", workers=1, **small)
    run_default("alpha", tmp_path / "a2", workers=2, **small)
    same_k = csvs(tmp_path / "k1") == csvs(tmp_path / "k2") != {}
    same_a = csvs(tmp_path / "a1") == csvs(tmp_path / "a2") != {}
    note(record_property, kernels_identical=same_k, alpha_identical=same_a)
    assert same_k and same_a
