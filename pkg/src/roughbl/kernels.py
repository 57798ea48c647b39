"""Closed-form kernels: the half-plane Stokes Poisson matrix and its derivatives,
the wall jump data of the flat Green function, the harmonic Poisson kernel and
Brownian hitting-time formulas."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from ._kernel_derivs import TABLE as _DERIVS


@dataclass(frozen=True)
class KernelMatrix:
    """2x2 kernel value; ``entries`` may carry extra trailing broadcast axes."""

    entries: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.entries[0, 1], self.entries[1, 0]))


def _check_height(y2):
    y2 = np.asarray(y2, dtype=float)
    if np.any(y2 <= 0):
        raise ValueError("kernel evaluated at y2 <= 0")
    return y2


def _pack(g11, g12, g22) -> KernelMatrix:
    g11, g12, g22 = np.broadcast_arrays(g11, g12, g22)
    return KernelMatrix(np.array([[g11, g12], [g12, g22]], dtype=float))


def stokes_poisson(t, y2) -> KernelMatrix:
    """G(t, y2) = 2 y2 / (pi (t^2 + y2^2)^2) [[t^2, t y2], [t y2, y2^2]]."""
    y2 = _check_height(y2)
    return _pack(*_DERIVS[(0, 0)](np.asarray(t, float), y2))


def stokes_poisson_deriv(beta, t, y2) -> KernelMatrix:
    """``d_t^beta1 d_y2^beta2 G`` for ``|beta| <= 3`` (closed form)."""
    b1, b2 = (int(b) for b in beta)
    if b1 < 0 or b2 < 0 or b1 + b2 > 3:
        raise ValueError("derivative order |beta| must be in 0..3")
    y2 = _check_height(y2)
    return _pack(*_DERIVS[(b1, b2)](np.asarray(t, float), y2))


def stokes_poisson_hat(k, y2):
    """Fourier multipliers of G in t, with f^(k) = int f(t) e^{-ikt} dt.

    Returns ``(m11, m12, m22)``; m12 is purely imaginary."""
    k = np.asarray(k, dtype=float)
    a = np.abs(k) * y2
    e = np.exp(-a)
    return (1.0 - a) * e, -1j * k * y2 * e, (1.0 + a) * e


def stokes_jump_data(z, y1, reading: str = "printed") -> KernelMatrix:
    """Jump of the flat Green function's wall stress at (y1, 0+).

    ``reading="printed"`` evaluates the displayed matrix with its y2 entries at
    y2 = 0, so only the (1,1) entry survives.  ``reading="kernel"`` returns the
    Poisson kernel G(z1 - y1, z2), the value the jump should equal if the
    printed y2 is read as z2; the two are kept apart so the suite can report
    the discrepancy."""
    z1, z2 = float(z[0]), float(z[1])
    if z2 <= 0:
        raise ValueError("source must lie above the wall line (z2 > 0)")
    s = z1 - np.asarray(y1, dtype=float)
    if reading == "kernel":
        return stokes_poisson(s, z2)
    if reading != "printed":
        raise ValueError(f"unknown reading {reading!r}")
    pref = 2.0 * z2 / (np.pi * (s**2 + z2**2) ** 2)
    zero = np.zeros_like(pref)
    return _pack(pref * s**2, zero, zero)


def harmonic_poisson(t, y2):
    """(1/pi) y2 / (t^2 + y2^2), the unit-mass Poisson kernel of the half-plane."""
    y2 = _check_height(y2)
    t = np.asarray(t, dtype=float)
    return y2 / (np.pi * (t**2 + y2**2))


def harmonic_poisson_hat(k, y2):
    return np.exp(-np.abs(np.asarray(k, float)) * y2)


def integrate_line(fun, y2: float, **kw) -> float:
    """int_R fun(t) dt via t = y2 tan(theta), exact for algebraic tails."""

    def g(th):
        c = np.cos(th)
        return fun(y2 * np.tan(th)) * y2 / (c * c)

    kw.setdefault("epsabs", 1e-13)
    kw.setdefault("epsrel", 1e-12)
    kw.setdefault("limit", 200)
    val, _ = integrate.quad(g, -np.pi / 2, np.pi / 2, **kw)
    return float(val)


@dataclass(frozen=True)
class HittingDensity:
    """First-passage density of a standard Brownian motion.

    ``kind="lateral"`` with level n is the passage time at n/2 (the lateral
    excursion of half-width n measured from the centre);  ``kind="downward"``
    is the passage time at the wall level ``level`` (1 for T_{-1})."""

    level: float
    kind: str = "lateral"

    @property
    def barrier(self) -> float:
        return 0.5 * self.level if self.kind == "lateral" else float(self.level)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        a = self.barrier
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a / np.sqrt(2 * np.pi * t**3) * np.exp(-a * a / (2 * t))
        return np.where(t > 0, out, 0.0)

    def survival(self, t):
        """P(T > t) = erf(a / sqrt(2 t))."""
        t = np.asarray(t, dtype=float)
        return special.erf(self.barrier / np.sqrt(2 * np.maximum(t, 1e-300)))

    def total_mass(self) -> float:
        # t = a^2 / s^2 maps (0, inf) to (0, inf) with a Gaussian integrand
        a = self.barrier
        val, _ = integrate.quad(lambda s: self.pdf(a * a / s**2) * 2 * a * a / s**3, 0, np.inf,
                                epsabs=1e-13, epsrel=1e-12, limit=200)
        return float(val)


def hitting_prob_lateral_before_down(n: float) -> float:
    """P(T_{n/2}(B1) < T_{-1}(B2)) for independent Brownian motions.

    Integrates the lateral density against the survival function of the
    downward time (itself the integral of the downward density)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 1.0
    lat = HittingDensity(n, "lateral")
    down = HittingDensity(1.0, "downward")
    a = lat.barrier

    def integrand(s):
        t = a * a / s**2
        return lat.pdf(t) * down.survival(t) * 2 * a * a / s**3

    val, _ = integrate.quad(integrand, 0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(val)


def hitting_prob_closed_form(n: float) -> float:
    """(2/pi) arctan(2/n): closed form of the same probability."""
    if n == 0:
        return 1.0
    return float(2.0 / np.pi * np.arctan(2.0 / n))


def check_suite(seed: int = 0, n_points: int = 20) -> dict:
    """Kernel invariants as a JSON-ready report."""
    rng = np.random.default_rng(seed)
    report: dict = {"checks": []}

    def add(name, value, tol, ok=None):
        ok = bool(value <= tol) if ok is None else bool(ok)
        report["checks"].append({"name": name, "value": float(value), "tol": float(tol), "pass": ok})

    for y2 in (0.5, 1.0, 4.0):
        mats = np.array([[integrate_line(lambda t, i=i, j=j: stokes_poisson(t, y2).entries[i, j], y2)
                          for j in range(2)] for i in range(2)])
        add(f"int_G_identity_y2={y2}", np.abs(mats - np.eye(2)).max(), 1e-6)
        add(f"int_poisson_unit_y2={y2}", abs(integrate_line(lambda t: harmonic_poisson(t, y2), y2) - 1), 1e-8)

    pts = np.column_stack([rng.uniform(-3, 3, n_points), rng.uniform(0.5, 3, n_points)])
    worst = 0.0
    for order in range(1, 4):
        for b1 in range(order + 1):
            beta = (b1, order - b1)
            low = (b1 - 1, beta[1]) if b1 > 0 else (b1, beta[1] - 1)
            axis = 0 if b1 > 0 else 1
            for t, y in pts:
                hstep = 1e-4 * max(1.0, abs(t) if axis == 0 else y)
                d = np.zeros(2)
                d[axis] = hstep
                fp = stokes_poisson_deriv(low, t + d[0], y + d[1]).entries
                fm = stokes_poisson_deriv(low, t - d[0], y - d[1]).entries
                fd = (fp - fm) / (2 * hstep)
                ex = stokes_poisson_deriv(beta, t, y).entries
                scale = np.abs(ex).max()
                worst = max(worst, np.abs(fd - ex).max() / scale)
    add("derivative_vs_finite_difference", worst, 1e-5)

    for n in (1.0, 4.0, 16.0):
        add(f"lateral_density_mass_n={n}", abs(HittingDensity(n, "lateral").total_mass() - 1), 1e-6)
    add("downward_density_mass", abs(HittingDensity(1.0, "downward").total_mass() - 1), 1e-6)
    add("hitting_prob_n=2", abs(hitting_prob_lateral_before_down(2.0) - 0.5), 1e-8)
    scaled = [hitting_prob_lateral_before_down(n) * np.sqrt(n * n + 1) for n in (1, 2, 4, 8, 16, 32, 64)]
    add("hitting_prob_bound_shape", max(scaled), 2.0)

    # printed jump matrix versus the Poisson kernel at the source offset
    z = (0.3, 1.2)
    gap = max(np.abs(stokes_jump_data(z, y1).entries - stokes_jump_data(z, y1, "kernel").entries).max()
              for y1 in np.linspace(-3, 3, 7))
    report["jump_data_printed_vs_kernel_gap"] = float(gap)
    report["all_pass"] = all(c["pass"] for c in report["checks"])
    return report
