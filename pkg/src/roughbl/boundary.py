"""Stationary random rough walls, periodic walls and coupled pairs.

A random wall is ``omega = F(X)`` with ``X`` the moving average of white noise
against a compactly supported bump ``f``::

    X(x) = sqrt(h) * sum_j f(x - j h) xi_j

so that ``Cov X(x) X(x') ~ (f * f)(x - x')`` vanishes beyond ``kappa = 2 r``.
Innovations ``xi_j`` are drawn per absolute grid index from seeded blocks,
which makes translated windows reproduce the same field and lets two walls
share innovations exactly on a chosen index range.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

_BLOCK = 1024


@dataclass(frozen=True)
class CovarianceSpec:
    """Gaussian field parameters; ``kappa`` defaults to the support of f*f."""

    bump_half_width: float = 2.0
    amplitude: float = 1.0
    kappa: float | None = None
    grid_step: float = 0.5

    def __post_init__(self):
        if self.kappa is None:
            object.__setattr__(self, "kappa", 2.0 * self.bump_half_width)

    def validate(self) -> None:
        if self.bump_half_width <= 0 or self.grid_step <= 0:
            raise ValueError("bump_half_width and grid_step must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if self.kappa < 2 * self.bump_half_width - 1e-12:
            raise ValueError("kappa must cover the support of f*f (kappa >= 2 r)")
        if self.bump_half_width < 2 * self.grid_step:
            raise ValueError("grid_step too coarse to resolve the bump (need r >= 2 h)")

    @property
    def norm_const(self) -> float:
        """c with int f^2 = amplitude^2, f = c (1 - (x/r)^2)^3."""
        # int_{-r}^{r} (1 - u^2/r^2)^6 du = r * 2048 / 3003
        return self.amplitude / np.sqrt(self.bump_half_width * 2048.0 / 3003.0)

    def bump(self, u, order: int = 0):
        r, c = self.bump_half_width, self.norm_const
        u = np.asarray(u, dtype=float)
        q = 1.0 - (u / r) ** 2
        inside = q > 0
        q = np.where(inside, q, 0.0)
        if order == 0:
            v = c * q**3
        elif order == 1:
            v = -6.0 * c * u / r**2 * q**2
        elif order == 2:
            v = -6.0 * c / r**2 * q**2 + 24.0 * c * u**2 / r**4 * q
        else:
            raise ValueError("order must be 0, 1 or 2")
        return np.where(inside, v, 0.0)

    def rho(self, lag) -> np.ndarray:
        """Covariance (f*f)(lag) by adaptive quadrature."""
        r = self.bump_half_width
        out = []
        for d in np.atleast_1d(np.abs(np.asarray(lag, dtype=float))):
            if d >= 2 * r:
                out.append(0.0)
                continue
            val, _ = integrate.quad(lambda s: float(self.bump(s) * self.bump(s + d)), -r, r - d,
                                    epsabs=1e-14, epsrel=1e-12)
            out.append(val)
        return np.asarray(out) if np.ndim(lag) else out[0]

    def key(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class BoundaryMap:
    """Smooth increasing map from the Gaussian field to wall heights in (-1, 0)."""

    kind: str = "scaled-tanh"
    center: float = -0.5
    half_range: float = 0.3

    def validate(self) -> None:
        if self.kind not in ("scaled-tanh", "scaled-atan"):
            raise ValueError(f"unknown map kind {self.kind!r}")
        if not (0 < self.half_range < 0.5):
            raise ValueError("half_range must lie in (0, 0.5)")
        if not (-1 < self.center - self.half_range and self.center + self.half_range < 0):
            raise ValueError("map range must lie strictly inside (-1, 0)")

    @property
    def upper(self) -> float:
        return self.center + self.half_range

    @property
    def lower(self) -> float:
        return self.center - self.half_range

    def apply(self, X, X1, X2):
        """Return (omega, omega', omega'') from X and its derivatives."""
        a = self.half_range
        if self.kind == "scaled-tanh":
            th = np.tanh(X)
            s2 = 1.0 - th**2
            return self.center + a * th, a * s2 * X1, a * (s2 * X2 - 2.0 * th * s2 * X1**2)
        k = 2.0 / np.pi
        den = 1.0 + X**2
        return (self.center + a * k * np.arctan(X), a * k * X1 / den,
                a * k * (X2 / den - 2.0 * X * X1**2 / den**2))


class _Innovations:
    """White-noise innovations indexed by absolute grid index."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)

    def take(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return np.zeros(0)
        blocks = np.floor_divide(idx, _BLOCK)
        out = np.empty(idx.shape)
        for b in np.unique(blocks):
            rng = np.random.default_rng([self.seed, self.stream, int(b) + (1 << 40)])
            vals = rng.standard_normal(_BLOCK)
            sel = blocks == b
            out[sel] = vals[idx[sel] - b * _BLOCK]
        return out


@dataclass
class MovingAverageField:
    """Evaluator of ``F(X)`` and derivatives from stored innovations.

    ``lo`` is the first innovation index and ``xi`` the innovation values; with
    ``ring`` set, indices wrap modulo ``ring`` (periodic wall of period
    ``ring * h``)."""

    spec: CovarianceSpec
    bmap: BoundaryMap
    lo: int
    xi: np.ndarray
    ring: int | None = None

    def gaussian(self, x):
        """X, X', X'' at abscissas ``x``."""
        x = np.asarray(x, dtype=float)
        h, r = self.spec.grid_step, self.spec.bump_half_width
        m = int(np.ceil(r / h))
        base = np.floor(x / h).astype(np.int64)
        X = np.zeros_like(x)
        X1 = np.zeros_like(x)
        X2 = np.zeros_like(x)
        for k in range(-m, m + 2):
            j = base + k
            u = x - j * h
            if self.ring is None:
                pos = j - self.lo
                if np.any((pos < 0) | (pos >= len(self.xi))):
                    raise ValueError("abscissa outside the sampled innovation range")
            else:
                pos = np.mod(j - self.lo, self.ring)
            xi = self.xi[pos]
            X += self.spec.bump(u) * xi
            X1 += self.spec.bump(u, 1) * xi
            X2 += self.spec.bump(u, 2) * xi
        s = np.sqrt(h)
        return s * X, s * X1, s * X2

    def __call__(self, x):
        return self.bmap.apply(*self.gaussian(x))


@dataclass
class RoughBoundary:
    """Sampled wall with derivatives and optional exact evaluator."""

    x_grid: np.ndarray
    omega: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    period: float | None = None
    lipschitz_K: float = 0.0
    c2a_norm_bound: float = 0.0
    evaluator: Callable | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def grid_step(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    def evaluate(self, x):
        """(omega, omega', omega'') at arbitrary abscissas."""
        x = np.asarray(x, dtype=float)
        if self.evaluator is not None:
            return self.evaluator(x)
        # fall back to cubic interpolation of the samples
        from scipy.interpolate import CubicSpline
        if self.period is not None:
            xs = np.append(self.x_grid, self.x_grid[0] + self.period)
            cs = CubicSpline(xs, np.append(self.omega, self.omega[0]), bc_type="periodic")
            xx = self.x_grid[0] + np.mod(x - self.x_grid[0], self.period)
        else:
            cs = CubicSpline(self.x_grid, self.omega)
            xx = x
        return cs(xx), cs(xx, 1), cs(xx, 2)

    def __call__(self, x):
        return self.evaluate(x)[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "omega", "omega1", "omega2"])
            for row in zip(self.x_grid, self.omega, self.omega1, self.omega2):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, period: float | None = None) -> "RoughBoundary":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return _finish(data[:, 0], data[:, 1], data[:, 2], data[:, 3], period, None, {})


def _holder_quotient(x, w2, alpha=0.5, max_lag=16):
    q = 0.0
    for lag in range(1, min(max_lag, len(x) - 1) + 1):
        dx = np.abs(x[lag:] - x[:-lag])
        q = max(q, float(np.max(np.abs(w2[lag:] - w2[:-lag]) / dx**alpha)))
    return q


def _finish(x, w, w1, w2, period, evaluator, meta) -> RoughBoundary:
    if np.any(w <= -1) or np.any(w >= 0):
        raise ValueError("boundary samples must lie strictly inside (-1, 0)")
    K = float(np.max(np.abs(w1))) if len(w1) else 0.0
    c2a = float(max(np.max(np.abs(w)), K, np.max(np.abs(w2)))) + _holder_quotient(x, w2)
    return RoughBoundary(np.asarray(x, float), np.asarray(w, float), np.asarray(w1, float),
                         np.asarray(w2, float), period, K, c2a, evaluator, meta)


def _grid(x0: float, width: float, h: float):
    n = int(round(width / h))
    if n < 2:
        raise ValueError("window holds fewer than two grid points")
    j0 = int(round(x0 / h))
    return j0, n


def sample_boundary(spec: CovarianceSpec, bmap: BoundaryMap, window: float, seed: int,
                    x0: float = 0.0, periodic: bool = False, stream: int = 0) -> RoughBoundary:
    """Random wall on ``[x0, x0 + window)`` on the grid of step ``spec.grid_step``.

    ``periodic=True`` wraps the innovations on the window so the wall has
    period ``window`` with the same finite-range covariance."""
    spec.validate()
    bmap.validate()
    if window <= 0:
        raise ValueError("window must be positive")
    if window < 2 * spec.kappa:
        raise ValueError(f"window {window} smaller than 2*kappa = {2 * spec.kappa}")
    h = spec.grid_step
    j0, n = _grid(x0, window, h)
    m = int(np.ceil(spec.bump_half_width / h)) + 2
    innov = _Innovations(seed, stream)
    if periodic:
        fld = MovingAverageField(spec, bmap, j0, innov.take(np.arange(j0, j0 + n)), ring=n)
    else:
        fld = MovingAverageField(spec, bmap, j0 - m, innov.take(np.arange(j0 - m, j0 + n + m)))
    x = (j0 + np.arange(n)) * h
    w, w1, w2 = fld(x)
    return _finish(x, w, w1, w2, window if periodic else None, fld,
                   {"kind": "random", "seed": int(seed), "spec": asdict(spec), "map": asdict(bmap)})


def sample_periodic_boundary(shape: str, period: float, depth: float, seed: int = 0,
                             grid_step: float | None = None) -> RoughBoundary:
    """Deterministic L-periodic wall; ``seed`` is accepted for interface symmetry.

    sinusoid:  omega = -(1 + d cos(2 pi x / L)) / 2
    bump-train: omega = -(1 + d)/2 + d b(x), b a C^2 bump of height 1 per period
    """
    if not (0 < depth < 1):
        raise ValueError("depth must lie in (0, 1)")
    if period <= 0:
        raise ValueError("period must be positive")
    h = grid_step if grid_step is not None else min(period / 32.0, 0.125)
    n = max(int(round(period / h)), 4)
    x = np.arange(n) * (period / n)
    k = 2 * np.pi / period

    if shape == "sinusoid":
        def ev(s):
            s = np.asarray(s, float)
            return (-(1 + depth * np.cos(k * s)) / 2, depth * k * np.sin(k * s) / 2,
                    depth * k * k * np.cos(k * s) / 2)
    elif shape == "bump-train":
        def ev(s):
            s = np.asarray(s, float)
            u = 2.0 * (np.mod(s + period / 2, period) - period / 2) / period   # in [-1, 1)
            q = 1 - u * u
            du = 2.0 / period
            b, b1, b2 = q**3, -6 * u * q**2 * du, (-6 * q**2 + 24 * u * u * q) * du**2
            return -(1 + depth) / 2 + depth * b, depth * b1, depth * b2
    else:
        raise ValueError(f"unknown periodic shape {shape!r}")
    w, w1, w2 = ev(x)
    return _finish(x, w, w1, w2, float(period), ev,
                   {"kind": shape, "period": float(period), "depth": float(depth)})


def constant_boundary(c: float, window: float, grid_step: float = 0.5, periodic: bool = True) -> RoughBoundary:
    """Flat wall at height ``-c``."""
    if not (0 < c < 1):
        raise ValueError("c must lie in (0, 1)")
    n = int(round(window / grid_step))
    x = np.arange(n) * grid_step

    def ev(s):
        s = np.asarray(s, float)
        return np.full(s.shape, -c), np.zeros(s.shape), np.zeros(s.shape)

    return _finish(x, *ev(x), window if periodic else None, ev, {"kind": "constant", "c": c})


@dataclass
class CoupledPair:
    n: float
    left: RoughBoundary
    right: RoughBoundary


def couple_pair(spec: CovarianceSpec, bmap: BoundaryMap, n: float, window: float, seed: int,
                periodic: bool = False) -> CoupledPair:
    """Two walls on ``[-window, window)`` equal on ``|x| <= n``, independent far out.

    Innovations are shared on ``|x| <= n + r`` and drawn from independent
    streams elsewhere, so the left member does not depend on ``n``.  With
    ``n >= window`` the walls coincide.  ``periodic=True`` wraps both walls on
    the window of period ``2 * window``."""
    spec.validate()
    bmap.validate()
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n < window < n + spec.kappa:
        raise ValueError("window must exceed n + kappa so that the tails decouple")
    h, r = spec.grid_step, spec.bump_half_width
    j0, N = _grid(-window, 2 * window, h)
    m = 0 if periodic else int(np.ceil(r / h)) + 2
    idx = np.arange(j0 - m, j0 + N + m)
    left_xi = _Innovations(seed, 1).take(idx)
    right_xi = _Innovations(seed, 2).take(idx)
    shared = np.abs(idx * h) <= n + r + 1e-12
    right_xi = np.where(shared, left_xi, right_xi)
    ring = N if periodic else None
    x = (j0 + np.arange(N)) * h
    out = []
    for xi, side in ((left_xi, "left"), (right_xi, "right")):
        fld = MovingAverageField(spec, bmap, j0 - m, xi, ring=ring)
        w, w1, w2 = fld(x)
        out.append(_finish(x, w, w1, w2, 2 * window if periodic else None, fld,
                           {"kind": "coupled", "side": side, "seed": int(seed), "n": float(n)}))
    return CoupledPair(float(n), out[0], out[1])


def translate(b: RoughBoundary, h: float) -> RoughBoundary:
    """``(tau_h omega)(x) = omega(x + h)``.

    Periodic walls keep their grid and accept any ``h``; windowed walls need
    ``h`` on the grid and their abscissas move by ``-h``."""
    if b.period is not None:
        ev = b.evaluator
        if ev is None:
            step = b.grid_step
            k = h / step
            if abs(k - round(k)) > 1e-9:
                raise ValueError("off-grid shift needs an exact evaluator")
            k = int(round(k))
            roll = lambda a: np.roll(a, -k)
            return replace(b, omega=roll(b.omega), omega1=roll(b.omega1), omega2=roll(b.omega2))
        shifted = lambda s: ev(np.asarray(s, float) + h)
        w, w1, w2 = shifted(b.x_grid)
        return replace(b, omega=w, omega1=w1, omega2=w2, evaluator=shifted)
    step = b.grid_step
    k = h / step
    if abs(k - round(k)) > 1e-9:
        raise ValueError("windowed walls translate by multiples of the grid step only")
    h = round(k) * step
    ev = b.evaluator
    shifted = None if ev is None else (lambda s: ev(np.asarray(s, float) + h))
    return replace(b, x_grid=b.x_grid - h, evaluator=shifted)


def cache_path(directory, spec: CovarianceSpec, bmap: BoundaryMap, seed: int) -> Path:
    tag = hashlib.sha256((spec.key() + json.dumps(asdict(bmap), sort_keys=True)).encode()).hexdigest()[:16]
    return Path(directory) / f"boundary-{tag}-{int(seed)}.npz"


def save_cache(b: RoughBoundary, path) -> None:
    np.savez(path, x=b.x_grid, omega=b.omega, omega1=b.omega1, omega2=b.omega2,
             period=np.nan if b.period is None else b.period)


def load_cache(path) -> RoughBoundary:
    d = np.load(path)
    per = float(d["period"])
    return _finish(d["x"], d["omega"], d["omega1"], d["omega2"], None if np.isnan(per) else per, None, {})
