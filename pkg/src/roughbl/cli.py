"""Experiment runner: configuration, orchestration, persistence and plots.

Usage::

    roughbl <experiment> [--config FILE] [--seed N] [--out DIR] [--workers N]

A config is one YAML mapping.  Missing keys take the defaults in
``DEFAULTS``; the resolved config (defaults included) is written into the
run manifest, so every run directory describes itself.  Independent units
(samples, pairs, epsilon values) are fanned out to a process pool and
collected in submission order, and every unit derives its randomness from
its own seed, so outputs do not depend on the worker count.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import boundary as bnd
from . import kernels, scalar, stats, stokes

EXPERIMENTS = ("gen-boundary", "cell", "alpha", "decay", "clt", "couple", "green", "wall-law",
               "scalar-clt", "scalar-couple", "optimality", "kernels-check")

# Largest flux accepted for channel runs.  The wall-law expansion is a
# small-data result; in Stokes mode nothing breaks above it, but the
# Navier-Stokes (Picard) mode stops converging near phi ~ 10.
PHI_SMALL = 1.0

ENSEMBLE_DEFAULTS = {"bump_half_width": 2.0, "amplitude": 1.0, "kappa": None, "grid_step": 0.5,
                     "map_kind": "scaled-tanh", "map_center": -0.5, "map_half_range": 0.3}

DEFAULTS: dict = {
    "kernels-check": {"params": {"n_points": 20}},
    "gen-boundary": {"params": {"kind": "random", "window": 64.0, "periodic": True,
                                "period": 1.0, "depth": 0.5}},
    "cell": {"grid": {"h": 1 / 32, "top": 8.0, "uniform_to": 2.0},
             "heights": [0.25, 0.5, 1.0, 1.5, 2.0, 3.0],
             "params": {"shape": "sinusoid", "period": 1.0, "depth": 0.5, "window": 64.0}},
    "decay": {"grid": {"h": 1 / 32, "top": 8.0, "uniform_to": 2.0},
              "heights": [0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
              "params": {"shape": "sinusoid", "period": 1.0, "depth": 0.5, "window": 64.0}},
    "alpha": {"grid": {"h": 0.5, "top": 64.0, "uniform_to": 2.0},
              "params": {"samples": 20, "window": 64.0}},
    "clt": {"grid": {"h": 0.5, "top": 16.0, "uniform_to": 2.0},
            "heights": [4.0, 8.0, 16.0, 32.0],
            "params": {"samples": 200, "window": 512.0, "min_samples": 100,
                       "v_lags": [1, 2, 4, 8, 16, 32, 64, 128, 256], "v_fit_min": 16.0,
                       "corr_max_lag": 16}},
    "couple": {"grid": {"h": 0.5, "top": 64.0, "uniform_to": 2.0},
               "n": [4.0, 8.0, 16.0, 32.0],
               "params": {"pairs": 50, "window": 64.0}},
    "green": {"grid": {"half_width": 128.0, "h_fine": 0.01, "far_h_fine": 0.05, "h_coarse": 8.0,
                       "fine_radius": 0.25},
              "params": {"separations": [4.0, 8.0, 16.0], "near_separations": [0.05, 0.1, 0.2],
                         "near_half_width": 16.0, "wall_height": 0.5, "check_window": True,
                         "tau": 1.0, "scaling_factor": 0.5, "scaling_half_width": 16.0,
                         "scaling_window": 400.0, "translation_shift": 3.0}},
    "wall-law": {"grid": {"h": 0.25, "top": 32.0, "uniform_to": 4.0, "h_cell": 0.25},
                 "eps": [1 / 8, 1 / 16, 1 / 32, 1 / 64],
                 "params": {"phi": 0.1, "mode": "stokes", "window": 8.0}},
    "scalar-clt": {"grid": {"h": 0.5, "top": 16.0},
                   "heights": [4.0, 8.0, 16.0, 32.0, 64.0],
                   "params": {"samples": 100, "window": 512.0, "min_samples": 100, "fit_from": 0}},
    "scalar-couple": {"n": [4.0, 8.0, 16.0, 32.0],
                      "params": {"pairs": 200, "paths": 10_000, "window": 2048.0, "ykill": 64.0}},
    "optimality": {"heights": [4.0, 8.0, 16.0, 32.0, 64.0],
                   "params": {"samples": 200, "window": 4096.0, "n_boot": 500}},
}

# lists each experiment consumes (must be nonempty)
USES_LISTS = {"cell": ("heights",), "decay": ("heights",), "clt": ("heights",), "couple": ("n",),
              "wall-law": ("eps",), "scalar-clt": ("heights",), "scalar-couple": ("n",),
              "optimality": ("heights",)}
RANDOM_WALLS = ("alpha", "clt", "couple", "wall-law", "scalar-clt", "scalar-couple", "optimality")
TOP_KEYS = ("experiment", "seed", "out", "workers", "ensemble", "grid", "eps", "heights", "n", "params")


class ConfigError(ValueError):
    """Invalid configuration; ``diagnostics`` lists the offending fields."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(diagnostics))
        self.diagnostics = diagnostics


class ExperimentError(RuntimeError):
    """A solver failure, with the experiment that raised it."""


def _number(v):
    if isinstance(v, str):
        return float(Fraction(v.strip()))
    return float(v)


def _maybe_number(v):
    """Numeric strings such as '1/32' become floats; other values pass through."""
    if isinstance(v, str):
        try:
            return _number(v)
        except (ValueError, ZeroDivisionError):
            return v
    return v


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    out: str | None = None
    workers: int = 1
    ensemble: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    eps: list | None = None
    heights: list | None = None
    n: list | None = None
    params: dict = field(default_factory=dict)
    unknown: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, d: dict) -> "ExperimentConfig":
        d = dict(d or {})
        unknown = {k: d.pop(k) for k in list(d) if k not in TOP_KEYS}
        if "experiment" not in d:
            d["experiment"] = ""
        return cls(**d, unknown=unknown)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        with open(path) as fh:
            d = yaml.safe_load(fh) or {}
        if not isinstance(d, dict):
            raise ConfigError([f"{path}: top level must be a mapping"])
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(d)

    def resolved(self) -> dict:
        """Full config with defaults filled in (lists parsed to floats)."""
        base = copy.deepcopy(DEFAULTS.get(self.experiment, {}))
        out = {"experiment": self.experiment, "seed": int(self.seed), "workers": int(self.workers),
               "out": self.out or f"runs/{self.experiment}"}
        for key, defaults in (("ensemble", ENSEMBLE_DEFAULTS), ("grid", base.get("grid", {})),
                              ("params", base.get("params", {}))):
            given = {k: _maybe_number(v) for k, v in (getattr(self, key) or {}).items()}
            out[key] = {**defaults, **given}
        for key in ("eps", "heights", "n"):
            val = getattr(self, key)
            val = base.get(key) if val is None else val
            out[key] = None if val is None else [_number(v) for v in val]
        return out


def config_hash(resolved: dict) -> str:
    """sha256 of the resolved config without run-placement keys."""
    d = {k: v for k, v in resolved.items() if k not in ("out", "workers")}
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()


def _ensemble(res: dict):
    e = res["ensemble"]
    spec = bnd.CovarianceSpec(bump_half_width=float(e["bump_half_width"]), amplitude=float(e["amplitude"]),
                              kappa=None if e["kappa"] is None else float(e["kappa"]),
                              grid_step=float(e["grid_step"]))
    bmap = bnd.BoundaryMap(kind=e["map_kind"], center=float(e["map_center"]),
                           half_range=float(e["map_half_range"]))
    return spec, bmap


def validate(config: ExperimentConfig) -> list[str]:
    """Field diagnostics for ``config``; empty when the config is usable.

    Only cross-field checks run here; no solver is called."""
    diags: list[str] = []
    exp = config.experiment
    if exp not in EXPERIMENTS:
        return [f"experiment: unknown {exp!r}; choose one of {', '.join(EXPERIMENTS)}"]
    for k in config.unknown:
        diags.append(f"{k}: unknown key")
    if not isinstance(config.seed, (int, np.integer)) or isinstance(config.seed, bool) or config.seed < 0:
        diags.append(f"seed: must be a nonnegative integer, got {config.seed!r}")
    if not isinstance(config.workers, (int, np.integer)) or config.workers < 1:
        diags.append(f"workers: must be a positive integer, got {config.workers!r}")
    base = DEFAULTS[exp]
    for section, allowed in (("grid", base.get("grid", {})), ("params", base.get("params", {})),
                             ("ensemble", ENSEMBLE_DEFAULTS)):
        for k in (getattr(config, section) or {}):
            if k not in allowed:
                diags.append(f"{section}.{k}: not used by {exp}")
    try:
        res = config.resolved()
    except (ValueError, TypeError, ZeroDivisionError) as err:
        return diags + [f"lists: could not parse numbers ({err})"]
    try:
        _cross_checks(exp, res, diags)
    except (ValueError, TypeError) as err:
        diags.append(f"config: a numeric field could not be parsed ({err})")
    return diags


def _cross_checks(exp: str, res: dict, diags: list[str]) -> None:
    for key in USES_LISTS.get(exp, ()):
        vals = res[key]
        if not vals:
            diags.append(f"{key}: empty list; {exp} needs at least one value")
        elif any(v <= 0 or not math.isfinite(v) for v in vals):
            diags.append(f"{key}: values must be positive and finite")
    p, g = res["params"], res["grid"]
    try:
        spec, bmap = _ensemble(res)
        spec.validate()
        bmap.validate()
    except (ValueError, TypeError) as err:
        diags.append(f"ensemble: {err}")
        spec = None
    random_wall = exp in RANDOM_WALLS or (exp in ("gen-boundary", "cell", "decay")
                                          and p.get("kind", p.get("shape")) == "random")
    if spec is not None and random_wall and "window" in p:
        if float(p["window"]) < 2 * spec.kappa:
            diags.append(f"params.window ({p['window']}) is smaller than 2 * ensemble.kappa "
                         f"({2 * spec.kappa})")
    if spec is not None and exp in ("couple", "scalar-couple") and res["n"]:
        w = float(p["window"])
        for n in res["n"]:
            if n < w < n + spec.kappa:
                diags.append(f"n: value {n} with params.window {w} leaves the tails coupled; "
                             f"need window >= n + ensemble.kappa ({n + spec.kappa})")
    if "h" in g and float(g["h"]) <= 0:
        diags.append("grid.h: must be positive")
    elif "h" in g:
        h = float(g["h"])
        if random_wall and spec is not None and h > spec.bump_half_width / 2:
            diags.append(f"grid.h ({h}) does not resolve the wall; need h <= ensemble.bump_half_width / 2 "
                         f"({spec.bump_half_width / 2})")
        if not random_wall and "period" in p and h > float(p["period"]) / 8:
            diags.append(f"grid.h ({h}) does not resolve the wall; need h <= params.period / 8")
    if "top" in g and "heights" in USES_LISTS.get(exp, ()) and res["heights"] and exp in ("cell", "decay"):
        if max(res["heights"]) >= float(g["top"]):
            diags.append("heights: must lie below grid.top")
    if exp == "wall-law":
        phi = float(p["phi"])
        if not 0 < phi <= PHI_SMALL:
            diags.append(f"params.phi ({phi}) must lie in (0, {PHI_SMALL}] (smallness default)")
        if p["mode"] not in ("stokes", "navier-stokes-picard"):
            diags.append(f"params.mode: unknown {p['mode']!r}")
        if res["eps"] and any(e >= 1 for e in res["eps"]):
            diags.append("eps: values must lie in (0, 1)")
        if res["eps"] and len(res["eps"]) < 4:
            diags.append("eps: the error fit needs at least four values")
    if exp == "green":
        R = float(g["half_width"])
        if max(float(v) for v in p["separations"]) > R / 4:
            diags.append(f"params.separations: largest value must be <= grid.half_width / 4 ({R / 4}) "
                         "to stay clear of the truncation")
        if max(float(v) for v in p["near_separations"]) > float(p["near_half_width"]) / 4:
            diags.append("params.near_separations: largest value must be <= params.near_half_width / 4")
        # the 4-point delta spreads the force over a radius 2 h
        for key, seps in (("h_fine", "near_separations"), ("far_h_fine", "separations")):
            if not 0 < 2 * float(g[key]) < min(float(v) for v in p[seps]):
                diags.append(f"grid.{key}: must be positive with 2 * {key} below the smallest params.{seps}")
        if not 0 < float(p["wall_height"]) < 1:
            diags.append("params.wall_height: must lie in (0, 1)")
    if exp in ("clt", "scalar-clt"):
        if int(p["samples"]) < int(p["min_samples"]):
            diags.append(f"params.samples ({p['samples']}) is below params.min_samples ({p['min_samples']})")
        if res["heights"] and len(res["heights"]) < 3:
            diags.append("heights: the variance fit needs at least three heights")
    if exp in ("decay", "couple", "scalar-couple", "optimality") and res.get("heights" if exp in
                                                                              ("decay", "optimality") else "n"):
        if len(res["heights" if exp in ("decay", "optimality") else "n"]) < 2:
            diags.append("fit needs at least two points")
    for k in ("samples", "pairs", "paths"):
        if k in p and int(p[k]) < 2:
            diags.append(f"params.{k}: need at least 2")


# ---------------------------------------------------------------------------
# output helpers

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _clean(obj):
    """JSON-safe copy: numpy to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, stats.DecayFit):
        return _clean(obj.to_dict())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def svg_plot(series: list, fits: list = (), title: str = "", xlabel: str = "x", ylabel: str = "y",
             logx: bool = True, logy: bool = True) -> str:
    """Self-contained SVG scatter plot with fitted lines.

    ``series`` holds ``(label, x, y)``; ``fits`` holds ``(label, DecayFit)``.
    The plotted numbers are repeated in an XML comment."""
    W, H, m = 560, 400, 60
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    tx = (lambda v: np.log10(v)) if logx else (lambda v: np.asarray(v, float))
    ty = (lambda v: np.log10(v)) if logy else (lambda v: np.asarray(v, float))
    pts = []
    for _, x, y in series:
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y) & ((x > 0) | (not logx)) & ((y > 0) | (not logy))
        pts.append((x[ok], y[ok]))
    allx = np.concatenate([tx(p[0]) for p in pts]) if pts else np.array([0.0, 1.0])
    ally = np.concatenate([ty(p[1]) for p in pts]) if pts else np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5
    padx, pady = 0.05 * (x1 - x0), 0.08 * (y1 - y0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady

    def px(v):
        return m + (W - 2 * m) * (v - x0) / (x1 - x0)

    def py(v):
        return H - m - (H - 2 * m) * (v - y0) / (y1 - y0)

    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
              f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">\n')
    out.write("<!-- data\n")
    for (label, _, _), (x, y) in zip(series, pts):
        for a, b in zip(x, y):
            out.write(f"{label},{_fmt(a)},{_fmt(b)}\n")
    for label, fit in fits:
        out.write(f"fit {label}: exponent={_fmt(fit.exponent)} intercept={_fmt(fit.intercept)} "
                  f"r2={_fmt(fit.r_squared)}\n")
    out.write("-->\n")
    out.write(f'<rect x="{m}" y="{m}" width="{W - 2 * m}" height="{H - 2 * m}" fill="none" stroke="#000"/>\n')
    out.write(f'<text x="{W / 2}" y="{m / 2}" text-anchor="middle" font-size="13">{title}</text>\n')
    out.write(f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">{xlabel}</text>\n')
    out.write(f'<text x="15" y="{H / 2}" text-anchor="middle" transform="rotate(-90 15 {H / 2})">{ylabel}</text>\n')
    for v, anchor in ((x0 + padx, "start"), (x1 - padx, "end")):
        lab = 10**v if logx else v
        out.write(f'<text x="{px(v):.1f}" y="{H - m + 15}" text-anchor="{anchor}">{lab:.3g}</text>\n')
    for v in (y0 + pady, y1 - pady):
        lab = 10**v if logy else v
        out.write(f'<text x="{m - 5}" y="{py(v):.1f}" text-anchor="end">{lab:.3g}</text>\n')
    for i, ((label, _, _), (x, y)) in enumerate(zip(series, pts)):
        c = colors[i % len(colors)]
        for a, b in zip(tx(x), ty(y)):
            out.write(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="3" fill="{c}"/>\n')
        out.write(f'<text x="{W - m - 5}" y="{m + 15 + 14 * i}" text-anchor="end" fill="{c}">{label}</text>\n')
    for j, (label, fit) in enumerate(fits):
        c = colors[j % len(colors)]
        lx = np.array([x0 + padx, x1 - padx])
        xs = 10**lx if logx else lx
        ys = fit.predict(xs)
        if logy:
            ys = np.log10(np.maximum(ys, 1e-300))
        out.write(f'<line x1="{px(lx[0]):.1f}" y1="{py(ys[0]):.1f}" x2="{px(lx[1]):.1f}" '
                  f'y2="{py(ys[1]):.1f}" stroke="{c}" stroke-dasharray="4 3"/>\n')
        out.write(f'<text x="{m + 5}" y="{H - m - 8 - 14 * j}" fill="{c}">{label}: slope '
                  f'{fit.exponent:.3f}, r2 {fit.r_squared:.3f}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()


@dataclass
class RunManifest:
    experiment: str
    seed: int
    config_hash: str
    version: str
    wall_clock: float
    stages: dict
    files: list
    config: dict
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean({"experiment": self.experiment, "seed": self.seed, "config_hash": self.config_hash,
                       "version": self.version, "wall_clock": self.wall_clock, "stages": self.stages,
                       "files": self.files, "config": self.config})


class RunContext:
    """Output directory, stage timer and worker pool for one run."""

    def __init__(self, res: dict):
        self.res = res
        self.seed = res["seed"]
        self.out = Path(res["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.hash = config_hash(res)
        self.files: list[str] = []
        self.stages: dict[str, float] = {}
        self.summary: dict = {}
        self._pool = None

    def _register(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        if name not in self.files:
            self.files.append(name)

    def _header(self) -> str:
        return f"# roughbl {self.res['experiment']} seed={self.seed} config={self.hash[:16]}\n"

    def csv(self, name: str, header: list, rows) -> None:
        buf = io.StringIO()
        buf.write(self._header())
        buf.write(",".join(header) + "\n")
        for r in rows:
            buf.write(",".join(_fmt(v) for v in r) + "\n")
        self._register(name, buf.getvalue())

    def json(self, name: str, obj: dict) -> None:
        payload = {"experiment": self.res["experiment"], "seed": self.seed, "config_hash": self.hash,
                   **_clean(obj)}
        self._register(name, json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")

    def svg(self, name: str, *args, **kw) -> None:
        text = svg_plot(*args, **kw)
        text = text.replace("<!-- data\n", f"<!-- data seed={self.seed} config={self.hash[:16]}\n", 1)
        self._register(name, text)

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0

    def map(self, fn, items):
        """Ordered map over independent units (process pool when workers > 1)."""
        items = list(items)
        if self.res["workers"] <= 1 or len(items) <= 1:
            return [fn(it) for it in items]
        if self._pool is None:
            self._pool = ProcessPoolExecutor(max_workers=self.res["workers"])
        return list(self._pool.map(fn, items))

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


# ---------------------------------------------------------------------------
# experiments

def _make_boundary(res: dict, seed: int, periodic: bool = True):
    p = res["params"]
    kind = p.get("kind", p.get("shape", "random"))
    if kind == "random":
        spec, bmap = _ensemble(res)
        return bnd.sample_boundary(spec, bmap, float(p["window"]), seed, periodic=periodic)
    if kind == "constant":
        return bnd.constant_boundary(float(p["depth"]), float(p["period"]), periodic=periodic)
    return bnd.sample_periodic_boundary(kind, float(p["period"]), float(p["depth"]), seed)


def _cell_domain(res: dict, b) -> stokes.CellDomain:
    g = res["grid"]
    return stokes.CellDomain(b, top_height=float(g["top"]), h=float(g["h"]),
                             uniform_to=float(g.get("uniform_to", 2.0)))


def exp_kernels_check(res, ctx):
    with ctx.stage("suite"):
        rep = kernels.check_suite(ctx.seed, int(res["params"]["n_points"]))
    ctx.json("kernels_check.json", rep)
    ctx.csv("checks.csv", ["name", "value", "tol", "pass"],
            [(c["name"], c["value"], c["tol"], c["pass"]) for c in rep["checks"]])
    ctx.summary = {"all_pass": rep["all_pass"], "n_checks": len(rep["checks"])}


def exp_gen_boundary(res, ctx):
    with ctx.stage("sample"):
        b = _make_boundary(res, ctx.seed, bool(res["params"]["periodic"]))
    ctx.csv("boundary.csv", ["x", "omega", "omega1", "omega2"],
            zip(b.x_grid, b.omega, b.omega1, b.omega2))
    ctx.summary = {"n": len(b.x_grid), "period": b.period, "lipschitz_K": b.lipschitz_K,
                   "c2a_norm_bound": b.c2a_norm_bound, "min": float(b.omega.min()),
                   "max": float(b.omega.max()), "meta": b.meta}
    ctx.json("boundary.json", ctx.summary)


def _solve_cell(res, ctx):
    with ctx.stage("sample"):
        b = _make_boundary(res, ctx.seed)
    with ctx.stage("solve"):
        sol = stokes.solve_cell(_cell_domain(res, b))
    return b, sol


def _profile(sol, heights):
    """v(0, y2) and |v(0, y2) - (alpha, 0)|: finite elements inside the mesh, Fourier above."""
    hs = np.asarray(heights, dtype=float)
    pts = np.column_stack([np.zeros_like(hs), hs])
    v = stokes.cell_field(sol, pts, fe_height=0.5 * sol.domain.top_height)
    dev = np.linalg.norm(v - np.array([sol.alpha, 0.0]), axis=1)
    return v, dev


def exp_cell(res, ctx):
    b, sol = _solve_cell(res, ctx)
    ctx.csv("trace.csv", ["x", "v1", "v2"], ((x, a, c) for x, (a, c) in zip(sol.trace_x, sol.trace0)))
    hs = res["heights"]
    v, dev = _profile(sol, hs)
    ctx.csv("profile.csv", ["y2", "v1", "v2", "abs_dev"], ((y, a[0], a[1], d) for y, a, d in zip(hs, v, dev)))
    ctx.summary = {"alpha": sol.alpha, "residual": sol.residual, "divergence": sol.divergence,
                   "energy": sol.energy, "boundary_work": sol.boundary_work,
                   "stress_jump": stokes.stress_jump_check(sol), "period": sol.domain.period}
    ctx.json("cell.json", ctx.summary)


def exp_decay(res, ctx):
    b, sol = _solve_cell(res, ctx)
    hs = np.asarray(res["heights"])
    v, dev = _profile(sol, hs)
    L = sol.domain.period
    semi = stats.DecayFit.from_points(hs, dev, semilog=True)
    semi.ci95 = stats._residual_bootstrap_ci(semi, ctx.seed)
    alg = stats.DecayFit.from_points(hs, dev)
    ctx.csv("decay.csv", ["y2", "v1", "v2", "abs_dev"], ((y, a[0], a[1], d) for y, a, d in zip(hs, v, dev)))
    ctx.json("fit_semilog.json", {"fit": semi})
    ctx.json("fit_algebraic.json", {"fit": alg})
    ctx.svg("decay.svg", [("|v - alpha|", hs, dev)], [("semilog", semi)],
            title="boundary-layer decay", xlabel="y2", ylabel="|v(0, y2) - (alpha, 0)|", logx=False)
    expected = -2 * np.pi / L
    ctx.summary = {"alpha": sol.alpha, "slope": semi.exponent, "r_squared": semi.r_squared,
                   "expected_slope": expected, "rel_error": abs(semi.exponent - expected) / abs(expected),
                   "algebraic_r_squared": alg.r_squared}
    ctx.json("summary.json", ctx.summary)


@dataclass
class _AlphaJob:
    res: dict

    def __call__(self, seed: int):
        b = _make_boundary(self.res, seed)
        return stokes.solve_cell(_cell_domain(self.res, b)).alpha


def exp_alpha(res, ctx):
    seeds = list(range(ctx.seed, ctx.seed + int(res["params"]["samples"])))
    with ctx.stage("solve"):
        alphas = ctx.map(_AlphaJob(res), seeds)
    ctx.csv("alphas.csv", ["seed", "alpha"], zip(seeds, alphas))
    ctx.summary = stats.estimate_alpha(alphas)
    ctx.json("alpha.json", ctx.summary)


@dataclass
class _CLTUnit:
    res: dict

    def __call__(self, seed: int):
        b = _make_boundary(self.res, seed)
        sol = stokes.solve_cell(_cell_domain(self.res, b))
        fields = stokes.reconstruct_trace_field(sol.trace_x, sol.trace0, sol.domain.period, self.res["heights"])
        X = stokes.trace_moments(sol, sol.alpha).X
        return fields, sol.alpha, X, (sol.trace_x, sol.trace0, sol.domain.period)


def exp_clt(res, ctx):
    p = res["params"]
    seeds = list(range(ctx.seed, ctx.seed + int(p["samples"])))
    with ctx.stage("solve"):
        rows = ctx.map(_CLTUnit(res), seeds)
    with ctx.stage("statistics"):
        F = np.array([r[0] for r in rows])
        alphas = np.array([r[1] for r in rows])
        X = np.array([r[2] for r in rows])
        alpha = float(alphas.mean())
        hs = res["heights"]
        rep = stats.variance_decay_fit(F, hs, alpha, seed=ctx.seed, min_samples=int(p["min_samples"]))
        lags = np.asarray(p["v_lags"], dtype=float)
        lags = lags[lags <= float(p["window"]) / 2]
        Vms = np.array([stokes.v_mean_square(*r[3], alpha, lags) for r in rows])
        vfit = stats.v_growth_check(lags, Vms, t_min=float(p["v_fit_min"]), seed=ctx.seed)
        corr = stats.correlation_scan(X - np.array([alpha, 0.0]), max_lag=int(p["corr_max_lag"]), circular=True)
    ctx.csv("alphas.csv", ["seed", "alpha"], zip(seeds, alphas))
    ctx.csv("variance.csv", ["y2", "variance", "scaled", "ci_low", "ci_high", "ks_statistic", "p_value"],
            ((h, v, s, c[0], c[1], k, pv) for h, v, s, c, k, pv in
             zip(rep.heights, rep.variances, rep.scaled, rep.variance_ci, rep.ks_stats, rep.ks_pvalues)))
    ctx.csv("v_growth.csv", ["t", "mean_sq"], zip(lags, Vms.mean(axis=0)))
    ctx.csv("correlation.csv", ["lag", "value", "std_error"], zip(corr["lag"], corr["value"], corr["std_error"]))
    ctx.json("fit_variance.json", {"fit": rep.fit, "alpha": alpha, "report": rep.to_dict()})
    ctx.json("fit_v_growth.json", {"fit": vfit})
    ctx.svg("variance.svg", [("E|v - alpha|^2", hs, rep.variances)], [("fit", rep.fit)],
            title="variance decay", xlabel="y2", ylabel="E|v(., 0, y2) - (alpha, 0)|^2")
    sel = lags >= float(p["v_fit_min"])
    ctx.svg("v_growth.svg", [("E|V(t)|^2", lags[sel], Vms.mean(axis=0)[sel])], [("fit", vfit)],
            title="V growth", xlabel="t", ylabel="E|V(t)|^2")
    ctx.summary = {"alpha": alpha, "variance_exponent": rep.fit.exponent if rep.fit else None,
                   "variance_ci95": rep.fit.ci95 if rep.fit else None,
                   "v_growth_exponent": vfit.exponent, "samples": len(seeds)}
    ctx.json("summary.json", ctx.summary)


@dataclass
class _CoupleJob:
    res: dict

    def __call__(self, seed: int):
        spec, bmap = _ensemble(self.res)
        w = float(self.res["params"]["window"])
        kw = dict(top_height=float(self.res["grid"]["top"]), h=float(self.res["grid"]["h"]),
                  uniform_to=float(self.res["grid"].get("uniform_to", 2.0)))
        out = []
        vl = None
        for n in self.res["n"]:
            pair = bnd.couple_pair(spec, bmap, n, w, seed, periodic=True)
            if vl is None:
                vl = stokes.velocity_at_origin(stokes.solve_cell(stokes.CellDomain(pair.left, **kw)))
            if np.array_equal(pair.left.omega, pair.right.omega):
                out.append(0.0)
                continue
            vr = stokes.velocity_at_origin(stokes.solve_cell(stokes.CellDomain(pair.right, **kw)))
            out.append(float(np.linalg.norm(vl - vr)))
        return out


def exp_couple(res, ctx):
    seeds = list(range(ctx.seed, ctx.seed + int(res["params"]["pairs"])))
    ns = np.asarray(res["n"])
    with ctx.stage("solve"):
        diffs = np.array(ctx.map(_CoupleJob(res), seeds))      # (pairs, n)
    fit = stats.DecayFit.from_samples(ns, diffs, seed=ctx.seed)
    mean = diffs.mean(axis=0)
    se = diffs.std(axis=0, ddof=1) / np.sqrt(len(seeds))
    ctx.csv("pairs.csv", ["seed"] + [f"n={_fmt(n)}" for n in ns], ([s, *d] for s, d in zip(seeds, diffs)))
    ctx.csv("couple.csv", ["n", "mean_abs_diff", "std_error"], zip(ns, mean, se))
    ctx.json("fit_couple.json", {"fit": fit})
    ctx.svg("couple.svg", [("mean |dv|", ns, mean)], [("fit", fit)], title="coupled decay",
            xlabel="n", ylabel="mean |v(w1, 0, 0) - v(w2, 0, 0)|")
    ctx.summary = {"exponent": fit.exponent, "r_squared": fit.r_squared, "ci95": fit.ci95, "pairs": len(seeds)}
    ctx.json("summary.json", ctx.summary)


def _flat_wall(depth: float, half_width: float):
    w = 2 * half_width + 64
    b = bnd.constant_boundary(depth, w, 0.5, periodic=False)
    b.x_grid = b.x_grid - w / 2
    return b


@dataclass
class _GreenTask:
    res: dict

    def __call__(self, task: tuple):
        g, p = self.res["grid"], self.res["params"]
        kind, R = task
        c = float(p["wall_height"])
        z = np.array([0.0, 1.0 - c])
        if kind == "far":
            seps = np.asarray(p["separations"], float)
            ys = np.column_stack([seps, np.full(len(seps), z[1])])
            # the far field does not see the mollifier; h_fine is only needed near the source
            dom = stokes.GreenDomain(_flat_wall(c, R), half_width=R, top=R, h_fine=float(g["far_h_fine"]),
                                     h_coarse=float(g["h_coarse"]), fine_radius=float(g["fine_radius"]),
                                     rough_rows=1)
            smp = stokes.estimate_green(dom, z, probes=ys)
            M = smp.value(ys)
            scan = stokes.green_decay_scan([smp], 0, ys, float(p["tau"]), np.ones(len(seps)))
            return {"mags": np.linalg.norm(M.reshape(len(ys), -1), axis=1), "ratios": scan["ratios"][0],
                    "residual": smp.residual}
        if kind == "near":
            seps = np.asarray(p["near_separations"], float)
            ys = np.column_stack([seps, np.full(len(seps), z[1])])
            dom = stokes.GreenDomain(_flat_wall(c, R), half_width=R, top=R, h_fine=float(g["h_fine"]),
                                     h_coarse=2.0, fine_radius=float(g["fine_radius"]), rough_rows=1)
            smp = stokes.estimate_green(dom, z, probes=ys)
            return stokes.green_near_field_fit(smp, seps)
        spec, bmap = _ensemble(self.res)
        W = float(p["scaling_window"])
        rough = bnd.sample_boundary(spec, bmap, W, int(self.res["seed"]), x0=-W / 2)
        dom = stokes.GreenDomain(rough, half_width=R, top=R, h_fine=0.05, h_coarse=2.0, wall_h=0.25,
                                 wall_h_radius=R / 2)
        zr = np.array([0.0, 1.0])
        ys = np.array([[2.0, 1.0], [4.0, 1.5]])
        if kind == "scaling":
            return stokes.green_scaling_check(dom, zr, ys, float(p["scaling_factor"]))
        return stokes.green_translation_check(dom, zr, ys, float(p["translation_shift"]))


def exp_green(res, ctx):
    g, p = res["grid"], res["params"]
    R = float(g["half_width"])
    tasks = [("far", R), ("near", float(p["near_half_width"])), ("scaling", float(p["scaling_half_width"])),
             ("translation", float(p["scaling_half_width"]))]
    if p["check_window"]:
        tasks.append(("far", 2 * R))
    with ctx.stage("solve"):
        out = ctx.map(_GreenTask(res), tasks)
    far, near, scal, trans = out[:4]
    seps = np.asarray(p["separations"], float)
    fit = stats.DecayFit.from_points(seps, far["mags"])
    fit.ci95 = stats._residual_bootstrap_ci(fit, ctx.seed)
    ctx.csv("far.csv", ["separation", "abs_G", "ratio"], zip(seps, far["mags"], far["ratios"]))
    ctx.csv("near.csv", ["separation", "G11"], zip(near["separations"], near["values"]))
    ctx.json("fit_far.json", {"fit": fit})
    near_fit = stats.DecayFit(near["slope"], near["intercept"], near["r_squared"],
                              [[math.log(s), v] for s, v in zip(near["separations"], near["values"])],
                              semilog=False)
    ctx.json("fit_near.json", {"slope": near["slope"], "intercept": near["intercept"],
                               "r_squared": near["r_squared"], "expected_slope": -1 / (4 * math.pi),
                               "points": near_fit.points})
    ctx.svg("far.svg", [("|G|", seps, far["mags"])], [("fit", fit)], title="Green far field",
            xlabel="|z - y|", ylabel="|G(z, y)|")
    summary = {"far_exponent": fit.exponent, "far_r_squared": fit.r_squared, "near_r_squared": near["r_squared"],
               "near_slope": near["slope"], "scaling": scal, "translation": trans,
               "max_ratio": float(np.max(far["ratios"]))}
    if p["check_window"]:
        wide = out[4]["mags"]
        summary["window_change"] = float(np.max(np.abs(wide - far["mags"]) / np.abs(wide)))
        ctx.csv("window.csv", ["separation", "abs_G", "abs_G_doubled"], zip(seps, far["mags"], wide))
    ctx.summary = summary
    ctx.json("summary.json", summary)


@dataclass
class _ChannelJob:
    res: dict
    alpha: float

    def __call__(self, eps: float):
        p, g = self.res["params"], self.res["grid"]
        b = _make_boundary(self.res, int(self.res["seed"]))
        ch = stokes.solve_channel(b, eps, float(p["phi"]), mode=p["mode"], h_cell=float(g["h_cell"]))
        ed = ch.l2_error(stokes.poiseuille(float(p["phi"])))
        en = ch.l2_error(stokes.solve_channel_navier(float(p["phi"]), eps * self.alpha).as_reference())
        flux = float(np.abs(ch.strip_fluxes() - float(p["phi"])).max())
        return ed, en, flux


def exp_wall_law(res, ctx):
    b, cell = _solve_cell(res, ctx)
    eps = res["eps"]
    with ctx.stage("channels"):
        rows = ctx.map(_ChannelJob(res, cell.alpha), eps)
    ed = [r[0] for r in rows]
    en = [r[1] for r in rows]
    fits = stats.error_scaling_fit(eps, {"dirichlet": ed, "navier": en}, seed=ctx.seed)
    ctx.csv("errors.csv", ["eps", "dirichlet", "navier", "flux_deviation"],
            ((e, *r) for e, r in zip(eps, rows)))
    ctx.json("fit_dirichlet.json", {"fit": fits["dirichlet"], "alpha": cell.alpha})
    ctx.json("fit_navier.json", {"fit": fits["navier"], "alpha": cell.alpha})
    ctx.svg("wall_law.svg", [("Dirichlet", eps, ed), ("Navier", eps, en)],
            [("Dirichlet", fits["dirichlet"]), ("Navier", fits["navier"])],
            title="wall-law errors", xlabel="eps", ylabel="L2 error")
    ctx.summary = {"alpha": cell.alpha, "dirichlet_exponent": fits["dirichlet"].exponent,
                   "navier_exponent": fits["navier"].exponent,
                   "gap": fits["navier"].exponent - fits["dirichlet"].exponent}
    ctx.json("summary.json", ctx.summary)


@dataclass
class _ScalarCLTJob:
    res: dict

    def __call__(self, seed: int):
        b = _make_boundary(self.res, seed)
        g = self.res["grid"]
        return scalar._CLTJob(np.asarray(self.res["heights"]), float(g["top"]), float(g["h"]))(b)


def exp_scalar_clt(res, ctx):
    p = res["params"]
    seeds = list(range(ctx.seed, ctx.seed + int(p["samples"])))
    with ctx.stage("solve"):
        rows = ctx.map(_ScalarCLTJob(res), seeds)
    rep = scalar.clt_report(np.array([r[0] for r in rows]), res["heights"], np.array([r[1] for r in rows]),
                            ctx.seed, int(p["fit_from"]))
    ctx.csv("variance.csv", ["y2", "variance", "scaled", "ks_statistic", "p_value"],
            zip(rep["heights"], rep["variance"], rep["scaled"], rep["ks_statistic"], rep["p_value"]))
    ctx.json("fit_variance.json", {"fit": rep["fit"], "alpha": rep["alpha"], "field_mean": rep["field_mean"]})
    ctx.svg("variance.svg", [("Var u", rep["heights"], rep["variance"])],
            [("fit", rep["fit"])] if rep["fit"] else [], title="scalar variance decay",
            xlabel="y2", ylabel="Var u(., 0, y2)")
    ctx.summary = {"exponent": rep["fit"].exponent if rep["fit"] else None, "alpha": rep["alpha"],
                   "min_p_value": min(rep["p_value"]), "samples": len(seeds)}
    ctx.json("summary.json", ctx.summary)


@dataclass
class _ScalarPairJob:
    res: dict

    def __call__(self, seed: int):
        spec, bmap = _ensemble(self.res)
        p = self.res["params"]
        pairs = {n: [bnd.couple_pair(spec, bmap, n, float(p["window"]), seed)] for n in self.res["n"]}
        raw = scalar.coupled_walk_differences(pairs, int(p["paths"]), int(self.res["seed"]),
                                              ykill=float(p["ykill"]), cache={})
        return scalar.pair_summaries(raw)


def exp_scalar_couple(res, ctx):
    p = res["params"]
    seeds = list(range(ctx.seed, ctx.seed + int(p["pairs"])))
    with ctx.stage("walks"):
        parts = ctx.map(_ScalarPairJob(res), seeds)
    summ = {n: np.vstack([part[n] for part in parts]) for n in res["n"]}
    spec, bmap = _ensemble(res)
    sup = max(abs(bmap.upper), abs(bmap.lower))
    fit, table = scalar.coupled_table(summ, ctx.seed, sup)
    ctx.csv("couple.csv", ["n", "mean_abs_diff", "std_error", "mc_std_error", "rms_debiased", "bound"],
            zip(table["n"], table["mean_abs_diff"], table["std_error"], table["mc_std_error"],
                table["rms_debiased"], table["bound"]))
    ctx.csv("pairs.csv", ["seed", "n", "mean_diff", "mc_var"],
            ((s, n, *summ[n][i]) for n in res["n"] for i, s in enumerate(seeds)))
    ctx.json("fit_couple.json", {"fit": fit, "table": table})
    ctx.svg("couple.svg", [("mean |dv|", table["n"], table["mean_abs_diff"]), ("bound", table["n"], table["bound"])],
            [("fit", fit)], title="scalar coupled decay", xlabel="n", ylabel="mean |v(w1) - v(w2)|")
    ctx.summary = {"exponent": fit.exponent, "r_squared": fit.r_squared, "ci95": fit.ci95,
                   "within_bound": table["within_bound"], "pairs": len(seeds), "paths": int(p["paths"])}
    ctx.json("summary.json", ctx.summary)


def exp_optimality(res, ctx):
    p = res["params"]
    spec, bmap = _ensemble(res)
    with ctx.stage("ensemble"):
        rep = scalar.optimality_experiment(spec, bmap, res["heights"], M=int(p["samples"]),
                                           window=float(p["window"]), seed=ctx.seed,
                                           n_boot=int(p["n_boot"]), mapper=ctx.map)
    ctx.csv("H.csv", ["y2", "H", "sqrt_y2_m0", "lower_bound_integral", "shift_gain_mean"],
            zip(rep["heights"], rep["H"], rep["sqrt_y2_m0"], rep["lower_bound_integral"], rep["shift_gain_mean"]))
    ctx.csv("variance.csv", ["y2", "variance", "scaled"], zip(rep["heights"], rep["variance"], rep["scaled"]))
    ctx.json("optimality.json", rep)
    ctx.svg("scaled_variance.svg", [("y2 Var u", rep["heights"], rep["scaled"])], [],
            title="scaled variance", xlabel="y2", ylabel="y2 Var u(0, y2)")
    ctx.summary = {k: rep[k] for k in ("H_ratio", "H_bounded", "floor", "floor_ci95", "floor_positive")}


RUNNERS = {"kernels-check": exp_kernels_check, "gen-boundary": exp_gen_boundary, "cell": exp_cell,
           "decay": exp_decay, "alpha": exp_alpha, "clt": exp_clt, "couple": exp_couple,
           "green": exp_green, "wall-law": exp_wall_law, "scalar-clt": exp_scalar_clt,
           "scalar-couple": exp_scalar_couple, "optimality": exp_optimality}


def run(config: ExperimentConfig) -> RunManifest:
    """Execute ``config`` end to end and write its manifest."""
    diags = validate(config)
    if diags:
        raise ConfigError(diags)
    res = config.resolved()
    t0 = time.perf_counter()
    ctx = RunContext(res)
    try:
        RUNNERS[res["experiment"]](res, ctx)
    except (stokes.SolverError, scalar.ScalarSolverError, ValueError, np.linalg.LinAlgError) as err:
        raise ExperimentError(f"{res['experiment']}: {err}") from err
    finally:
        ctx.close()
    man = RunManifest(res["experiment"], res["seed"], ctx.hash, __version__, time.perf_counter() - t0,
                      dict(ctx.stages), [], res, ctx.summary)
    files = []
    for name in ctx.files:
        data = (ctx.out / name).read_bytes()
        files.append({"name": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
    man.files = files
    (ctx.out / "manifest.json").write_text(json.dumps(man.to_dict(), indent=2, sort_keys=True) + "\n")
    return man


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roughbl", description="Rough-wall boundary-layer experiments.")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--seed", type=int, help="base seed (overrides the config)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--workers", type=int, help="worker processes (overrides the config)")
        sp.add_argument("--check", action="store_true", help="validate the config and exit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    over = {"seed": args.seed, "out": args.out, "workers": args.workers}
    try:
        if args.config:
            cfg = ExperimentConfig.from_file(args.config, **over)
            if cfg.experiment and cfg.experiment != args.experiment:
                raise ConfigError([f"experiment: config names {cfg.experiment!r}, "
                                   f"command line names {args.experiment!r}"])
            cfg.experiment = args.experiment
        else:
            cfg = ExperimentConfig.from_mapping({"experiment": args.experiment,
                                                 **{k: v for k, v in over.items() if v is not None}})
    except (OSError, yaml.YAMLError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    diags = validate(cfg)
    if diags:
        print("invalid config:", file=sys.stderr)
        for d in diags:
            print(f"  {d}", file=sys.stderr)
        return 2
    if args.check:
        print(json.dumps(_clean(cfg.resolved()), indent=2, sort_keys=True))
        return 0
    try:
        man = run(cfg)
    except ExperimentError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(json.dumps(_clean({"out": cfg.resolved()["out"], "summary": man.summary,
                             "wall_clock": man.wall_clock}), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
