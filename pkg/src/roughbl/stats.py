"""Ensemble statistics: slip constant, decay fits, CLT diagnostics, correlations."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

N_BOOT = 500


def _ols(lx: np.ndarray, ly: np.ndarray):
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), min(max(r2, 0.0), 1.0)


@dataclass
class DecayFit:
    """OLS fit of ``log y = exponent * log x + intercept``.

    ``semilog=True`` fits ``log y`` against ``x`` instead (exponential laws)."""

    exponent: float
    intercept: float
    r_squared: float
    points: list                      # (log x or x, log y) pairs
    ci95: float = float("nan")
    semilog: bool = False
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_points(cls, x, y, semilog: bool = False, ci95: float = float("nan")) -> "DecayFit":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(x) < 2:
            raise ValueError("need at least two points")
        if np.any(y <= 0) or (not semilog and np.any(x <= 0)):
            raise ValueError("log fit needs positive data")
        lx = x if semilog else np.log(x)
        ly = np.log(y)
        e, c, r2 = _ols(lx, ly)
        return cls(e, c, r2, [[float(a), float(b)] for a, b in zip(lx, ly)], ci95, semilog)

    @classmethod
    def from_samples(cls, x, samples, seed: int = 0, n_boot: int = N_BOOT,
                     statistic=np.mean) -> "DecayFit":
        """Fit the per-x statistic (default mean over rows) with a row bootstrap CI.

        ``samples`` is (M, len(x)); rows are independent ensemble members."""
        samples = np.asarray(samples, dtype=float)
        y = statistic(samples, axis=0)
        fit = cls.from_points(x, y)
        rng = np.random.default_rng(seed)
        lx = np.log(np.asarray(x, float))
        boots = []
        M = samples.shape[0]
        for _ in range(n_boot):
            yb = statistic(samples[rng.integers(0, M, M)], axis=0)
            if np.all(yb > 0):
                boots.append(_ols(lx, np.log(yb))[0])
        if len(boots) > 10:
            lo, hi = np.percentile(boots, [2.5, 97.5])
            fit.ci95 = float(0.5 * (hi - lo))
        return fit

    def refit(self) -> "DecayFit":
        pts = np.asarray(self.points)
        e, c, r2 = _ols(pts[:, 0], pts[:, 1])
        return DecayFit(e, c, r2, self.points, self.ci95, self.semilog)

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        lx = x if self.semilog else np.log(x)
        return np.exp(self.intercept + self.exponent * lx)

    def to_dict(self) -> dict:
        return asdict(self)


def _residual_bootstrap_ci(fit: DecayFit, seed: int = 0, n_boot: int = N_BOOT) -> float:
    pts = np.asarray(fit.points)
    lx, ly = pts[:, 0], pts[:, 1]
    pred = fit.intercept + fit.exponent * lx
    res = ly - pred
    if len(lx) < 3 or np.allclose(res, 0):
        return 0.0
    rng = np.random.default_rng(seed)
    boots = [_ols(lx, pred + rng.choice(res, len(res)))[0] for _ in range(n_boot)]
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return float(0.5 * (hi - lo))


# ---------------------------------------------------------------------------

def estimate_alpha(alphas) -> dict:
    """Mean and standard error of per-sample slip constants.

    Accepts numbers or objects with an ``alpha`` attribute."""
    vals = np.array([getattr(a, "alpha", a) for a in alphas], dtype=float)
    if len(vals) < 2:
        raise ValueError("need at least two samples")
    return {"mean": float(vals.mean()), "std_error": float(vals.std(ddof=1) / np.sqrt(len(vals))),
            "n": int(len(vals))}


@dataclass
class CLTReport:
    heights: list
    variances: list
    scaled: list
    beta: tuple
    ks_stats: list
    ks_pvalues: list
    sigma_beta_estimate: float
    fit: DecayFit | None = None
    variance_ci: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta"] = list(self.beta)
        return d


def variance_decay_fit(fields: np.ndarray, heights, alpha: float, beta=(0, 0), seed: int = 0,
                       min_samples: int = 100, fit_from: int = 0, center_values=None) -> CLTReport:
    """E|d^beta (v(., 0, y2) - (alpha, 0))|^2 per height with a log-log fit.

    ``fields`` is (M, H, n, 2): per sample, height and lateral position.  The
    expectation averages over samples and lateral positions (stationarity);
    the bootstrap resamples whole samples.  The constant is subtracted only
    for beta = 0.  KS statistics use the value at the first lateral position
    of every sample, standardized."""
    fields = np.asarray(fields, dtype=float)
    M, H = fields.shape[:2]
    if M < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {M}")
    if H < 3:
        raise ValueError("need at least three heights")
    heights = np.asarray(heights, dtype=float)
    shift = np.array([alpha, 0.0]) if tuple(beta) == (0, 0) else np.zeros(2)
    dev = fields - shift
    per_sample = np.mean(np.sum(dev**2, axis=-1), axis=-1)          # (M, H)
    var = per_sample.mean(axis=0)
    order = 2 * (beta[0] + beta[1]) + 1
    scaled = heights**order * var
    ks, pv = [], []
    for h in range(H):
        r = normality_test(fields[:, h, 0, 0])
        ks.append(r["ks_statistic"])
        pv.append(r["p_value"])
    sel = slice(fit_from, None)
    fit = None
    if np.all(var[sel] > 0):
        fit = DecayFit.from_samples(heights[sel], per_sample[:, sel], seed=seed)
    rng = np.random.default_rng(seed)
    boots = np.array([per_sample[rng.integers(0, M, M)].mean(axis=0) for _ in range(N_BOOT)])
    ci = np.percentile(boots, [2.5, 97.5], axis=0).T.tolist()
    top = scaled[H // 2:]
    return CLTReport(heights.tolist(), var.tolist(), scaled.tolist(), tuple(beta), ks, pv,
                     float(np.mean(top)), fit, ci)


def v_growth_check(t, V_samples, t_min: float = 4.0, t_max: float | None = None,
                   seed: int = 0) -> DecayFit:
    """Fit E|V(t)|^2 ~ t^p over ``[t_min, t_max]``.

    ``V_samples`` is (M, len(t)) of squared norms or (M, len(t), 2) vectors.
    ``extra['passes']`` records whether the growth exponent is at most 1.2."""
    V = np.asarray(V_samples, dtype=float)
    sq = np.sum(V**2, axis=-1) if V.ndim == 3 else V
    t = np.asarray(t, dtype=float)
    t_max = t.max() if t_max is None else t_max
    sel = (t >= t_min) & (t <= t_max)
    fit = DecayFit.from_samples(t[sel], sq[:, sel], seed=seed)
    fit.extra["passes"] = bool(fit.exponent <= 1.2)
    return fit


def correlation_scan(X, max_lag: int | None = None, circular: bool = False) -> dict:
    """Centered E(X_n X_0) per lag with standard errors.

    ``X`` is (M, L) scalar sequences (or (M, L, 2), first component used).
    With ``circular=True`` every starting index is used (periodic samples)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 3:
        X = X[..., 0]
    M, L = X.shape
    max_lag = (L // 2 if circular else L - 1) if max_lag is None else max_lag
    Xc = X - X.mean()
    lags = np.arange(max_lag + 1)
    vals, errs = [], []
    for n in lags:
        if circular:
            prod = np.mean(Xc * np.roll(Xc, -n, axis=1), axis=1)
        else:
            prod = Xc[:, n] * Xc[:, 0]
        vals.append(float(prod.mean()))
        errs.append(float(prod.std(ddof=1) / np.sqrt(M)) if M > 1 else 0.0)
    return {"lag": lags.tolist(), "value": vals, "std_error": errs}


def error_scaling_fit(eps, errors_by_law: dict, seed: int = 0) -> dict:
    """Log-log fit of L2 errors against epsilon for every wall law."""
    eps = np.asarray(eps, dtype=float)
    if len(eps) < 4:
        raise ValueError("need at least four epsilon values")
    out = {}
    for law, err in errors_by_law.items():
        fit = DecayFit.from_points(eps, np.asarray(err, dtype=float))
        fit.ci95 = _residual_bootstrap_ci(fit, seed)
        out[law] = fit
    return out


def normality_test(samples) -> dict:
    """One-sample KS test against the normal law with fitted mean and variance."""
    x = np.asarray(samples, dtype=float).ravel()
    sd = x.std(ddof=1) if len(x) > 1 else 0.0
    if sd <= 1e-14 * max(1.0, np.abs(x).max(initial=0.0)):
        return {"ks_statistic": 0.0, "p_value": 1.0, "degenerate": True}
    res = sps.kstest((x - x.mean()) / sd, "norm")
    return {"ks_statistic": float(res.statistic), "p_value": float(res.pvalue), "degenerate": False}


def bootstrap_mean_ci(values, seed: int = 0, n_boot: int = N_BOOT, statistic=np.mean):
    """Percentile 95% interval of a statistic over resampled rows."""
    v = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    M = v.shape[0]
    b = np.array([statistic(v[rng.integers(0, M, M)], axis=0) for _ in range(n_boot)])
    lo, hi = np.percentile(b, [2.5, 97.5], axis=0)
    return lo, hi
