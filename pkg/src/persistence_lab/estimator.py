"""Survival curves of first-passage times and persistence-exponent fits."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

Z95 = stats.norm.ppf(0.975)


class TailNoiseError(ValueError):
    """Fit window reaches into the noisy tail; ``suggested_t_hi`` is the largest usable end."""

    def __init__(self, msg, suggested_t_hi):
        super().__init__(msg)
        self.suggested_t_hi = suggested_t_hi


def wilson(p, n, z=Z95):
    """Wilson score interval ``(centre, half_width)`` for a binomial proportion."""
    p = np.asarray(p, dtype=float)
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z / den * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return centre, half


@dataclass(frozen=True)
class SurvivalCurve:
    t_grid: np.ndarray
    survival: np.ndarray
    ci_halfwidth: np.ndarray
    censored_fraction: float
    z: float
    replica_count: int
    excluded_fraction: float = 0.0

    def wilson_bounds(self):
        c, h = wilson(self.survival, self.replica_count)
        return np.clip(c - h, 0, 1), np.clip(c + h, 0, 1)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "survival", "ci"])
        for row in zip(self.t_grid, self.survival, self.ci_halfwidth):
            w.writerow([repr(float(v)) for v in row])


def survival_curve(passage_times, t_grid, z: float, *, horizon: float | None = None, exclude=None) -> SurvivalCurve:
    """Empirical ``P(T_z > t)`` on ``t_grid``.

    Censored replicas carry ``inf`` (or NaN / None) and count as surviving
    every grid time, which requires ``horizon >= max(t_grid)``.  Replicas
    flagged in ``exclude`` (e.g. boundary touches) are dropped entirely.
    """
    T = np.array([np.inf if v is None else v for v in passage_times], dtype=float)
    T[np.isnan(T)] = np.inf
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if horizon is not None and t_grid[-1] > horizon:
        raise ValueError(f"t_grid reaches {t_grid[-1]} beyond the horizon {horizon}")
    n_all = T.size
    if exclude is not None:
        T = T[~np.asarray(exclude, dtype=bool)]
    n = T.size
    if n < 100:
        raise ValueError(f"need at least 100 replicas, got {n}")
    Ts = np.sort(T)
    s = 1.0 - np.searchsorted(Ts, t_grid, side="right") / n
    _, half = wilson(s, n)
    return SurvivalCurve(t_grid, s, half, float(np.mean(np.isinf(T))), float(z), int(n), 1.0 - n / n_all)


def default_window(t_grid):
    """Top 2.5 decades of the grid, without its last half-decade."""
    t_max = float(np.max(t_grid))
    return t_max / 10**3, t_max / 10**0.5


@dataclass(frozen=True)
class ExponentFit:
    theta_hat: float
    ci: float
    window: tuple
    mode: str
    censored_fraction: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "ci": self.ci,
            "window": list(self.window),
            "mode": self.mode,
            "censored_fraction": self.censored_fraction,
        }

    def write_json(self, fh, extra: dict | None = None) -> None:
        d = self.to_dict()
        if extra:
            d.update(extra)
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sandwich_se(x, w, cov):
    """Standard error of the WLS slope when the responses have covariance ``cov``."""
    X = np.column_stack([np.ones_like(x), x])
    A = np.linalg.inv(X.T @ (w[:, None] * X))
    B = (X * w[:, None]).T @ cov @ (w[:, None] * X)
    return float(np.sqrt(max((A @ B @ A)[1, 1], 0.0)))


def exponent_fit(curve: SurvivalCurve, window=None, mode: str = "pure_power") -> ExponentFit:
    """Fit ``P(T > t) ~ t^-theta`` on ``window``.

    ``pure_power``: weighted least squares of ``log S`` on ``log t``, with
    weights from the binomial variance.  The reported CI is the larger of
    the independent-noise and empirical-process (cumulative, hence
    correlated) standard errors, times 1.96.

    ``local_slopes``: median over grid points of the slope between ``t``
    and ``2t``; the CI is half the interquartile range, floored at the
    statistical error of the pure-power fit.
    """
    if mode not in ("pure_power", "local_slopes"):
        raise ValueError(f"unknown mode {mode!r}")
    t, s, n = curve.t_grid, curve.survival, curve.replica_count
    lo, hi = default_window(t) if window is None else map(float, window)
    if lo < t[0] * (1 - 1e-12) or hi > t[-1] * (1 + 1e-12) or lo >= hi:
        raise ValueError(f"window [{lo}, {hi}] not inside the grid [{t[0]}, {t[-1]}]")
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    if sel.sum() < 6:
        raise ValueError("fit window holds fewer than 6 grid points")
    floor = 10.0 / n
    if np.any(s[sel] <= floor):
        ok = t[s > floor]
        raise TailNoiseError(
            f"survival drops to {s[sel].min():.3g} <= 10/replicas inside the window",
            float(ok.max()) if ok.size else None,
        )
    x, y, ss = np.log(t[sel]), np.log(s[sel]), s[sel]
    var = np.maximum((1 - ss) / (n * ss), 1.0 / (n * n))
    w = 1.0 / var
    coef = np.polynomial.polynomial.polyfit(x, y, 1, w=np.sqrt(w))
    slope = float(coef[1])
    se_ind = _sandwich_se(x, w, np.diag(var))
    # Cov(log S_a, log S_b) = (1/S_a - 1)/n for a <= b (a before b)
    idx = np.minimum.outer(np.arange(ss.size), np.arange(ss.size))
    cov = (1.0 / ss[idx] - 1.0) / n
    se_emp = _sandwich_se(x, w, cov)
    se = max(se_ind, se_emp)
    diag = {"se_independent": se_ind, "se_empirical": se_emp, "intercept": float(coef[0]), "points": int(sel.sum())}
    if mode == "pure_power":
        return ExponentFit(-slope, float(Z95 * se), (lo, hi), mode, curve.censored_fraction, diag)
    xs = x[x + np.log(2) <= x[-1] + 1e-12]
    if xs.size < 2:
        raise ValueError("window shorter than two dyadic steps")
    local = -(np.interp(xs + np.log(2), x, y) - np.interp(xs, x, y)) / np.log(2)
    q1, med, q3 = np.percentile(local, [25, 50, 75])
    diag.update({"iqr": float(q3 - q1), "local_slopes": local.tolist()})
    return ExponentFit(float(med), float(max((q3 - q1) / 2, Z95 * se)), (lo, hi), mode, curve.censored_fraction, diag)
