"""Fluctuation quantities of the area walk.

The walk's steps are excursion areas (optionally paired with the time
``dtau`` each step takes).  From it: strict ascending ladder heights, the
renewal function ``V``, the Laplace exponent ``Phi`` of the inverse local
time, the Wiener-Hopf factors ``kappa(0, q, 0)`` (up to their unknown
constant) and positivity fractions.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import _kernels as K
from ._parallel import run_sharded
from .excursions import DEFAULT_STEP_CAP, chain_arrays

Z95 = stats.norm.ppf(0.975)

# exp(-27.64) < 1e-12: beyond this both exponentials in the kappa integrand are negligible
NEGLIGIBLE = -np.log(1e-12)


@dataclass(frozen=True, eq=False)
class AreaWalk:
    steps: np.ndarray
    dtau: np.ndarray | None = None
    flags: int = 0

    def __post_init__(self):
        object.__setattr__(self, "steps", np.asarray(self.steps, dtype=float))
        if self.dtau is not None:
            object.__setattr__(self, "dtau", np.asarray(self.dtau, dtype=float))

    @property
    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.steps)

    @property
    def censored(self) -> bool:
        return bool(self.flags & K.FLAG_CENSORED)

    def __len__(self):
        return self.steps.size


def sample_area_walks(
    chain,
    walks: int,
    seed: int,
    *,
    max_steps: int = 10**6,
    ladder_target: int = 2**62,
    z_stop: float = np.inf,
    step_budget: int = 10**9,
    cap: int = DEFAULT_STEP_CAP,
    workers: int = 1,
) -> list[AreaWalk]:
    """One walk per stream ``RngStream(seed, i)``; one excursion per step.

    A walk stops after ``max_steps`` steps, at its ``ladder_target``-th
    strict record (0 excluded), once its maximum exceeds ``z_stop``, or when
    it has used ``step_budget`` chain steps (then it is flagged censored).
    """
    up, rate, fv, absx, z = chain_arrays(chain)
    out = [None] * walks
    k0 = np.uint64(seed % 2**64)

    def task(a, b):
        for r in range(a, b):
            ar, ln, fl = K.area_walk(up, rate, fv, absx, z, cap, k0, np.uint64(r), np.uint64(0),
                                     max_steps, ladder_target, float(z_stop), step_budget)
            out[r] = AreaWalk(ar, ln, int(fl))

    run_sharded(task, walks, workers)
    return out


# ---------------------------------------------------------------- ladder


@dataclass(frozen=True, eq=False)
class LadderDecomposition:
    """Strict ascending ladder points; index 0 is ``(0, 0.0)``."""

    epochs: np.ndarray
    heights: np.ndarray
    tau_at_epochs: np.ndarray | None = None

    def __len__(self):
        return self.epochs.size


def ladder_heights(walk) -> LadderDecomposition:
    """Records ``S_n > max_{k<n} S_k`` with ``S_0 = 0`` counted; ties are not records."""
    steps = walk.steps if isinstance(walk, AreaWalk) else np.asarray(walk, dtype=float)
    s = np.concatenate([[0.0], np.cumsum(steps)])
    prev_max = np.maximum.accumulate(s)[:-1]
    ep = np.concatenate([[0], 1 + np.flatnonzero(s[1:] > prev_max)])
    taus = None
    if isinstance(walk, AreaWalk) and walk.dtau is not None:
        taus = np.concatenate([[0.0], np.cumsum(walk.dtau)])[ep]
    return LadderDecomposition(ep, s[ep], taus)


@dataclass(frozen=True)
class RenewalTable:
    z: np.ndarray
    renewal: np.ndarray
    ci: np.ndarray
    walks_used: int
    excluded: int

    @property
    def excluded_fraction(self) -> float:
        tot = self.walks_used + self.excluded
        return self.excluded / tot if tot else 0.0

    def slope(self, z_lo: float | None = None, z_hi: float | None = None) -> float:
        """Least-squares slope of ``log V`` against ``log z`` inside ``[z_lo, z_hi]``."""
        sel = (self.z > 0) & (self.z >= (z_lo or 0)) & (self.z <= (z_hi or np.inf))
        return float(np.polyfit(np.log(self.z[sel]), np.log(self.renewal[sel]), 1)[0])


def renewal_estimate(walks, z_grid, K: int = 64) -> RenewalTable:
    """Mean number of ladder heights ``<= z`` among the first ``K`` (``H_0 = 0`` included).

    A walk with fewer than ``K`` ladder points is kept when its maximum
    already exceeds ``max(z_grid)`` (its counts are then final) and is
    otherwise excluded; censored walks are always excluded.
    """
    z_grid = np.asarray(z_grid, dtype=float)
    zmax = z_grid.max()
    counts, excluded = [], 0
    for w in walks:
        lad = ladder_heights(w)
        h = lad.heights[:K]
        censored = isinstance(w, AreaWalk) and w.censored
        if censored or (h.size < K and h[-1] <= zmax):
            excluded += 1
            continue
        counts.append(np.searchsorted(h, z_grid, side="right"))
    c = np.asarray(counts, dtype=float).reshape(-1, z_grid.size)
    n = c.shape[0]
    v = c.mean(axis=0) if n else np.full(z_grid.size, np.nan)
    ci = Z95 * c.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(z_grid.size, np.nan)
    return RenewalTable(z_grid, v, ci, n, excluded)


# ---------------------------------------------------------------- Phi


@dataclass(frozen=True)
class PhiTable:
    q: np.ndarray
    phi: np.ndarray
    ci: np.ndarray
    usable: np.ndarray

    def slope(self) -> float:
        u = self.usable
        return float(np.polyfit(np.log(self.q[u]), np.log(self.phi[u]), 1)[0])

    def shape_ok(self) -> bool:
        """Nondecreasing, and concave on the (possibly uneven) q grid."""
        q, p = self.q[self.usable], self.phi[self.usable]
        if np.any(np.diff(p) < 0):
            return False
        sl = np.diff(p) / np.diff(q)
        return bool(np.all(np.diff(sl) <= 1e-12 * np.abs(sl[:-1]).max(initial=1.0)))


def phi_estimate(dtau, q_grid, local_time: float = 1.0, min_mean: float = 1e-200) -> PhiTable:
    """``Phi(q) = -log mean exp(-q dtau) / t`` from i.i.d. increments over local time ``t``.

    The CI is the delta-method half-width.  An entry whose sample mean
    underflows (below ``min_mean``) is flagged unusable and set to NaN.
    """
    x = np.asarray(dtau, dtype=float)
    q = np.asarray(q_grid, dtype=float)
    if x.size < 1000:
        raise ValueError("phi_estimate needs at least 1000 samples")
    if np.any(q <= 0):
        raise ValueError("q_grid must be positive")
    e = np.exp(-np.outer(q, x))
    mu = e.mean(axis=1)
    sd = e.std(axis=1, ddof=1)
    usable = mu > min_mean
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(usable, -np.log(mu) / local_time, np.nan)
        ci = np.where(usable, Z95 * sd / np.sqrt(x.size) / mu / local_time, np.nan)
    return PhiTable(q, phi, ci, usable)


# ---------------------------------------------------------------- kappa


def log_grid(t_min: float, t_max: float, per_decade: int = 64) -> np.ndarray:
    n = int(round(np.log10(t_max / t_min) * per_decade)) + 1
    return np.logspace(np.log10(t_min), np.log10(t_max), n)


@dataclass(frozen=True, eq=False)
class LocalTimeSamples:
    """``(tau_t, Z_t)`` per replica (rows) at the local times ``t_grid``."""

    t_grid: np.ndarray
    tau: np.ndarray
    Z: np.ndarray
    flags: np.ndarray
    m: float
    rate: float


def sample_local_time_grid(chain, t_grid, replicas: int, seed: int, *, q_min: float, workers: int = 1,
                           cap: int = DEFAULT_STEP_CAP) -> LocalTimeSamples:
    """Record ``(tau_t, Z_t)`` on ``t_grid``; a replica stops once both
    ``exp(-t)`` and ``exp(-q_min tau_t)`` are negligible."""
    up, rate, fv, absx, z = chain_arrays(chain)
    t_grid = np.ascontiguousarray(t_grid, dtype=float)
    g = t_grid.size
    tau = np.empty((replicas, g))
    zz = np.empty((replicas, g))
    fl = np.empty(replicas, dtype=np.int64)
    m = float(chain.local_time_mass)
    k0 = np.uint64(seed % 2**64)

    def task(a, b):
        K.local_time_grid(up, rate, fv, absx, z, m, t_grid, NEGLIGIBLE / q_min, NEGLIGIBLE, cap, k0, a, b,
                          tau[a:b], zz[a:b], fl[a:b])

    run_sharded(task, replicas, workers)
    return LocalTimeSamples(t_grid, tau, zz, fl, m, float(chain.excursion_rate))


@dataclass(frozen=True)
class KappaTable:
    """``log kappa(0, q, 0) - log c`` for both signs, with truncation bounds.

    ``log_plus`` / ``log_minus`` carry the quadrature over ``[t_min, t_max]``;
    ``ci_*`` are 95% half-widths on the log scale.
    """

    q: np.ndarray
    log_plus: np.ndarray
    log_minus: np.ndarray
    ci_plus: np.ndarray
    ci_minus: np.ndarray
    head_bound: np.ndarray
    tail_bound: np.ndarray
    flagged: np.ndarray
    replicas: int
    excluded: int = 0

    @property
    def kappa_plus(self) -> np.ndarray:
        return np.exp(self.log_plus)

    @property
    def kappa_minus(self) -> np.ndarray:
        return np.exp(self.log_minus)

    def slope(self, sign: str = "plus", q_lo: float | None = None, q_hi: float | None = None) -> float:
        y = self.log_plus if sign == "plus" else self.log_minus
        sel = (self.q >= (q_lo or 0)) & (self.q <= (q_hi or np.inf))
        return float(np.polyfit(np.log(self.q[sel]), y[sel], 1)[0])


def _log_trapezoid_weights(t):
    u = np.log(t)
    w = np.zeros_like(u)
    du = np.diff(u)
    w[:-1] += du / 2
    w[1:] += du / 2
    return w


def kappa_from_samples(samples: LocalTimeSamples, q_grid, tol: float = 1e-3, phi=None,
                       exclude_boundary: bool = True) -> KappaTable:
    """Quadrature of ``E[(e^-t - e^{-q tau_t}) 1{Z_t >= 0}] / t`` over ``log t``.

    Per replica the integral is a fixed linear functional of its path, so
    the CI comes straight from the spread of the per-replica integrals.
    Head bound: the integrand is at most ``1 + Phi(q) <= 1 + q m + rate``.
    Tail bound: ``E1(t_max) + E1(t_max Phi(q))``, with ``Phi`` from ``phi``
    (a callable) when given, else the deterministic lower bound ``q m``.
    Censored replicas are always dropped; boundary-touching ones only when
    ``exclude_boundary`` (the chain truncates an unbounded state space).
    """
    t = samples.t_grid
    w = _log_trapezoid_weights(t)
    drop = K.FLAG_CENSORED | (K.FLAG_BOUNDARY if exclude_boundary else 0)
    keep = (samples.flags & drop) == 0
    tau, zz = samples.tau[keep], samples.Z[keep]
    pos = zz >= 0
    et = np.exp(-t)
    q_grid = np.asarray(q_grid, dtype=float)
    out = {k: np.empty(q_grid.size) for k in ("lp", "lm", "cp", "cm", "hb", "tb")}
    n = tau.shape[0]
    for i, q in enumerate(q_grid):
        d = (et[None, :] - np.exp(-q * tau)) * w[None, :]
        yp = np.where(pos, d, 0.0).sum(axis=1)
        ym = np.where(pos, 0.0, d).sum(axis=1)
        out["lp"][i] = yp.mean()
        out["lm"][i] = ym.mean()
        out["cp"][i] = Z95 * yp.std(ddof=1) / np.sqrt(n)
        out["cm"][i] = Z95 * ym.std(ddof=1) / np.sqrt(n)
        out["hb"][i] = t[0] * (1.0 + q * samples.m + samples.rate)
        ph = phi(q) if phi is not None else q * samples.m
        out["tb"][i] = special.exp1(t[-1]) + special.exp1(t[-1] * ph)
    flagged = out["hb"] + out["tb"] > tol
    return KappaTable(q_grid, out["lp"], out["lm"], out["cp"], out["cm"], out["hb"], out["tb"], flagged, n,
                      int(np.sum(~keep)))


def kappa_estimate(chain, q_grid, t_grid, replicas: int, seed: int, *, workers: int = 1, tol: float = 1e-3,
                   phi=None, exclude_boundary: bool = True) -> KappaTable:
    """Wiener-Hopf factors ``kappa(0, q, 0)`` and its dual, up to their common constant."""
    q_grid = np.asarray(q_grid, dtype=float)
    s = sample_local_time_grid(chain, t_grid, replicas, seed, q_min=float(q_grid.min()), workers=workers)
    return kappa_from_samples(s, q_grid, tol=tol, phi=phi, exclude_boundary=exclude_boundary)


def product_ratio(kappa: KappaTable, phi: PhiTable):
    """``kappa_+ kappa_- / Phi`` per q (constant in theory) and its relative spread."""
    r = np.exp(kappa.log_plus + kappa.log_minus) / phi.phi
    return r, float((r.max() - r.min()) / np.mean(r))


# ---------------------------------------------------------------- positivity


@dataclass(frozen=True)
class Positivity:
    """``fraction[n-1]`` estimates ``P(S_n >= 0)``; ``cesaro`` is its running mean."""

    n: np.ndarray
    fraction: np.ndarray
    cesaro: np.ndarray
    terminal: float
    terminal_ci: float
    walks: int


def spitzer_and_positivity(walks) -> Positivity:
    """Running and Cesaro positivity fractions.

    A single walk gives the path fractions ``1{S_n >= 0}``; a list of walks
    is averaged across walks at each ``n`` (censored walks dropped, all
    truncated to the shortest one).
    """
    if isinstance(walks, AreaWalk) or (isinstance(walks, np.ndarray) and walks.ndim == 1):
        walks = [walks]
    arrs = [w.steps if isinstance(w, AreaWalk) else np.asarray(w, dtype=float)
            for w in walks if not (isinstance(w, AreaWalk) and w.censored)]
    if not arrs or min(a.size for a in arrs) == 0:
        raise ValueError("need at least one nonempty walk")
    n = min(a.size for a in arrs)
    s = np.cumsum(np.stack([a[:n] for a in arrs]), axis=1)
    frac = (s >= 0).mean(axis=0)
    ces = np.cumsum(frac) / np.arange(1, n + 1)
    k = s.shape[0]
    p = float(frac[-1])
    ci = float(Z95 * np.sqrt(p * (1 - p) / k)) if k > 1 else float("nan")
    return Positivity(np.arange(1, n + 1), frac, ces, p, ci, k)


# ---------------------------------------------------------------- tables


@dataclass
class FluctuationTables:
    phi: PhiTable | None = None
    kappa: KappaTable | None = None
    renewal: RenewalTable | None = None
    positivity: Positivity | None = None
    notes: dict = field(default_factory=dict)

    def write(self, outdir) -> list:
        """Write whichever tables are present; returns the paths written."""
        from pathlib import Path

        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        if self.phi is not None or self.kappa is not None:
            q = self.phi.q if self.phi is not None else self.kappa.q
            nan = np.full(q.size, np.nan)
            phi = self.phi.phi if self.phi is not None else nan
            pci = self.phi.ci if self.phi is not None else nan
            kp = self.kappa.kappa_plus if self.kappa is not None else nan
            km = self.kappa.kappa_minus if self.kappa is not None else nan
            written.append(_write_csv(outdir / "fluctuation_q.csv", ["q", "phi", "phi_ci", "kappa_plus", "kappa_minus"],
                                      zip(q, phi, pci, kp, km)))
        if self.renewal is not None:
            r = self.renewal
            written.append(_write_csv(outdir / "renewal.csv", ["z", "renewal", "ci"], zip(r.z, r.renewal, r.ci)))
        if self.positivity is not None:
            p = self.positivity
            written.append(_write_csv(outdir / "positivity.csv", ["n", "positivity"], zip(p.n, p.fraction)))
        return written


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v.item() if hasattr(v, "item") else v) for v in row])
    return path
