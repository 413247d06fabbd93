"""Exact path functionals of a piecewise-constant trajectory.

``zeta_t = int_0^t f(X_s) ds`` is kept as its breakpoint list (one per
jump), so every derived quantity is exact up to floating-point rounding:
running maximum ``xi``, zero set, local time ``L`` (occupation of 0 over
``m``), its right-continuous inverse ``tau``, last zero ``g_t`` and the
values of ``zeta`` sampled at inverse local times.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .excursions import PathTrace


@dataclass(frozen=True, eq=False)
class FunctionalTrace:
    """Breakpoint representation of the functionals of one path.

    Arrays indexed by breakpoint ``k = 0..n`` (``t[n]`` is the horizon):
    ``t``, ``zeta``, ``xi``, ``L``.  Per segment ``k = 0..n-1``: ``slope``
    (value of ``f``) and ``site`` (index).  ``zero_intervals`` are the
    maximal ``[a, b)`` spent at 0; ``Z_values[j]`` is ``zeta`` on the j-th
    of them, reached at local time ``Z_local_times[j]``.
    """

    t: np.ndarray
    zeta: np.ndarray
    xi: np.ndarray
    L: np.ndarray
    slope: np.ndarray
    site: np.ndarray
    x: np.ndarray
    m: float
    zero_index: int
    zero_intervals: np.ndarray
    Z_values: np.ndarray
    Z_local_times: np.ndarray
    zero_segments: np.ndarray

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    @property
    def total_local_time(self) -> float:
        return float(self.L[-1])

    def _segment(self, s: float) -> int:
        if not 0.0 <= s <= self.t[-1]:
            raise ValueError(f"time {s} outside [0, {self.t[-1]}]")
        return min(int(np.searchsorted(self.t, s, side="right")) - 1, self.slope.size - 1)

    def zeta_at(self, s: float) -> float:
        k = self._segment(s)
        return float(self.zeta[k] + self.slope[k] * (s - self.t[k]))

    def xi_at(self, s: float) -> float:
        k = self._segment(s)
        return max(float(self.xi[k]), self.zeta_at(s))

    def local_time_at(self, s: float) -> float:
        k = self._segment(s)
        if self.site[k] == self.zero_index:
            return float(self.L[k] + (s - self.t[k]) / self.m)
        return float(self.L[k])

    @property
    def zero_local_ends(self) -> np.ndarray:
        """Local time at the right end of each zero interval."""
        return self.L[self.zero_segments + 1]

    def _tau_index(self, u: float, left: bool) -> int:
        ends = self.zero_local_ends
        top = ends[-1] if ends.size else 0.0
        if u < 0 or u > top or (u == top and not left):
            raise ValueError(f"local time {u} outside the realized range [0, {top})")
        return int(np.searchsorted(ends, u, side="left" if left else "right"))

    def tau(self, u: float, *, left: bool = False) -> float:
        """Inverse local time ``inf{s : L_s > u}`` (``left``: ``inf{s : L_s >= u}``)."""
        j = self._tau_index(u, left)
        if left and j > 0 and u == self.Z_local_times[j]:
            return float(self.zero_intervals[j - 1, 1])
        return float(self.zero_intervals[j, 0] + (u - self.Z_local_times[j]) * self.m)

    def last_zero(self, s: float) -> float:
        """``g_s = sup{r < s : X_r = 0}``; the start of the holding interval when ``X_s = 0``."""
        zi = self.zero_intervals
        j = int(np.searchsorted(zi[:, 0], s, side="right")) - 1
        if j < 0 or s <= 0:
            raise ValueError(f"the path has not visited 0 before t={s}")
        a, b = zi[j]
        return float(a) if s < b else float(b)


def compute_trace(path: PathTrace, f_values, m: float) -> FunctionalTrace:
    """Exact functionals of ``path`` for ``f`` given per site index."""
    if not m > 0:
        raise ValueError("m must be positive")
    fv = np.asarray(f_values, dtype=float)
    site = path.site_indices
    dur = path.durations
    slope = fv[site]
    t = np.append(path.times, path.horizon)
    zeta = np.concatenate([[0.0], np.cumsum(slope * dur)])
    xi = np.maximum.accumulate(zeta)
    at0 = site == path.zero_index
    L = np.concatenate([[0.0], np.cumsum(np.where(at0, dur, 0.0))]) / m
    zi = path.zero_intervals
    starts = np.flatnonzero(at0)
    return FunctionalTrace(
        t=t,
        zeta=zeta,
        xi=xi,
        L=L,
        slope=slope,
        site=site,
        x=path.x_values(),
        m=float(m),
        zero_index=path.zero_index,
        zero_intervals=zi,
        Z_values=zeta[starts],
        Z_local_times=L[starts],
        zero_segments=starts,
    )


def first_passage(trace: FunctionalTrace, z: float):
    """``T_z = inf{t : zeta_t >= z}``, or ``None`` if not reached by the horizon."""
    if not z > 0:
        raise ValueError("barrier must be positive")
    hit = np.flatnonzero(trace.zeta >= z)
    if hit.size == 0:
        return None
    k = int(hit[0]) - 1
    return float(trace.t[k] + (z - trace.zeta[k]) / trace.slope[k])


def decomposition_quantities(trace: FunctionalTrace, t: float):
    """``(xi_g, zeta_g, I_t, Delta_t, xi_t)`` at time ``t`` with ``g = g_t``.

    ``xi_t = xi_g + max(Delta_t, 0)`` holds because ``zeta`` is monotone on
    the excursion straddling ``t``.
    """
    g = trace.last_zero(t)
    xi_g = trace.xi_at(g)
    zeta_g = trace.zeta_at(g)
    inc = trace.zeta_at(t) - zeta_g
    delta = inc - (xi_g - zeta_g)
    return xi_g, zeta_g, inc, delta, trace.xi_at(t)


def sup_identity_check(trace: FunctionalTrace, t_local: float, rtol: float = 1e-12) -> bool:
    """``sup_{[0, tau_t]} zeta == max_{s <= t} Z_s`` at local time ``t_local``."""
    u = float(t_local)
    j = trace._tau_index(u, False)
    lhs = trace.xi_at(trace.tau(u))
    # zeta_0 = 0 belongs to the sup even when the path starts away from 0
    rhs = max(0.0, float(np.max(trace.Z_values[: j + 1])))
    return abs(lhs - rhs) <= rtol * max(abs(lhs), abs(rhs), 1e-300)


def write_trace_csv(trace: FunctionalTrace, fh) -> None:
    """Breakpoints as CSV with columns ``t, X, zeta, xi, L``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "X", "zeta", "xi", "L"])
    xs = np.append(trace.x, trace.x[-1])
    for row in zip(trace.t, xs, trace.zeta, trace.xi, trace.L):
        w.writerow([repr(float(v)) for v in row])


def monotone_on_excursions(trace: FunctionalTrace) -> bool:
    """``zeta`` is monotone on every maximal interval away from 0."""
    s = np.sign(trace.slope)
    seg = np.cumsum(trace.site == trace.zero_index)
    for k in np.unique(seg):
        v = s[(seg == k) & (trace.site != trace.zero_index)]
        if v.size and not (np.all(v >= 0) or np.all(v <= 0)):
            return False
    return True


# ---------------------------------------------------------------- Monte Carlo decomposition

@dataclass(frozen=True)
class ExponentialTimeSamples:
    """Per replica, at an independent ``Exp(q)`` time ``e``:
    ``e, zeta_e, xi_e, xi_g, zeta_g`` (``g = g_e``) and truncation flags."""

    e: np.ndarray
    zeta: np.ndarray
    xi: np.ndarray
    xi_g: np.ndarray
    zeta_g: np.ndarray
    flags: np.ndarray
    q: float

    @property
    def delta(self) -> np.ndarray:
        return (self.zeta - self.zeta_g) - (self.xi_g - self.zeta_g)


def sample_at_exponential_time(chain, q: float, replicas: int, seed: int, *, workers: int = 1) -> ExponentialTimeSamples:
    """Run replica ``i`` (stream ``(seed, i)``) from 0 up to an independent ``Exp(q)`` time."""
    from . import _kernels as K
    from ._parallel import run_sharded
    from .excursions import chain_arrays

    if not q > 0:
        raise ValueError("q must be positive")
    up, rate, fv, _, z = chain_arrays(chain)
    out = np.empty((replicas, 6))
    k0 = np.uint64(seed % 2**64)
    run_sharded(lambda a, b: K.decomposition_at_exponential(up, rate, fv, z, float(q), k0, a, b, out[a:b]), replicas, workers)
    return ExponentialTimeSamples(*(out[:, i].copy() for i in range(5)), out[:, 5].astype(np.int64), float(q))


@dataclass(frozen=True)
class DecompositionCheck:
    """Both sides of ``P(xi_e < z) = P(xi_g < z) P(Delta <= 0) + P(xi_g + Delta < z, 0 < Delta < z)``.

    ``rhs_independent`` also replaces the second term by the convolution of
    the two marginals (full independence of ``xi_g`` and ``Delta``).
    """

    z: float
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    rhs_independent: float
    diff_se: float
    replicas: int

    @property
    def joint_se(self) -> float:
        return float(np.hypot(self.lhs_se, self.rhs_se))

    def agrees(self, k: float = 3.0) -> bool:
        return abs(self.lhs - self.rhs) <= k * self.joint_se


def decomposition_consistency(s: ExponentialTimeSamples, z: float) -> DecompositionCheck:
    keep = s.flags == 0
    xg, d, xe = s.xi_g[keep], s.delta[keep], s.xi[keep]
    n = xg.size
    A = xg < z
    B = d <= 0
    C = (xg + d < z) & (d > 0) & (d < z)
    pa, pb, pc = A.mean(), B.mean(), C.mean()
    lhs = float((xe < z).mean())
    rhs = float(pa * pb + pc)
    # delta method on the per-replica influence of pa*pb + pc
    infl = (A - pa) * pb + (B - pb) * pa + (C - pc)
    rhs_se = float(infl.std(ddof=1) / np.sqrt(n))
    lhs_se = float(np.sqrt(lhs * (1 - lhs) / n))
    diff = (xe < z) - lhs - infl
    # second term under full independence: P(xi_g + D < z, 0 < D < z) from the marginals
    dpos = np.sort(d[(d > 0) & (d < z)])
    xs = np.sort(xg)
    conv = np.searchsorted(xs, z - dpos, side="left").sum() / (n * n)
    return DecompositionCheck(float(z), lhs, lhs_se, rhs, rhs_se, float(pa * pb + conv),
                              float(diff.std(ddof=1) / np.sqrt(n)), int(n))
