"""Sampling paths and excursions of a birth-death chain.

Every sampler is a pure function of ``(chain, RngStream)``.  Excursions are
measured from site 0: ``length`` excludes the holding time at 0 itself,
which is accounted for by the drift ``m`` of the inverse local time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels as K
from ._parallel import run_sharded
from .rng import RngStream

DEFAULT_STEP_CAP = 10**8

PATH_RECORD = np.dtype([("t", "<f8"), ("site", "<i4")])


def chain_arrays(chain):
    """Flat arrays the kernels consume: (up, rate, f, |x|, zero index)."""
    return (
        np.ascontiguousarray(chain.up_prob, dtype=float),
        np.ascontiguousarray(chain.hold_rate, dtype=float),
        np.ascontiguousarray(chain.f_values, dtype=float),
        np.abs(np.ascontiguousarray(chain.sites, dtype=float)),
        int(chain.zero_index),
    )


def _key(rng: RngStream):
    k0, k1 = rng.key
    return k0, k1, np.uint64(rng.counter % 2**64)


@dataclass(frozen=True)
class ExcursionSample:
    """One excursion away from 0.

    ``path`` (when retained) is ``(site_indices, holding_times)``; the last
    entry is the return to 0 with holding time 0.
    """

    length: float
    area: float
    amplitude: float
    sign: int
    censored: bool = False
    boundary: bool = False
    path: tuple | None = None


@dataclass(frozen=True)
class ExcursionBatch:
    """Consecutive excursions from one stream, as arrays."""

    length: np.ndarray
    area: np.ndarray
    amplitude: np.ndarray
    flags: np.ndarray
    steps: int

    @property
    def censored(self) -> np.ndarray:
        return (self.flags & K.FLAG_CENSORED) != 0

    @property
    def boundary(self) -> np.ndarray:
        return (self.flags & K.FLAG_BOUNDARY) != 0

    def __len__(self):
        return self.length.size


def sample_excursion(chain, rng: RngStream, *, keep_path: bool = False, cap: int = DEFAULT_STEP_CAP) -> ExcursionSample:
    """The first excursion drawn by ``rng``.

    With ``keep_path`` the visited sites are returned as well, and the
    constant-sign property is asserted on them.
    """
    up, rate, fv, absx, z = chain_arrays(chain)
    k0, k1, c = _key(rng)
    sites, holds, fl = K.excursion_path(up, rate, fv, absx, z, cap, k0, k1, c)
    inner = sites[:-1]
    length = float(np.sum(holds))
    area = float(np.dot(fv[inner], holds[:-1]))
    amp = float(absx[inner].max()) if inner.size else 0.0
    sign = 1 if inner.size and inner[0] > z else -1
    if fl & K.FLAG_CENSORED == 0:
        if sign > 0:
            assert np.all(inner > z), "excursion changed sign"
        else:
            assert np.all(inner < z), "excursion changed sign"
    return ExcursionSample(
        length,
        area,
        amp,
        sign,
        bool(fl & K.FLAG_CENSORED),
        bool(fl & K.FLAG_BOUNDARY),
        (sites, holds) if keep_path else None,
    )


def sample_excursions(chain, rng: RngStream, count: int, *, cap: int = DEFAULT_STEP_CAP) -> ExcursionBatch:
    """``count`` i.i.d. excursions drawn consecutively from ``rng``.

    The first one coincides with :func:`sample_excursion` on the same stream.
    """
    up, rate, fv, absx, z = chain_arrays(chain)
    k0, k1, c = _key(rng)
    ln = np.empty(count)
    ar = np.empty(count)
    am = np.empty(count)
    fl = np.empty(count, dtype=np.int64)
    steps = K.excursions(up, rate, fv, absx, z, cap, k0, k1, c, count, ln, ar, am, fl)
    return ExcursionBatch(ln, ar, am, fl, int(steps))


@dataclass(frozen=True)
class LevyBlocks:
    """Increments of ``(tau, Z)`` over consecutive blocks of local time."""

    local_time: float
    dtau: np.ndarray
    dz: np.ndarray
    count: np.ndarray
    flags: np.ndarray

    @property
    def truncated_fraction(self) -> float:
        return float(np.mean(self.flags != 0)) if self.flags.size else 0.0


def sample_levy_blocks(chain, local_time_units: float, blocks: int, rng: RngStream, *, cap: int = DEFAULT_STEP_CAP) -> LevyBlocks:
    """``blocks`` i.i.d. increments of ``(tau, Z)`` from one stream.

    Per block the chain spends exactly ``m * local_time_units`` at 0; the
    excursions launched meanwhile form a Poisson number with mean
    ``chain.excursion_rate * local_time_units``.
    """
    if not local_time_units > 0:
        raise ValueError("local_time_units must be positive")
    up, rate, fv, absx, z = chain_arrays(chain)
    k0, k1, c = _key(rng)
    dtau = np.empty(blocks)
    dz = np.empty(blocks)
    cnt = np.empty(blocks, dtype=np.int64)
    fl = np.empty(blocks, dtype=np.int64)
    K.levy_blocks(up, rate, fv, absx, z, float(chain.local_time_mass), float(local_time_units), cap, k0, k1, c, dtau, dz, cnt, fl)
    return LevyBlocks(float(local_time_units), dtau, dz, cnt, fl)


def sample_levy_increment(chain, local_time_units: float, rng: RngStream, *, cap: int = DEFAULT_STEP_CAP):
    """``(dtau, dZ, excursion_count)`` accumulated over ``local_time_units`` of local time."""
    b = sample_levy_blocks(chain, local_time_units, 1, rng, cap=cap)
    return float(b.dtau[0]), float(b.dz[0]), int(b.count[0])


def levy_block_table(chain, local_time_units: float, replicas: int, seed: int, *, workers: int = 1, cap: int = DEFAULT_STEP_CAP) -> LevyBlocks:
    """One block per replica stream ``RngStream(seed, i)``, sharded over workers."""
    dtau = np.empty(replicas)
    dz = np.empty(replicas)
    cnt = np.empty(replicas, dtype=np.int64)
    fl = np.empty(replicas, dtype=np.int64)
    up, rate, fv, absx, z = chain_arrays(chain)
    m = float(chain.local_time_mass)

    def task(a, b):
        for r in range(a, b):
            K.levy_blocks(up, rate, fv, absx, z, m, float(local_time_units), cap, np.uint64(seed % 2**64), np.uint64(r), np.uint64(0),
                          dtau[r:r + 1], dz[r:r + 1], cnt[r:r + 1], fl[r:r + 1])

    run_sharded(task, replicas, workers)
    return LevyBlocks(float(local_time_units), dtau, dz, cnt, fl)


@dataclass(frozen=True, eq=False)
class PathTrace:
    """Piecewise-constant path: at ``site_indices[k]`` on ``[times[k], times[k+1])``.

    ``times[0]`` is the start (0); ``jump_times`` are the later entries.
    The last segment runs to ``horizon``.
    """

    times: np.ndarray
    site_indices: np.ndarray
    horizon: float
    zero_index: int
    boundary_touched: bool = False
    positions: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.site_indices, dtype=np.int32)
        if t.ndim != 1 or t.shape != s.shape or t.size == 0:
            raise ValueError("times and site_indices must be equal-length 1-d arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("jump times must be strictly increasing")
        if t[-1] > self.horizon:
            raise ValueError("last jump after the horizon")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "site_indices", s)

    @property
    def jump_times(self) -> np.ndarray:
        return self.times[1:]

    @property
    def durations(self) -> np.ndarray:
        return np.diff(np.append(self.times, self.horizon))

    @cached_property
    def zero_intervals(self) -> np.ndarray:
        """Maximal ``[a, b)`` intervals spent at site 0, shape ``(k, 2)``."""
        at0 = self.site_indices == self.zero_index
        ends = np.append(self.times[1:], self.horizon)
        # segments at 0 are never adjacent (a jump always changes site)
        return np.column_stack([self.times[at0], ends[at0]])

    def x_values(self) -> np.ndarray:
        if self.positions is None:
            return self.site_indices.astype(float) - self.zero_index
        return self.positions[self.site_indices]


def sample_path(chain, horizon: float, start_site: int | None, rng: RngStream, *, capacity: int = 1024) -> PathTrace:
    """Trajectory on ``[0, horizon]``; ``start_site`` is an index (default: site 0)."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    z = chain.zero_index
    start = z if start_site is None else int(start_site)
    if not 0 <= start < chain.n_sites:
        raise ValueError(f"start_site {start} outside 0..{chain.n_sites - 1}")
    k0, k1, c = _key(rng)
    t, s, fl = K.path(np.ascontiguousarray(chain.up_prob, dtype=float), np.ascontiguousarray(chain.hold_rate, dtype=float),
                      start, float(horizon), k0, k1, c, capacity)
    return PathTrace(t, s, float(horizon), z, bool(fl & K.FLAG_BOUNDARY), np.asarray(chain.sites, dtype=float))


def dump_path(trace: PathTrace, fh) -> None:
    """Binary dump, one little-endian record per segment: float64 time, int32 site."""
    rec = np.empty(trace.times.size, dtype=PATH_RECORD)
    rec["t"] = trace.times
    rec["site"] = trace.site_indices
    fh.write(rec.tobytes())


def load_path(fh, horizon: float, zero_index: int) -> PathTrace:
    rec = np.frombuffer(fh.read(), dtype=PATH_RECORD)
    return PathTrace(rec["t"].copy(), rec["site"].copy(), horizon, zero_index)
