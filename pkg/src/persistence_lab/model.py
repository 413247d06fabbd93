"""Generalized one-dimensional diffusions and their birth-death approximations.

A model is a triple ``(s, m, f)``: scale function, speed measure and the
sign-preserving functional integrated along the path.  Everything that gets
simulated is a :class:`ChainSpec`; :func:`stone_discretize` turns a triple
into one on a grid, and the walk families build theirs directly.

Conventions
-----------
* ``m`` is stored through its cumulative string, ``m(0) = 0``, right
  continuous, so ``m((a, b]) = m(b) - m(a)``.
* The generator is ``(1/2) d/dm d/ds`` (Brownian local-time normalization).
  With ``s = id`` and unit atoms on the integers this gives the unit-rate
  simple random walk.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize, special
from scipy.linalg import solve_banded


# ---------------------------------------------------------------- scale

@dataclass(frozen=True)
class ScaleFunction:
    """Strictly increasing continuous map with ``s(0) = 0``.

    kinds: ``identity``, ``skew_bessel`` (delta, eta), ``ou`` (rate),
    ``kinetic_fp`` (mu), ``power`` (exponent, symmetric ``sgn(x)|x|^a``),
    ``tabulated`` (breakpoints, values; linear between, linear
    extrapolation with the end slopes).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "tabulated":
            xs = np.asarray(self.params["breakpoints"], dtype=float)
            ys = np.asarray(self.params["values"], dtype=float)
            if xs.shape != ys.shape or xs.size < 2:
                raise ValueError("tabulated scale needs matching breakpoints/values, at least 2")
            if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
                raise ValueError("tabulated scale must be strictly increasing")
            if abs(float(np.interp(0.0, xs, ys))) > 1e-12 * max(1.0, float(np.max(np.abs(ys)))):
                raise ValueError("tabulated scale must vanish at 0")
        elif self.kind == "skew_bessel":
            _check_delta_eta(self.params["delta"], self.params["eta"])
        elif self.kind not in ("identity", "ou", "kinetic_fp", "power"):
            raise ValueError(f"unknown scale kind {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "identity":
            return x.copy()
        if k == "skew_bessel":
            d, e = p["delta"], p["eta"]
            sg = np.sign(x)
            return sg * (1.0 - sg * e) / (2.0 - d) * np.abs(x) ** (2.0 - d)
        if k == "ou":
            r = p.get("rate", 1.0)
            return math.sqrt(math.pi / (4.0 * r)) * special.erfi(math.sqrt(r) * x)
        if k == "kinetic_fp":
            return x * special.hyp2f1(-p["mu"] / 2.0, 0.5, 1.5, -x * x)
        if k == "power":
            return np.sign(x) * np.abs(x) ** p["exponent"]
        xs = np.asarray(p["breakpoints"], dtype=float)
        ys = np.asarray(p["values"], dtype=float)
        return _interp_extrap(x, xs, ys)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        k, p = self.kind, self.params
        if k == "identity":
            return y.copy()
        if k == "skew_bessel":
            d, e = p["delta"], p["eta"]
            sg = np.sign(y)
            return sg * ((2.0 - d) * np.abs(y) / (1.0 - sg * e)) ** (1.0 / (2.0 - d))
        if k == "power":
            return np.sign(y) * np.abs(y) ** (1.0 / p["exponent"])
        if k == "tabulated":
            return _interp_extrap(y, np.asarray(p["values"], float), np.asarray(p["breakpoints"], float))
        return np.vectorize(self._invert_scalar)(y)

    def _invert_scalar(self, y: float) -> float:
        if y == 0.0:
            return 0.0
        hi = 1.0
        while abs(float(self(np.sign(y) * hi))) < abs(y):
            hi *= 2.0
        a, b = (0.0, hi) if y > 0 else (-hi, 0.0)
        return optimize.brentq(lambda x: float(self(x)) - y, a, b, xtol=1e-14, rtol=1e-14)


def _interp_extrap(x, xs, ys):
    out = np.interp(x, xs, ys)
    lo, hi = x < xs[0], x > xs[-1]
    out = np.where(lo, ys[0] + (x - xs[0]) * (ys[1] - ys[0]) / (xs[1] - xs[0]), out)
    out = np.where(hi, ys[-1] + (x - xs[-1]) * (ys[-1] - ys[-2]) / (xs[-1] - xs[-2]), out)
    return out


def _check_delta_eta(delta, eta):
    if not (0.0 < delta < 2.0):
        raise ValueError(f"delta={delta} violates 0 < delta < 2")
    if not (-1.0 < eta < 1.0):
        raise ValueError(f"eta={eta} violates -1 < eta < 1")


# ---------------------------------------------------------------- speed

@dataclass(frozen=True)
class SpeedMeasure:
    """Speed measure through its cumulative string.

    kinds: ``lebesgue``, ``skew_bessel`` (delta, eta), ``ou`` (rate),
    ``kinetic_fp`` (mu), ``power`` (exponent; density ``|x|^(a-1)``),
    ``atomic`` (sites, masses).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "atomic":
            sites = np.asarray(self.params["sites"], dtype=float)
            masses = np.asarray(self.params["masses"], dtype=float)
            if sites.shape != masses.shape:
                raise ValueError("atomic speed measure: sites and masses differ in length")
            if np.any(np.diff(sites) <= 0):
                raise ValueError("atomic speed measure: sites must be strictly increasing")
            if np.any(masses <= 0):
                raise ValueError("atomic speed measure: masses must be strictly positive")
            if not np.any(sites == 0.0):
                raise ValueError("atomic speed measure: 0 must be in the support")
        elif self.kind == "skew_bessel":
            _check_delta_eta(self.params["delta"], self.params["eta"])
        elif self.kind not in ("lebesgue", "ou", "kinetic_fp", "power"):
            raise ValueError(f"unknown speed-measure kind {self.kind!r}")

    @property
    def is_atomic(self) -> bool:
        return self.kind == "atomic"

    def cumulative(self, x):
        """``m(x)`` with ``m(0) = 0``."""
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "lebesgue":
            return x.copy()
        if k == "skew_bessel":
            d, e = p["delta"], p["eta"]
            sg = np.sign(x)
            return sg * np.abs(x) ** d / (d * (1.0 - sg * e))
        if k == "ou":
            r = p.get("rate", 1.0)
            return math.sqrt(math.pi / (4.0 * r)) * special.erf(math.sqrt(r) * x)
        if k == "kinetic_fp":
            return x * special.hyp2f1(p["mu"] / 2.0, 0.5, 1.5, -x * x)
        if k == "power":
            a = p["exponent"]
            return np.sign(x) * np.abs(x) ** a / a
        sites = np.asarray(p["sites"], dtype=float)
        cm = np.concatenate([[0.0], np.cumsum(np.asarray(p["masses"], dtype=float))])
        zero = int(np.searchsorted(sites, 0.0, side="right"))
        # mass of atoms in (0, x] or minus mass in (x, 0]
        return cm[np.searchsorted(sites, x, side="right")] - cm[zero]

    def density(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "lebesgue":
            return np.ones_like(x)
        if k == "skew_bessel":
            d, e = p["delta"], p["eta"]
            return np.abs(x) ** (d - 1.0) / (1.0 - np.sign(x) * e)
        if k == "ou":
            return np.exp(-p.get("rate", 1.0) * x * x)
        if k == "kinetic_fp":
            return (1.0 + x * x) ** (-p["mu"] / 2.0)
        if k == "power":
            return np.abs(x) ** (p["exponent"] - 1.0)
        raise ValueError("atomic speed measure has no density")

    def mass(self, a, b):
        """``m((a, b])``."""
        if self.kind == "ou":
            # erfc keeps far-tail cells from cancelling to 0
            a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
            k = math.sqrt(self.params.get("rate", 1.0))
            c = math.sqrt(math.pi / (4.0 * k * k))
            right = c * (special.erfc(k * a) - special.erfc(k * b))
            left = c * (special.erfc(-k * b) - special.erfc(-k * a))
            mid = c * (special.erf(k * b) - special.erf(k * a))
            return np.where(a >= 0, right, np.where(b <= 0, left, mid))
        return self.cumulative(b) - self.cumulative(a)


# ---------------------------------------------------------------- functional

@dataclass(frozen=True)
class Functional:
    """Sign-preserving ``f`` with ``f(0) = 0``.

    kinds: ``identity``, ``sign``, ``signed_power`` (gamma, c_plus, c_minus),
    ``tabulated`` (points, values; linear interpolation).
    """

    kind: str = "identity"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "signed_power":
            if self.params.get("c_plus", 1.0) <= 0 or self.params.get("c_minus", 1.0) <= 0:
                raise ValueError("signed_power needs c_plus > 0 and c_minus > 0")
        elif self.kind == "tabulated":
            pts = np.asarray(self.params["points"], dtype=float)
            vals = np.asarray(self.params["values"], dtype=float)
            if np.any(vals[pts > 0] < 0) or np.any(vals[pts < 0] > 0) or np.any(vals[pts == 0] != 0):
                raise ValueError("tabulated functional does not preserve the sign of x")
        elif self.kind not in ("identity", "sign"):
            raise ValueError(f"unknown functional kind {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "identity":
            return x.copy()
        if k == "sign":
            return np.sign(x)
        if k == "signed_power":
            g = p.get("gamma", 1.0)
            ax = np.abs(x)
            with np.errstate(divide="ignore"):
                mag = np.where(ax > 0, ax ** g, 0.0)
            return np.where(x > 0, p.get("c_plus", 1.0) * mag, np.where(x < 0, -p.get("c_minus", 1.0) * mag, 0.0))
        return np.interp(x, np.asarray(p["points"], float), np.asarray(p["values"], float))


# ---------------------------------------------------------------- chain

@dataclass(frozen=True, eq=False)
class ChainSpec:
    """Continuous-time birth-death chain on a finite window.

    ``up_prob[i]`` is the probability that the jump out of ``sites[i]`` goes
    to ``sites[i+1]``; the end sites reflect (``up_prob`` 1 at the bottom,
    0 at the top).  ``scale`` holds the scale function at the sites and
    fixes the local-time normalization at 0.
    """

    sites: np.ndarray
    up_prob: np.ndarray
    hold_rate: np.ndarray
    f_values: np.ndarray
    scale: np.ndarray | None = None

    def __post_init__(self):
        sites = np.ascontiguousarray(self.sites, dtype=float)
        n = sites.size
        if n < 3:
            raise ValueError("a chain needs at least 3 sites")
        if np.any(np.diff(sites) <= 0):
            raise ValueError("sites must be strictly increasing")
        zero = np.flatnonzero(sites == 0.0)
        if zero.size != 1 or zero[0] in (0, n - 1):
            raise ValueError("0 must be an interior site")
        p = np.ascontiguousarray(self.up_prob, dtype=float)
        lam = np.ascontiguousarray(self.hold_rate, dtype=float)
        fv = np.ascontiguousarray(self.f_values, dtype=float)
        if p.shape != (n,) or lam.shape != (n,) or fv.shape != (n,):
            raise ValueError("up_prob, hold_rate and f_values must have one entry per site")
        if np.any(p[1:-1] <= 0) or np.any(p[1:-1] >= 1):
            raise ValueError("interior up-probabilities must lie strictly in (0, 1)")
        if not (np.all(np.isfinite(lam)) and np.all(lam > 0)):
            raise ValueError("hold rates must be finite and positive")
        if np.any(fv[sites > 0] < 0) or np.any(fv[sites < 0] > 0) or fv[zero[0]] != 0:
            raise ValueError("f_values must preserve the sign of the site and vanish at 0")
        p = p.copy()
        p[0], p[-1] = 1.0, 0.0
        scale = self.scale
        if scale is None:
            scale = natural_scale(p, int(zero[0]))
        scale = np.ascontiguousarray(scale, dtype=float)
        if scale.shape != (n,) or np.any(np.diff(scale) <= 0):
            raise ValueError("scale must be strictly increasing with one value per site")
        for name, arr in (("sites", sites), ("up_prob", p), ("hold_rate", lam), ("f_values", fv), ("scale", scale)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_sites(self) -> int:
        return self.sites.size

    @property
    def zero_index(self) -> int:
        return int(np.flatnonzero(self.sites == 0.0)[0])

    @property
    def local_time_mass(self) -> float:
        """Speed-measure mass of the cell at 0; occupation at 0 = mass * local time."""
        i = self.zero_index
        s = self.scale
        return 0.5 / self.hold_rate[i] * (1.0 / (s[i + 1] - s[i]) + 1.0 / (s[i] - s[i - 1]))

    @property
    def excursion_rate(self) -> float:
        """Excursions per unit of local time."""
        return self.hold_rate[self.zero_index] * self.local_time_mass

    def cell_masses(self) -> np.ndarray:
        """Speed measure of each interior site implied by rates and scale."""
        s = self.scale
        out = np.full(self.n_sites, np.nan)
        out[1:-1] = 0.5 / self.hold_rate[1:-1] * (1.0 / np.diff(s)[1:] + 1.0 / np.diff(s)[:-1])
        return out

    def with_functional(self, f: "Functional") -> "ChainSpec":
        return ChainSpec(self.sites, self.up_prob, self.hold_rate, f(self.sites), self.scale)

    def with_f_values(self, f_values) -> "ChainSpec":
        return ChainSpec(self.sites, self.up_prob, self.hold_rate, f_values, self.scale)


def natural_scale(up_prob, zero_index: int) -> np.ndarray:
    """Scale of a birth-death chain: ``x_0 = 0``, increments ``prod q_k / p_k``.

    The increment between sites i and i+1 is ``Delta_i`` with ``Delta_0 = 1``.
    End sites (reflecting) copy the neighbouring increment.
    """
    p = np.asarray(up_prob, dtype=float)
    n, z = p.size, zero_index
    ratio = np.ones(n)
    ratio[1:-1] = (1.0 - p[1:-1]) / p[1:-1]
    inc = np.empty(n - 1)
    inc[z] = 1.0
    for i in range(z + 1, n - 1):
        inc[i] = inc[i - 1] * ratio[i]
    for i in range(z - 1, -1, -1):
        # Delta_i = Delta_{i+1} * p_{i+1} / q_{i+1}
        inc[i] = inc[i + 1] / ratio[i + 1]
    x = np.concatenate([[0.0], np.cumsum(inc)])
    return x - x[z]


def walk_chain(up_prob, hold_rate=1.0, f: "Functional | None" = None, sites=None) -> ChainSpec:
    """Chain on consecutive integers centred at 0 from explicit up-probabilities."""
    p = np.asarray(up_prob, dtype=float)
    n = p.size
    if n % 2 != 1:
        raise ValueError("walk needs an odd number of sites centred at 0")
    if sites is None:
        L = n // 2
        sites = np.arange(-L, L + 1, dtype=float)
    lam = np.broadcast_to(np.asarray(hold_rate, dtype=float), (n,)).copy()
    f = f or Functional("identity")
    return ChainSpec(sites, p, lam, f(sites), None)


# ---------------------------------------------------------------- model

@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A validated ``(s, m, f)`` triple, optionally with a native chain."""

    family: str
    params: dict
    scale: ScaleFunction
    speed: SpeedMeasure
    functional: Functional
    native_chain: ChainSpec | None = None

    def chain(self, grid=None) -> ChainSpec:
        if self.native_chain is not None and grid is None:
            return self.native_chain
        if grid is None:
            raise ValueError(f"family {self.family!r} needs a grid to be discretized")
        return stone_discretize(self, grid)


def _functional_from_params(params: dict, default: str = "identity") -> Functional:
    f = params.get("f", default)
    if isinstance(f, Functional):
        return f
    if isinstance(f, dict):
        return Functional(f["kind"], {k: v for k, v in f.items() if k != "kind"})
    if f in ("identity", "id"):
        return Functional("identity")
    if f == "sign":
        return Functional("sign")
    if f == "signed_power":
        return Functional("signed_power", {k: params[k] for k in ("gamma", "c_plus", "c_minus") if k in params})
    raise ValueError(f"unknown functional {f!r}")


def bessel_walk_up_prob(mu: float, half_width: int, eps=None) -> np.ndarray:
    """``p_i = (1 - (mu + eps_i) / (2 i)) / 2`` for ``i >= 1``, mirrored, ``p_0 = 1/2``."""
    i = np.arange(1, half_width + 1, dtype=float)
    e = np.zeros_like(i) if eps is None else np.asarray(eps, dtype=float)[: half_width]
    if e.size != i.size:
        raise ValueError("eps must have at least half_width entries")
    right = 0.5 * (1.0 - (mu + e) / (2.0 * i))
    p = np.concatenate([1.0 - right[::-1], [0.5], right])
    if np.any(p[1:-1] <= 0) or np.any(p[1:-1] >= 1):
        raise ValueError(f"mu={mu} gives up-probabilities outside (0, 1)")
    return p


def build_model(family: str, **params) -> ModelSpec:
    """Construct one of the example families.

    ``skew_bessel``  delta in (0,2), eta in (-1,1), gamma > -delta, c_plus, c_minus
    ``ou``           rate > 0, f (odd functional, default identity)
    ``kinetic_fp``   mu > -1, f (default identity)
    ``bessel_walk``  mu, half_width, optional eps sequence, f
    ``srw``          half_width, f
    ``custom``       scale / speed / functional objects supplied directly
    """
    if family == "skew_bessel":
        d, e = params.get("delta", 1.0), params.get("eta", 0.0)
        _check_delta_eta(d, e)
        g = params.get("gamma", 1.0)
        if g <= -d:
            raise ValueError(f"gamma={g} <= -delta={-d}: zeta_t would be infinite (need gamma > -delta)")
        cp, cm = params.get("c_plus", 1.0), params.get("c_minus", 1.0)
        f = Functional("signed_power", {"gamma": g, "c_plus": cp, "c_minus": cm})
        return ModelSpec(family, dict(params), ScaleFunction("skew_bessel", {"delta": d, "eta": e}),
                         SpeedMeasure("skew_bessel", {"delta": d, "eta": e}), f)
    if family == "ou":
        r = params.get("rate", 1.0)
        if r <= 0:
            raise ValueError(f"rate={r} violates rate > 0")
        f = _functional_from_params(params)
        return ModelSpec(family, dict(params), ScaleFunction("ou", {"rate": r}), SpeedMeasure("ou", {"rate": r}), f)
    if family == "kinetic_fp":
        mu = params["mu"]
        if mu <= -1:
            raise ValueError(f"mu={mu} violates mu > -1")
        f = _functional_from_params(params)
        return ModelSpec(family, dict(params), ScaleFunction("kinetic_fp", {"mu": mu}),
                         SpeedMeasure("kinetic_fp", {"mu": mu}), f)
    if family in ("bessel_walk", "srw"):
        L = int(params.get("half_width", 1000))
        if L < 1:
            raise ValueError("half_width must be >= 1")
        mu = params.get("mu", 0.0) if family == "bessel_walk" else 0.0
        p = bessel_walk_up_prob(mu, L, params.get("eps"))
        f = _functional_from_params(params)
        chain = walk_chain(p, 1.0, f)
        s = chain.scale
        masses = 0.5 * (1.0 / np.diff(s)[1:] + 1.0 / np.diff(s)[:-1])
        speed = SpeedMeasure("atomic", {"sites": chain.sites[1:-1], "masses": masses})
        scale = ScaleFunction("tabulated", {"breakpoints": chain.sites, "values": s})
        return ModelSpec(family, dict(params), scale, speed, f, chain)
    if family == "custom":
        return ModelSpec(family, {}, params["scale"], params["speed"], params.get("functional", Functional()))
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------- strings

def string_m_s(model: ModelSpec, x):
    """``m^s(x) = m(s^{-1}(x))``, the speed measure pushed to natural scale."""
    return model.speed.cumulative(model.scale.inverse(x))


def string_m_f(model: ModelSpec, x):
    """``m^f(x) = int_0^x f(s^{-1}(u)) m^s(du) = int_0^{s^{-1}(x)} f dm``.

    Nondecreasing on the positive half-line, nonincreasing on the negative
    one.  Raises ``ValueError`` when ``f`` is not integrable at 0.
    """
    y = np.atleast_1d(model.scale.inverse(np.asarray(x, dtype=float)))
    out = np.array([_m_f_scalar(model, float(v)) for v in y])
    return out if np.ndim(x) else float(out[0])


def _m_f_scalar(model: ModelSpec, y: float) -> float:
    if y == 0.0:
        return 0.0
    f, m = model.functional, model.speed
    if m.is_atomic:
        sites = np.asarray(m.params["sites"], dtype=float)
        masses = np.asarray(m.params["masses"], dtype=float)
        sel = (sites > 0) & (sites <= y) if y > 0 else (sites > y) & (sites <= 0)
        tot = float(np.sum(f(sites[sel]) * masses[sel]))
        return tot if y > 0 else -tot
    sgn = 1.0 if y > 0 else -1.0
    b = abs(y)

    def g(v):
        return float(f(sgn * v) * m.density(sgn * v))

    # refine the lower cut by factors of 100; near 0 the pieces become
    # geometric with ratio r = 100^-(index), and r < 1 iff integrable
    cut = min(1e-2, b / 2)
    total, _ = integrate.quad(g, cut, b, limit=200)
    pieces = []
    for _ in range(10):
        piece, _ = integrate.quad(g, cut * 1e-2, cut, limit=200)
        pieces.append(piece)
        total += piece
        cut *= 1e-2
    a, c = abs(pieces[-2]), abs(pieces[-1])
    if c <= 1e-300 or c <= 1e-15 * abs(total):
        return sgn * total
    r = c / a if a > 0 else np.inf
    if r >= 0.999:
        raise ValueError("f o s^{-1} is not integrable against m^s near 0")
    total += pieces[-1] * r / (1.0 - r)
    return sgn * total


# ---------------------------------------------------------------- Stone

def stone_discretize(model: ModelSpec, grid: Sequence[float]) -> ChainSpec:
    """Birth-death chain on ``grid`` approximating the ``(s, m)`` diffusion.

    ``p_i = (s_i - s_{i-1}) / (s_{i+1} - s_{i-1})`` keeps ``s`` harmonic;
    ``lambda_i = (1/s+ + 1/s-) / (2 M_i)`` with ``M_i`` the speed mass of the
    grid cell (midpoint to midpoint), so the chain generator agrees with
    ``(1/2) d/dm d/ds``.  End sites reflect with half cells.
    """
    x = np.asarray(grid, dtype=float)
    if x.size < 3:
        raise ValueError("grid needs at least 3 sites")
    if np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing")
    if not np.any(x == 0.0):
        raise ValueError("grid must contain 0")
    s = np.asarray(model.scale(x), dtype=float)
    mid = 0.5 * (x[1:] + x[:-1])
    edges = np.concatenate([[x[0]], mid, [x[-1]]])
    if model.speed.is_atomic:
        # atoms at the sites themselves; closed cell on the left end
        edges = edges.copy()
        edges[0] = np.nextafter(x[0], -np.inf)
    M = np.asarray(model.speed.mass(edges[:-1], edges[1:]), dtype=float)
    if np.any(M[1:-1] <= 0):
        bad = x[1:-1][M[1:-1] <= 0]
        raise ValueError(f"speed measure vanishes on the cell of interior site(s) {bad[:5]}")
    ds = np.diff(s)
    n = x.size
    p = np.empty(n)
    lam = np.empty(n)
    p[1:-1] = ds[:-1] / (ds[1:] + ds[:-1])
    lam[1:-1] = 0.5 * (1.0 / ds[1:] + 1.0 / ds[:-1]) / M[1:-1]
    p[0], p[-1] = 1.0, 0.0
    for end, d in ((0, ds[0]), (n - 1, ds[-1])):
        mass = M[end] if M[end] > 0 else M[1 if end == 0 else n - 2]
        lam[end] = 0.5 / (d * mass)
    return ChainSpec(x, p, lam, model.functional(x), s)


def uniform_grid(x_min: float, x_max: float, step: float) -> np.ndarray:
    """Multiples of ``step`` in ``[x_min, x_max]`` (0 is always a site)."""
    if step <= 0 or x_min >= 0 or x_max <= 0:
        raise ValueError("need step > 0 and x_min < 0 < x_max")
    lo, hi = math.ceil(x_min / step - 1e-9), math.floor(x_max / step + 1e-9)
    return step * np.arange(lo, hi + 1, dtype=float)


# ---------------------------------------------------------------- exact solves

def _interior_system(chain: ChainSpec, lo: int, hi: int):
    idx = np.arange(lo + 1, hi)
    up = chain.hold_rate[idx] * chain.up_prob[idx]
    down = chain.hold_rate[idx] * (1.0 - chain.up_prob[idx])
    ab = np.zeros((3, idx.size))
    ab[0, 1:] = up[:-1]
    ab[1, :] = -(up + down)
    ab[2, :-1] = down[1:]
    return idx, up, down, ab


def exit_probability(chain: ChainSpec, lo: int, hi: int) -> np.ndarray:
    """``P_i(hit site hi before site lo)`` for every site index in ``[lo, hi]``."""
    idx, up, down, ab = _interior_system(chain, lo, hi)
    rhs = np.zeros(idx.size)
    rhs[-1] = -up[-1]
    h = solve_banded((1, 1), ab, rhs)
    return np.concatenate([[0.0], h, [1.0]])


def mean_exit_time(chain: ChainSpec, lo: int, hi: int) -> np.ndarray:
    """Expected time to leave ``(lo, hi)`` from every site index in ``[lo, hi]``."""
    idx, _, _, ab = _interior_system(chain, lo, hi)
    u = solve_banded((1, 1), ab, -np.ones(idx.size))
    return np.concatenate([[0.0], u, [0.0]])


def stationary_distribution(chain: ChainSpec) -> np.ndarray:
    """Stationary law of the reflected chain from detailed balance."""
    up = chain.hold_rate[:-1] * chain.up_prob[:-1]
    down = chain.hold_rate[1:] * (1.0 - chain.up_prob[1:])
    logw = np.concatenate([[0.0], np.cumsum(np.log(up) - np.log(down))])
    w = np.exp(logw - logw.max())
    return w / w.sum()


# ---------------------------------------------------------------- tail index

class TailIndex(NamedTuple):
    index: float
    residuals: np.ndarray
    drifting: bool
    decade_slopes: np.ndarray


def tail_index_check(x, values, side: str = "plus", drift_tol: float = 0.02) -> TailIndex:
    """Regular-variation index of a cumulative string from samples.

    The index is the least-squares slope of ``log|values|`` on ``log|x|``
    over the top decade.  Residuals are taken against that line over the
    whole sample; ``drifting`` flags a slowly varying factor, seen as
    per-decade slopes that spread by more than ``drift_tol``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(values, dtype=float)
    if side not in ("plus", "minus"):
        raise ValueError("side must be 'plus' or 'minus'")
    ax = np.abs(x)
    order = np.argsort(ax)
    ax, v = ax[order], v[order]
    if ax.size < 20 or ax[0] <= 0 or math.log10(ax[-1] / ax[0]) < 3.0 - 1e-9:
        raise ValueError("need >= 20 points spanning >= 3 decades")
    dv = np.diff(v)
    if side == "plus" and np.any(dv < 0) or side == "minus" and np.any(dv > 0):
        raise ValueError(f"string is not monotone on the {side} side")
    lx, lv = np.log(ax), np.log(np.abs(v))
    top = lx >= lx[-1] - math.log(10.0)
    slope, icpt = np.polyfit(lx[top], lv[top], 1)
    resid = lv - (slope * lx + icpt)
    edges = np.arange(lx[0], lx[-1] + 1e-9, math.log(10.0))
    slopes = []
    for a in edges[:-1]:
        sel = (lx >= a - 1e-12) & (lx <= a + math.log(10.0) + 1e-12)
        if sel.sum() >= 3:
            slopes.append(np.polyfit(lx[sel], lv[sel], 1)[0])
    slopes = np.asarray(slopes)
    drifting = bool(slopes.size >= 2 and np.ptp(slopes) > drift_tol)
    return TailIndex(float(slope), resid, drifting, slopes)


# ---------------------------------------------------------------- config

def grid_from_config(grid: dict) -> np.ndarray:
    if "sites" in grid:
        return np.asarray(grid["sites"], dtype=float)
    return uniform_grid(grid["min"], grid["max"], grid["step"])


def model_from_config(doc: dict) -> tuple[ModelSpec, ChainSpec]:
    """Model and simulable chain from one config document.

    Keys: ``family``, ``params``, optional ``grid`` {min, max, step} or
    {sites}; walk families take ``half_width`` from ``params`` instead.
    """
    model = build_model(doc["family"], **doc.get("params", {}))
    grid = doc.get("grid")
    chain = model.chain(grid_from_config(grid) if grid is not None and model.native_chain is None else None)
    return model, chain


def load_config(path) -> dict:
    return json.loads(Path(path).read_text())
