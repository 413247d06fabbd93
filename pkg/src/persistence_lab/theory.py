"""Closed-form persistence exponents.

Every model family with a known answer gets a calculator here; the Monte
Carlo modules are checked against these numbers.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class ExponentBundle:
    """Scaling exponents of one model.

    beta   index of the inverse local time (1 when positive recurrent)
    alpha  stability index of the area process ``Z``
    vartheta  skewness, in the ``tan(pi alpha / 2)`` parameterization
    rho    positivity parameter of ``Z``
    theta  persistence exponent, always ``beta * rho``
    """

    beta: float
    alpha: float
    vartheta: float
    rho: float
    theta: float

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta={self.beta} outside (0, 1]")
        if not (0.0 <= self.rho <= 1.0):
            raise ValueError(f"rho={self.rho} outside [0, 1]")
        if self.theta != self.beta * self.rho:
            raise ValueError("theta must equal beta * rho")

    @classmethod
    def from_parts(cls, beta, alpha, vartheta, rho):
        return cls(float(beta), float(alpha), float(vartheta), float(rho), float(beta) * float(rho))

    def to_dict(self) -> dict:
        return asdict(self)


def stable_rho(alpha: float, vartheta: float, *, form: str) -> float:
    """Positivity parameter ``P(Z >= 0)`` of a strictly stable law.

    ``form`` must be named explicitly because two conventions are in use:

    ``"skew"``
        ``rho = 1/2 + arctan(vartheta * tan(pi alpha / 2)) / (pi alpha)``
        with ``|vartheta| <= 1`` (undefined at ``alpha = 1``).
    ``"raw"``
        ``rho = 1/2 + arctan(vartheta) / (pi alpha)``, where ``vartheta``
        already contains the ``tan`` factor.
    ``"cauchy"``
        ``alpha = 1`` with centring constant ``vartheta``:
        ``rho = 1/2 + arctan(vartheta) / pi``.
    """
    if not (0.0 < alpha < 2.0):
        raise ValueError(f"alpha={alpha} outside (0, 2)")
    if form == "skew":
        if alpha == 1.0:
            raise ValueError("alpha = 1 has no skew form; supply the centring constant with form='cauchy'")
        if abs(vartheta) > 1.0:
            raise ValueError(f"|vartheta|={abs(vartheta)} > 1 in the skew parameterization")
        arg = vartheta * math.tan(math.pi * alpha / 2.0)
    elif form == "raw":
        arg = vartheta
    elif form == "cauchy":
        if alpha != 1.0:
            raise ValueError("form='cauchy' requires alpha = 1")
        arg = vartheta
    else:
        raise ValueError(f"unknown form {form!r}; use 'skew', 'raw' or 'cauchy'")
    rho = 0.5 + math.atan(arg) / (math.pi * alpha)
    if not (-1e-12 <= rho <= 1.0 + 1e-12):
        raise ValueError(f"vartheta={vartheta} gives rho={rho} outside [0, 1] at alpha={alpha}")
    # boundary rounding (vartheta = +-1, alpha < 1)
    return min(1.0, max(0.0, rho))


def skew_vartheta(eta: float, c_plus: float, c_minus: float, alpha: float) -> float:
    r = (c_minus / c_plus) ** alpha
    return (1.0 + eta - (1.0 - eta) * r) / (1.0 + eta + (1.0 - eta) * r)


def skew_bessel_params(delta: float, eta: float, gamma: float, c_plus: float = 1.0, c_minus: float = 1.0) -> ExponentBundle:
    """Exponents for a skew-Bessel process with ``f = (c+ 1{x>0} - c- 1{x<0}) |x|^gamma``."""
    if not (0.0 < delta < 2.0):
        raise ValueError(f"delta={delta} outside (0, 2)")
    if not (-1.0 < eta < 1.0):
        raise ValueError(f"eta={eta} outside (-1, 1)")
    if gamma <= -delta:
        raise ValueError(f"gamma={gamma} <= -delta={-delta}: zeta would not be finite")
    if c_plus <= 0 or c_minus <= 0:
        raise ValueError("c_plus and c_minus must be positive")
    beta = 1.0 - delta / 2.0
    alpha = (2.0 - delta) / (gamma + 2.0)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha={alpha} outside (0, 1) for the skew-Bessel family")
    vt = skew_vartheta(eta, c_plus, c_minus, alpha)
    return ExponentBundle.from_parts(beta, alpha, vt, stable_rho(alpha, vt, form="skew"))


def raw_vartheta(f_plus: float, f_minus: float, alpha: float) -> float:
    """Skewness from the two tail constants of the signed string ``m^f``."""
    a, b = f_plus**alpha, f_minus**alpha
    return (a - b) / (a + b) * math.tan(math.pi * alpha / 2.0)


def family_exponents(family: str, **params) -> ExponentBundle:
    """Exponent bundle for one of the built-in model families.

    Families: ``skew_bessel`` (delta, eta, gamma, c_plus, c_minus),
    ``bessel_walk`` (mu), ``srw`` (gamma), ``kinetic_fp`` (mu), ``ou``,
    ``bessel_nonhomogeneous`` (delta, gamma).
    """
    if family == "skew_bessel":
        return skew_bessel_params(
            params.get("delta", 1.0),
            params.get("eta", 0.0),
            params.get("gamma", 1.0),
            params.get("c_plus", 1.0),
            params.get("c_minus", 1.0),
        )
    if family == "srw":
        # Brownian limit: delta = 1, eta = 0, symmetric functional
        return skew_bessel_params(1.0, 0.0, params.get("gamma", 1.0))
    if family == "bessel_walk":
        mu = params["mu"]
        alpha = min(2.0, (1.0 + mu) / (params.get("gamma", 1.0) + 2.0))
        if mu > 1.0:
            # positive recurrent branch, symmetric
            return ExponentBundle.from_parts(1.0, alpha, 0.0, 0.5)
        if not (-1.0 < mu < 1.0):
            raise ValueError(f"mu={mu} outside (-1, 1); mu > 1 is the positive-recurrent branch")
        return ExponentBundle.from_parts(0.5 * (1.0 + mu), alpha, 0.0, 0.5)
    if family == "kinetic_fp":
        mu = params["mu"]
        if mu > 1.0:
            return ExponentBundle.from_parts(1.0, min(2.0, (mu + 1.0) / 3.0), 0.0, 0.5)
        if not (-1.0 < mu < 1.0):
            raise ValueError(f"mu={mu} outside (-1, 1); mu > 1 is the positive-recurrent branch")
        return ExponentBundle.from_parts(0.5 * (mu + 1.0), (mu + 1.0) / 3.0, 0.0, 0.5)
    if family == "ou":
        # positive recurrent, symmetric; Z has finite variance
        return ExponentBundle.from_parts(1.0, 2.0, 0.0, 0.5)
    if family == "bessel_nonhomogeneous":
        delta = params["delta"]
        gamma = params["gamma"]
        if not (0.0 < delta < 2.0):
            raise ValueError(f"delta={delta} outside (0, 2)")
        beta = 1.0 - delta / 2.0
        # stable index of m^f; Gaussian once it would exceed 2
        alpha = (2.0 - delta) / (gamma + 2.0) if gamma > -2.0 else 2.0
        return ExponentBundle.from_parts(beta, min(alpha, 2.0), 0.0, 0.5)
    raise ValueError(f"unknown family {family!r}")
