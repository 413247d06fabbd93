"""Monte Carlo laboratory for persistence exponents of additive functionals
of one-dimensional Markov processes."""

__version__ = "0.1.0"

from .rng import RngStream  # noqa: E402
from .theory import ExponentBundle, family_exponents, stable_rho  # noqa: E402
from .model import ChainSpec, ModelSpec, build_model, stone_discretize  # noqa: E402

__all__ = [
    "RngStream",
    "ExponentBundle",
    "family_exponents",
    "stable_rho",
    "ChainSpec",
    "ModelSpec",
    "build_model",
    "stone_discretize",
    "__version__",
]
