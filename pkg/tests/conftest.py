import numpy as np
import pytest
from scipy.linalg import solve_banded

from persistence_lab.model import Functional, build_model

# acceptance criteria register their verdict lines here; printed at the end
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def srw_small():
    return build_model("srw", half_width=30).chain()


@pytest.fixture(scope="session")
def srw_sign():
    return build_model("srw", half_width=100, f="sign").chain()


def excursion_laplace(chain, q):
    """Exact ``E[exp(-q * length)]`` of one excursion from 0, by linear solves.

    ``u_i = E_i exp(-q T_0)`` solves ``(lam_i + q) u_i = lam_i (p_i u_{i+1} + (1 - p_i) u_{i-1})``
    on each side of 0, with ``u = 1`` at 0.
    """
    p, lam, z, n = chain.up_prob, chain.hold_rate, chain.zero_index, chain.n_sites

    def side(idx):
        # idx runs away from 0; neighbour towards 0 is idx[k-1] (or z), away is idx[k+1]
        k = idx.size
        toward = np.where(idx > z, 1.0 - p[idx], p[idx])
        away = 1.0 - toward
        ab = np.zeros((3, k))
        ab[1] = lam[idx] + q
        ab[0, 1:] = -lam[idx[:-1]] * away[:-1]
        ab[2, :-1] = -lam[idx[1:]] * toward[1:]
        rhs = np.zeros(k)
        rhs[0] = lam[idx[0]] * toward[0]
        return solve_banded((1, 1), ab, rhs)

    up = side(np.arange(z + 1, n))
    down = side(np.arange(z - 1, -1, -1))
    return p[z] * up[0] + (1.0 - p[z]) * down[0]


def exact_phi(chain, q):
    """``Phi(q) = m q + rate * (1 - E exp(-q length))`` per unit local time."""
    return chain.local_time_mass * q + chain.excursion_rate * (1.0 - excursion_laplace(chain, q))


def positive_part(chain):
    """Same chain with ``f`` zeroed on the negative side: every excursion area is >= 0."""
    return chain.with_functional(Functional("tabulated", {"points": chain.sites, "values": np.maximum(chain.sites, 0.0)}))
