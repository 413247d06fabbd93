import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persistence_lab.excursions import PathTrace, sample_path
from persistence_lab.functionals import (compute_trace, decomposition_consistency, decomposition_quantities,
                                         first_passage, monotone_on_excursions, sample_at_exponential_time,
                                         sup_identity_check, write_trace_csv)
from persistence_lab.model import build_model
from persistence_lab.rng import RngStream

SIGN = np.array([-1.0, 0.0, 1.0])


def hand_trace(times, sites, horizon, f=SIGN, m=1.0):
    """Path on the three sites {-1, 0, 1}; ``sites`` are positions."""
    idx = np.asarray(sites) + 1
    return compute_trace(PathTrace(np.asarray(times, float), idx, horizon, 1, positions=SIGN), f, m)


@pytest.fixture(scope="module")
def srw_id():
    return build_model("srw", half_width=400).chain()


def test_constant_positive_site():
    tr = hand_trace([0.0], [1], 2.0)
    assert tr.zeta[-1] == 2.0 and tr.xi[-1] == 2.0
    assert first_passage(tr, 1.0) == 1.0
    assert first_passage(tr, 0.3) == pytest.approx(0.3)


def test_sawtooth():
    tr = hand_trace([0.0, 1.0], [1, -1], 3.0)
    assert tr.zeta_at(0.5) == 0.5 and tr.zeta_at(2.0) == 0.0
    assert tr.zeta[-1] == -1.0 and tr.xi[-1] == 1.0 and tr.xi_at(3.0) == 1.0
    assert first_passage(tr, 0.75) == 0.75
    assert first_passage(tr, 1.5) is None
    with pytest.raises(ValueError):
        first_passage(tr, 0.0)


def test_censored_passage():
    tr = hand_trace([0.0, 0.5], [1, 0], 10.0)
    assert tr.xi[-1] == 0.5
    assert first_passage(tr, 1.0) is None


def test_zero_holding_local_time():
    tr = hand_trace([0.0, 1.0, 2.0], [0, 1, 0], 3.0)
    assert tr.total_local_time == 2.0
    assert tr.local_time_at(1.5) == 1.0 and tr.local_time_at(2.5) == 1.5
    # tau jumps by the excursion length at local time 1
    assert tr.tau(1.0) == 2.0
    assert tr.tau(1.0, left=True) == 1.0
    assert tr.tau(0.5) == 0.5
    assert tr.last_zero(2.5) == 2.0
    assert tr.last_zero(1.5) == 1.0
    xg, zg, inc, delta, xt = decomposition_quantities(tr, 2.5)
    assert inc == 0.0
    with pytest.raises(ValueError):
        tr.tau(2.0)


def test_local_time_mass_scaling():
    tr = hand_trace([0.0, 1.0, 2.0], [0, 1, 0], 3.0, m=4.0)
    assert tr.total_local_time == 0.5
    assert tr.tau(0.25) == 2.0


def test_decomposition_inside_zero_holding():
    tr = hand_trace([0.0, 1.0, 2.0, 3.0, 4.0], [0, 1, 0, -1, 0], 5.0)
    xg, zg, inc, delta, xt = decomposition_quantities(tr, 4.5)
    assert (xg, zg, inc) == (1.0, 0.0, 0.0)
    assert delta == -(xg - zg) and delta <= 0
    assert xt == xg


def test_decomposition_overshooting_excursion():
    tr = hand_trace([0.0, 1.0, 2.0, 3.0, 4.0, 5.0], [0, 1, 0, -1, 0, 1], 7.0)
    xg, zg, inc, delta, xt = decomposition_quantities(tr, 6.5)
    assert (xg, zg, inc) == (1.0, 0.0, 1.5)
    assert delta == 0.5
    assert xt == tr.zeta_at(6.5) == 1.5


def test_sup_identity_single_excursion():
    tr = hand_trace([0.0, 1.0, 2.0], [0, 1, 0], 3.0)
    for u in (0.0, 0.5, 0.99, 1.0, 1.5):
        assert sup_identity_check(tr, u)
    assert tr.xi_at(tr.tau(1.5)) == 1.0


def test_sup_identity_three_excursions():
    # areas +2, -1, +0.5
    tr = hand_trace([0.0, 1.0, 3.0, 4.0, 5.0, 6.0, 6.5], [0, 1, 0, -1, 0, 1, 0], 8.0)
    assert list(tr.Z_values) == [0.0, 2.0, 1.0, 1.5]
    u = 4.0
    assert sup_identity_check(tr, u)
    assert tr.xi_at(tr.tau(u)) == 2.0 == max(tr.Z_values)


def test_last_zero_before_first_visit():
    tr = compute_trace(PathTrace(np.array([0.0, 1.0]), np.array([2, 1]), 3.0, 1, positions=SIGN), SIGN, 1.0)
    with pytest.raises(ValueError):
        tr.last_zero(0.5)
    assert tr.last_zero(2.0) == 1.0


def test_trace_csv_columns():
    tr = hand_trace([0.0, 1.0], [1, -1], 3.0)
    buf = io.StringIO()
    write_trace_csv(tr, buf)
    rows = buf.getvalue().strip().split("\n")
    assert rows[0] == "t,X,zeta,xi,L"
    last = [float(v) for v in rows[-1].split(",")]
    assert last == [3.0, -1.0, -1.0, 1.0, 0.0]


def random_trace(chain, seed, horizon=400.0):
    path = sample_path(chain, horizon, None, RngStream(seed, 0))
    return compute_trace(path, chain.f_values, chain.local_time_mass)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**63), fracs=st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=8))
def test_split_identity_property(srw_id, seed, fracs):
    tr = random_trace(srw_id, seed)
    for fr in fracs:
        t = fr * tr.horizon
        xg, zg, inc, delta, xt = decomposition_quantities(tr, t)
        assert xt == pytest.approx(xg + max(delta, 0.0), rel=1e-12, abs=1e-12)
    assert monotone_on_excursions(tr)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**63), fracs=st.lists(st.floats(0.0, 0.999999), min_size=1, max_size=8))
def test_sup_identity_property(srw_id, seed, fracs):
    tr = random_trace(srw_id, seed)
    top = tr.zero_local_ends[-1]
    for fr in fracs:
        assert sup_identity_check(tr, fr * top)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**63))
def test_local_time_structure(srw_id, seed):
    tr = random_trace(srw_id, seed)
    off = tr.site != tr.zero_index
    # L flat off the zero set
    assert np.array_equal(tr.L[1:][off], tr.L[:-1][off])
    # tau o L is the identity on right ends of zero intervals
    for a, b in tr.zero_intervals:
        if b < tr.horizon:
            assert tr.tau(tr.local_time_at(b), left=True) == pytest.approx(b, rel=1e-13)


def test_decomposition_monte_carlo_small(srw_small):
    s = sample_at_exponential_time(srw_small, 1e-2, 20000, 5)
    assert np.all(s.xi >= s.zeta) and np.all(s.xi >= s.xi_g)
    assert np.allclose(s.xi, s.xi_g + np.maximum(s.delta, 0.0), rtol=1e-12, atol=1e-12)
    for z in (1.0, 5.0, 20.0):
        c = decomposition_consistency(s, z)
        assert c.agrees(4.0)


def test_exponential_time_is_worker_invariant(srw_small):
    a = sample_at_exponential_time(srw_small, 1e-2, 2000, 9, workers=1)
    b = sample_at_exponential_time(srw_small, 1e-2, 2000, 9, workers=3)
    assert np.array_equal(a.xi, b.xi) and np.array_equal(a.e, b.e)
