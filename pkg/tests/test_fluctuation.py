import itertools

import numpy as np
import pytest

from conftest import exact_phi, positive_part
from persistence_lab.fluctuation import (AreaWalk, FluctuationTables, kappa_estimate, ladder_heights, log_grid,
                                         phi_estimate, renewal_estimate, sample_area_walks, spitzer_and_positivity)


def brute_ladder(steps):
    s = 0.0
    best = 0.0
    ep, h = [0], [0.0]
    for n, x in enumerate(steps, 1):
        s += x
        if s > best:
            best = s
            ep.append(n)
            h.append(s)
    return ep, h


def test_ladder_examples():
    lad = ladder_heights(np.array([1.0, -2.0, 3.0]))
    assert list(lad.heights) == [0, 1, 2] and list(lad.epochs) == [0, 1, 3]
    lad = ladder_heights(np.array([-1.0, -0.5, -3.0]))
    assert list(lad.heights) == [0.0] and list(lad.epochs) == [0]
    lad = ladder_heights(np.array([2.0, -1.0, 1.0, 5.0]))
    assert list(lad.heights) == [0, 2, 7] and list(lad.epochs) == [0, 1, 4]


def test_ladder_brute_force_exhaustive_small():
    # every sign pattern of length <= 8 over a few magnitudes, ties included
    for n in range(1, 9):
        for steps in itertools.product((-1.0, 1.0, 2.0), repeat=n):
            lad = ladder_heights(np.array(steps))
            ep, h = brute_ladder(steps)
            assert list(lad.epochs) == ep and list(lad.heights) == h


def test_ladder_carries_tau():
    w = AreaWalk([1.0, -1.0, 2.0], dtau=[0.5, 1.0, 2.0])
    lad = ladder_heights(w)
    assert list(lad.tau_at_epochs) == [0.0, 0.5, 3.5]


def test_renewal_unit_steps():
    rng = np.random.default_rng(0)
    walks = [rng.choice([-1.0, 1.0], size=4000) for _ in range(300)]
    z = np.array([0.0, 0.5, 1.0, 3.7, 10.0])
    tab = renewal_estimate(walks, z, K=64)
    assert tab.walks_used > 200
    assert np.array_equal(tab.renewal, 1 + np.floor(z))


def test_renewal_properties_on_area_walk(srw_small):
    walks = sample_area_walks(srw_small, 400, 3, ladder_target=64, z_stop=200.0)
    z = np.linspace(0, 200, 41)
    tab = renewal_estimate(walks, z, K=64)
    assert tab.renewal[0] == 1.0
    assert np.all(np.diff(tab.renewal) >= 0)
    # subadditivity on the grid, with CI slack
    for i in range(z.size):
        for j in range(z.size - i):
            assert tab.renewal[i + j] <= tab.renewal[i] + tab.renewal[j] + tab.ci[i + j] + 1e-12
    assert tab.walks_used + tab.excluded == 400


def test_phi_deterministic_and_exponential():
    q = np.logspace(-3, 1, 9)
    tab = phi_estimate(np.full(5000, 2.5), q)
    assert np.allclose(tab.phi, 2.5 * q, rtol=1e-12)
    x = np.random.default_rng(1).exponential(size=200_000)
    tab = phi_estimate(x, q)
    assert np.all(np.abs(tab.phi - np.log1p(q)) < 4 * tab.ci / 1.96)
    assert tab.shape_ok()
    with pytest.raises(ValueError):
        phi_estimate(np.ones(10), q)


def test_kappa_frullani_ratio(srw_small):
    """All excursions nonnegative: kappa_+(q) / kappa_+(q') = Phi(q) / Phi(q')."""
    ch = positive_part(srw_small)
    q = np.logspace(-2, 0, 5)
    kt = kappa_estimate(ch, q, log_grid(1e-4, 1e3, 32), 1500, 4, tol=1e-2, exclude_boundary=False)
    assert kt.replicas == 1500
    assert not kt.flagged.any()
    phi = np.array([exact_phi(ch, qq) for qq in q])
    got = kt.log_plus - kt.log_plus[0]
    want = np.log(phi / phi[0])
    slack = 4 * np.hypot(kt.ci_plus, kt.ci_plus[0]) / 1.96 + kt.head_bound + kt.tail_bound
    assert np.all(np.abs(got - want) <= slack)
    # nothing lands on the negative side
    assert np.all(np.abs(kt.log_minus) < 1e-12)


def test_kappa_symmetric_chain(srw_small):
    ch = srw_small.with_f_values(np.sign(srw_small.sites))
    q = np.logspace(-2, 0, 5)
    kt = kappa_estimate(ch, q, log_grid(1e-4, 1e3, 32), 1500, 6, tol=1e-2, exclude_boundary=False)
    # symmetric apart from the tie {Z_t = 0} = {no excursion by t}, which counts as
    # positive; on it tau_t = m t, so Frullani gives log((r + q m) / (r + 1)) exactly
    r, m = ch.excursion_rate, ch.local_time_mass
    tie = np.log((r + q * m) / (r + 1))
    d = kt.log_plus - kt.log_minus - tie
    assert np.all(np.abs(d) <= 4 * np.hypot(kt.ci_plus, kt.ci_minus) / 1.96)


def test_positivity_examples():
    p = spitzer_and_positivity([np.ones(20)] * 5)
    assert np.all(p.fraction == 1.0) and p.terminal == 1.0
    x = np.random.default_rng(2).standard_normal((100_000, 10))
    p = spitzer_and_positivity(list(x))
    assert abs(p.terminal - 0.5) < 3 * np.sqrt(0.25 / 100_000)
    one = spitzer_and_positivity(np.array([1.0, -3.0, 1.0, 2.0]))
    assert list(one.fraction) == [1.0, 0.0, 0.0, 1.0]
    assert list(one.cesaro) == [1.0, 0.5, 1 / 3, 0.5]


def test_area_walks_worker_invariant(srw_small):
    a = sample_area_walks(srw_small, 40, 12, max_steps=30, workers=1)
    b = sample_area_walks(srw_small, 40, 12, max_steps=30, workers=3)
    assert all(np.array_equal(x.steps, y.steps) for x, y in zip(a, b))
    assert all(len(w) == 30 for w in a)


def test_area_walk_stops_at_ladder_target(srw_small):
    walks = sample_area_walks(srw_small, 30, 2, ladder_target=5)
    for w in walks:
        lad = ladder_heights(w)
        assert lad.epochs.size == 6 and lad.epochs[-1] == len(w)


def test_tables_write(tmp_path):
    pos = spitzer_and_positivity([np.ones(5)] * 3)
    files = FluctuationTables(positivity=pos).write(tmp_path)
    assert [f.name for f in files] == ["positivity.csv"]
    assert (tmp_path / "positivity.csv").read_text().startswith("n,positivity")
