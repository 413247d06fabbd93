import io
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from conftest import exact_phi
from persistence_lab.excursions import (dump_path, levy_block_table, load_path, sample_excursion, sample_excursions,
                                        sample_levy_blocks, sample_levy_increment, sample_path)
from persistence_lab.fluctuation import phi_estimate
from persistence_lab.model import ChainSpec, build_model
from persistence_lab.rng import RngStream


@pytest.fixture(scope="module")
def two_site():
    return ChainSpec(np.array([-1.0, 0.0, 1.0]), [1.0, 0.5, 0.0], [1.0, 1.0, 1.0], [-2.0, 0.0, 3.0])


def test_two_site_excursion(two_site):
    b = sample_excursions(two_site, RngStream(1), 20000)
    assert stats.kstest(b.length, "expon").pvalue > 1e-3
    assert np.all(b.amplitude == 1.0)
    pos = b.area > 0
    assert np.allclose(b.area[pos], 3.0 * b.length[pos])
    assert np.allclose(b.area[~pos], -2.0 * b.length[~pos])
    assert abs(pos.mean() - 0.5) < 4 * np.sqrt(0.25 / pos.size)
    assert b.steps == 20000


def test_single_excursion_matches_batch(srw_sign):
    rng = RngStream(7, 3)
    one = sample_excursion(srw_sign, rng, keep_path=True)
    b = sample_excursions(srw_sign, rng, 5)
    assert one.length == b.length[0] and one.area == b.area[0] and one.amplitude == b.amplitude[0]
    sites, holds = one.path
    assert sites[-1] == srw_sign.zero_index and holds[-1] == 0.0
    assert one.length == pytest.approx(holds.sum(), rel=1e-14)


def test_constant_sign_on_many_excursions(srw_sign):
    for r in range(300):
        e = sample_excursion(srw_sign, RngStream(5, r), keep_path=True)
        inner = e.path[0][:-1]
        assert np.all(np.sign(inner - srw_sign.zero_index) == e.sign)


def test_srw_sign_symmetry(srw_sign):
    b = sample_excursions(srw_sign, RngStream(2024), 100_000)
    sg = np.sign(b.area)
    assert abs(sg.mean()) < 3 * np.sqrt(1.0 / sg.size)


def test_srw_amplitude_gamblers_ruin(srw_sign):
    """P(M >= k) = 1/k: after the first step the walk reaches k before 0 w.p. 1/k."""
    b = sample_excursions(srw_sign, RngStream(99), 100_000)
    k = np.arange(2, 65)
    p = np.array([(b.amplitude >= kk).mean() for kk in k])
    se = np.sqrt((1 / k) * (1 - 1 / k) / b.length.size)
    assert np.all(np.abs(p - 1 / k) < 4.5 * se)
    slope = np.polyfit(np.log(k), np.log(p), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.05)


def test_degenerate_chain_is_pure_drift():
    # stub chain that never leaves 0; duck-typed so a zero rate is allowed
    stub = SimpleNamespace(up_prob=np.array([1.0, 0.5, 0.0]), hold_rate=np.array([1.0, 0.0, 1.0]),
                           f_values=np.array([-1.0, 0.0, 1.0]), sites=np.array([-1.0, 0.0, 1.0]),
                           zero_index=1, local_time_mass=2.5)
    dtau, dz, n = sample_levy_increment(stub, 3.0, RngStream(0))
    assert (dtau, dz, n) == (7.5, 0.0, 0)


def test_levy_block_poisson_count_and_drift(srw_small):
    b = sample_levy_blocks(srw_small, 2.0, 20000, RngStream(4))
    lam = srw_small.excursion_rate * 2.0
    assert abs(b.count.mean() - lam) < 4 * np.sqrt(lam / b.count.size)
    assert np.all(b.dtau >= srw_small.local_time_mass * 2.0)
    # a block touches the boundary iff one of its Poisson(lam) excursions reaches
    # site 30 before 0, which has probability 1/30 each
    p_touch = 1 - np.exp(-lam / 30)
    assert abs(b.truncated_fraction - p_touch) < 4 * np.sqrt(p_touch / b.count.size)


def test_phi_against_exact_laplace(srw_small):
    """Phi from simulated blocks vs m q + rate E[1 - exp(-q length)] from linear solves."""
    q = np.logspace(-3, 0, 7)
    blk = levy_block_table(srw_small, 1.0, 40000, 17)
    tab = phi_estimate(blk.dtau, q)
    ref = np.array([exact_phi(srw_small, qq) for qq in q])
    assert np.all(np.abs(tab.phi - ref) < 4 * tab.ci / 1.96)
    assert tab.shape_ok()


def test_block_concatenation_in_distribution(srw_small):
    k, n = 4, 4000
    unit = sample_levy_blocks(srw_small, 1.0, k * n, RngStream(21))
    joined_tau = unit.dtau.reshape(n, k).sum(axis=1)
    joined_z = unit.dz.reshape(n, k).sum(axis=1)
    big = sample_levy_blocks(srw_small, float(k), n, RngStream(22))
    assert stats.ks_2samp(joined_tau, big.dtau).pvalue > 1e-3
    assert stats.ks_2samp(joined_z, big.dz).pvalue > 1e-3


def test_block_table_is_sharding_invariant(srw_small):
    a = levy_block_table(srw_small, 1.0, 500, 3, workers=1)
    b = levy_block_table(srw_small, 1.0, 500, 3, workers=4)
    assert np.array_equal(a.dtau, b.dtau) and np.array_equal(a.dz, b.dz)


def test_poisson_jump_count():
    ch = build_model("srw", half_width=200).chain()
    counts = np.array([sample_path(ch, 10.0, None, RngStream(8, r)).jump_times.size for r in range(10000)])
    assert abs(counts.mean() - 10.0) < 3 * np.sqrt(10.0 / counts.size)


def test_srw_occupation_of_zero_decays():
    ch = build_model("srw", half_width=1000).chain()
    fr = []
    for h in (1e2, 1e3, 1e4):
        occ = []
        for r in range(200):
            tr = sample_path(ch, h, None, RngStream(9, r))
            zi = tr.zero_intervals
            occ.append(np.sum(zi[:, 1] - zi[:, 0]) / h)
        fr.append(np.mean(occ))
    assert fr[0] > fr[1] > fr[2]
    # null recurrence: occupation ~ t^(-1/2)
    assert fr[2] < 0.2 * fr[0]


def test_path_dump_round_trip(srw_small):
    tr = sample_path(srw_small, 50.0, 33, RngStream(1, 1))
    buf = io.BytesIO()
    dump_path(tr, buf)
    assert len(buf.getvalue()) == 12 * tr.times.size
    buf.seek(0)
    back = load_path(buf, 50.0, srw_small.zero_index)
    assert np.array_equal(back.times, tr.times) and np.array_equal(back.site_indices, tr.site_indices)
    assert tr.site_indices[0] == 33


def test_path_is_reproducible(srw_small):
    a = sample_path(srw_small, 100.0, None, RngStream(3, 9))
    b = sample_path(srw_small, 100.0, None, RngStream(3, 9))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.site_indices, b.site_indices)
    assert np.all(np.abs(np.diff(a.site_indices)) == 1)
    with pytest.raises(ValueError):
        sample_path(srw_small, -1.0, None, RngStream(3))
