import csv
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from anjam.channels import RngStream
from anjam.energy_chain import fd_stationary, fd_transition_matrix, hd_transition_matrix, infinite_capacity_ready_prob
from anjam.mc_sim import (
    BURN_IN_FRACTION,
    TrialStats,
    estimate,
    sample_transitions,
    simulate,
    simulate_fd,
    simulate_hd,
    simulate_unbounded_storage,
)
from anjam.secrecy import Variant, report
from conftest import make_params, make_storage


def _same(a: TrialStats, b: TrialStats):
    return (
        a.blocks == b.blocks
        and a.outage_count == b.outage_count
        and a.nzsc_count == b.nzsc_count
        and a.ready_count == b.ready_count
        and np.array_equal(a.transition_counts, b.transition_counts)
    )


def test_seeded_runs_repeat(params):
    st = make_storage(params, levels=20)
    a = simulate_fd(params, st, 30_000, RngStream(4))
    b = simulate_fd(params, st, 30_000, RngStream(4))
    c = simulate_fd(params, st, 30_000, RngStream(5))
    assert _same(a, b)
    assert not _same(a, c)


def test_bookkeeping_invariants(params):
    st = make_storage(params, levels=20)
    for duplex in ("fd", "hd"):
        res = simulate(params, st, 20_000, RngStream(1), duplex=duplex, n_batches=3)
        res.stats.check()
        sizes = (6667, 6667, 6666)
        assert res.stats.blocks == sum(n - math.ceil(BURN_IN_FRACTION * n) for n in sizes)
        assert res.stats.blocks == sum(b.stats.blocks for b in res.batches)
        assert res.stats.nzsc_count <= res.stats.oeh_count
        assert res.stats.oeh_count <= res.stats.ready_count


def test_burn_in_size(params):
    st = make_storage(params, levels=20)
    assert simulate_fd(params, st, 10_000, RngStream(0)).blocks == 9_900
    assert simulate_fd(params, st, 1, RngStream(0)).blocks == 1


def test_parallel_batches_match_serial(params):
    st = make_storage(params, levels=20)
    serial = simulate(params, st, 40_000, RngStream(8, 2), n_batches=4)
    with ThreadPoolExecutor(3) as ex:
        par = simulate(params, st, 40_000, RngStream(8, 2), n_batches=4, executor=ex)
    assert _same(serial.stats, par.stats)
    assert [b.batch for b in par.batches] == [0, 1, 2, 3]


@pytest.mark.parametrize("duplex,builder", [("fd", fd_transition_matrix), ("hd", hd_transition_matrix)])
def test_impossible_transitions_never_happen(duplex, builder):
    p = make_params(ps_dbm=18.0)
    st = make_storage(p, levels=12)
    m = builder(p, st).entries
    stats = simulate(p, st, 60_000, RngStream(3), duplex=duplex).stats
    assert np.all(stats.transition_counts[m == 0.0] == 0)


@pytest.mark.parametrize("variant,duplex", [(Variant.FD_FINITE, "fd"), (Variant.HD_FINITE, "hd")])
@pytest.mark.parametrize("kw", [dict(), dict(ps_dbm=15.0), dict(ps_dbm=25.0, pj_dbm=10.0, rho=0.9)])
def test_frequencies_match_closed_forms(variant, duplex, kw):
    p = make_params(**kw)
    st = make_storage(p)
    rep = report(p, variant, st)
    emp = estimate(simulate(p, st, 200_000, RngStream(17), duplex=duplex).stats)
    # 5 s.e. leaves room for the positive autocorrelation of the level chain
    for mc, closed in ((emp.p_so, rep.p_so), (emp.p_nzsc, rep.p_nzsc), (emp.ready_freq, rep.ready_prob)):
        se = math.sqrt(max(closed * (1 - closed), 1e-12) / emp.blocks)
        assert abs(mc - closed) <= 5 * se + 1e-9


def test_occupancy_matches_stationary_law():
    p = make_params(ps_dbm=15.0)
    st = make_storage(p, levels=30)
    xi = fd_stationary(p, st).xi
    emp = estimate(simulate(p, st, 300_000, RngStream(21)).stats)
    assert 0.5 * np.abs(emp.occupancy - xi).sum() < 0.02


def test_unbounded_storage_matches_energy_balance():
    p = make_params(ps_dbm=20.0, pj_dbm=10.0)
    q_b = infinite_capacity_ready_prob(p)
    assert q_b < 1.0
    freq = simulate_unbounded_storage(p, 1_000_000, RngStream(2), capacity=1e4 * p.e_th)
    assert freq == pytest.approx(q_b, rel=0.02)


def test_sampled_leakage_option():
    p = make_params(rho=0.5)
    st = make_storage(p, levels=20)
    stats = simulate_hd(p, st, 10_000, RngStream(6), sampled_leakage=True)
    stats.check()
    assert 0.0 <= estimate(stats).p_so <= 1.0


def test_batches_csv(tmp_path, params):
    st = make_storage(params, levels=10)
    res = simulate(params, st, 9_000, RngStream(12, 1), n_batches=3)
    path = tmp_path / "b.csv"
    res.batches_to_csv(path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 3
    assert sum(int(r["blocks"]) for r in rows) == res.stats.blocks
    assert {r["seed"] for r in rows} == {"12"}


def test_errors(params):
    st = make_storage(params, levels=10)
    with pytest.raises(ValueError):
        simulate(params, st, 0, RngStream(0))
    with pytest.raises(ValueError):
        simulate(params, st, 10, RngStream(0), duplex="xd")
    with pytest.raises(ValueError):
        estimate(TrialStats(levels=3))
    with pytest.raises(ValueError):
        TrialStats(levels=3) + TrialStats(levels=4)


@pytest.mark.parametrize("hd", [False, True])
def test_vector_step_matches_walk(hd):
    from anjam.mc_sim import _step, _walk

    rng = np.random.default_rng(5)
    L, tau, n = 12, 3, 500
    ch_ok = rng.random(n) < 0.6
    k_d = rng.integers(0, 4, n)
    k_o = rng.integers(0, L + tau + 1, n)
    starts = rng.integers(0, L + 1, n)
    walked = [_walk(int(s), tau, L, ch_ok[b:b + 1], k_d[b:b + 1], k_o[b:b + 1], hd)[1] for b, s in enumerate(starts)]
    assert np.array_equal(_step(starts, tau, L, ch_ok, k_d, k_o, hd), walked)


@pytest.mark.parametrize("duplex,builder", [("fd", fd_transition_matrix), ("hd", hd_transition_matrix)])
def test_kernel_sampler_covers_every_row(duplex, builder):
    p = make_params(ps_dbm=18.0)
    st = make_storage(p, levels=8)
    m = builder(p, st).entries
    counts = sample_transitions(p, st, 90_000, RngStream(30), duplex)
    visits = counts.sum(axis=1)
    assert visits.min() == visits.max() == 10_000
    assert np.all(counts[m == 0.0] == 0)
    freq = counts / visits[:, None]
    assert np.all(np.abs(freq - m) <= 5 * np.sqrt(m * (1 - m) / 10_000) + 1e-12)
