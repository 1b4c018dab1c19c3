import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcsinr.aggregation import get_aggregate, tree_convergecast
from mcsinr.harness.verify import (check_cluster_coloring, check_clustering, check_csa, check_ruling_set,
                                   check_tree, csa_interval)
from mcsinr.sim import Simulation
from mcsinr.sinr import SinrParams
from mcsinr.structure import (ProtocolConstants, ReporterTree, Structure, build_structure, channel_count,
                              cluster_radius, oracle_cluster, oracle_color, phi_bound, ruling_set, t_factor)
from mcsinr.structure.csa import csa_estimate, csa_phases, use_small_path
from mcsinr.topology import blob_field, generate_topology


def test_t_factor_and_cluster_radius():
    p = SinrParams()
    t = (1 / 96) ** (1 / 3)
    assert t_factor(p) == pytest.approx(t)
    assert t_factor(p) == pytest.approx(0.2184, abs=1e-4)
    want = min(t / (2 * t + 2) * 250 / 3, 100 / 3 / 4)
    assert cluster_radius(p) == pytest.approx(want)
    assert cluster_radius(p) == pytest.approx(7.4685, abs=1e-3)


def test_phi_bound_and_channels():
    assert phi_bound(1, 10.0, 10.0) == math.ceil(4 * 15.0**2 / 100.0)
    assert channel_count(0, 3.0, 4.0, 8, trivial=True) == 0
    assert channel_count(5, 3.0, 4.0, 8) == 1
    assert channel_count(1000, 3.0, 4.0, 8) == 8
    assert channel_count(50, 2.0, 4.0, 8) == 7


def test_theory_preset_relations():
    c = ProtocolConstants.theory(kappa=0.25, kappa1=0.25)
    assert c.omega2 == pytest.approx(96 / 0.25)
    assert c.gamma2 == pytest.approx(8 * c.omega2 / 0.25)
    assert c.gamma1 == pytest.approx(4 * c.omega1 / (0.25 * 0.5))
    assert c.ruling_gamma(2) == pytest.approx(12 * 4 / 0.0625)
    with pytest.raises(ValueError):
        ProtocolConstants(lam=0.75)


def test_csa_interval_practical():
    assert csa_interval(ProtocolConstants.practical()) == (1.0, 16.0)


def test_csa_estimate_schedule():
    assert csa_phases(512) == 9
    assert [csa_estimate(512, j) for j in (1, 2, 10)] == [512, 256, 1]
    assert use_small_path(10, 1, 3.0, ProtocolConstants.practical())
    assert not use_small_path(10_000, 1, 2.0, ProtocolConstants.practical())


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 3]))
def test_ruling_set_properties(seed, F):
    topo = generate_topology("uniform_disk", 80, 90.0, seed)
    p = SinrParams()
    sim = Simulation(topo, p, F, seed=seed)
    r = p.r_t / 4
    out = ruling_set(sim, np.ones(80, bool), r, ProtocolConstants.practical())
    assert check_ruling_set(topo, out.members, r).ok
    assert out.phase2_rounds <= math.ceil(out.params.rounds)


def test_ruling_set_check_names_pair():
    topo = generate_topology("grid", 4, 3.0, 0)
    rep = check_ruling_set(topo, np.array([True, True, False, False]), 10.0)
    assert not rep.ok
    assert "members 0 and 1" in rep.violations[0]


@given(st.integers(1, 64))
def test_reporter_tree_heap(f):
    t = ReporterTree(100, tuple(range(f)))
    assert t.height == math.ceil(math.log2(f + 1))
    for k in range(1, f + 1):
        assert t.parent(k) == k // 2
        assert t.send_channel(k) == t.listen_channel(t.parent(k))
        assert t.level(k) >= 1 and t.level(0) == t.height + 1
        for c in t.children(k):
            assert t.parent(c) == k
    # siblings send in different slots
    for k in range(2, f + 1, 2):
        if k + 1 <= f:
            assert t.send_slot(k) != t.send_slot(k + 1)


def test_convergecast_seven_reporters():
    # values 1..7 at positions 1..7, plus 0 at the dominator
    t = ReporterTree(0, tuple(range(1, 8)))
    val, slots = tree_convergecast(t, get_aggregate("sum"), {k: k for k in range(1, 8)})
    assert val == 28 and slots == 6
    assert slots == t.paper_slots()


@given(st.integers(1, 40), st.integers(0, 1000))
def test_convergecast_folds_everything(f, seed):
    rng = np.random.default_rng(seed)
    vals = {k: int(rng.integers(0, 100)) for k in range(0, f + 1)}
    t = ReporterTree(0, tuple(range(1, f + 1)))
    val, slots = tree_convergecast(t, get_aggregate("sum"), vals)
    assert val == sum(vals.values())
    assert slots == 2 * t.height
    # the level schedule meets 2*floor(log2(f+1)) exactly when f+1 is a power of two
    assert (slots == t.paper_slots()) == ((f + 1) & f == 0)


def test_oracle_clustering_and_coloring():
    p = SinrParams()
    topo = generate_topology("uniform_disk", 150, 60.0, 2)
    cl = oracle_cluster(topo, cluster_radius(p))
    assert check_clustering(topo, cl.dom_of, cl.r_c, cl.mu).ok
    col = oracle_color(topo, cl, p.r_half_eps)
    assert check_cluster_coloring(topo, cl.dom_of, col.color, col.phi, p.r_half_eps).ok
    assert col.phi <= col.phi_bound


def test_clustering_check_catches_far_member():
    topo = generate_topology("grid", 4, 30.0, 0)
    rep = check_clustering(topo, np.array([0, 0, 2, 2]), 5.0)
    assert not rep.ok and "node 1" in rep.violations[0]


@pytest.mark.parametrize("mode", ["distributed", "oracle"])
def test_build_structure(mode):
    p = SinrParams()
    topo = generate_topology("uniform_disk", 120, 50.0, 4)
    sim = Simulation(topo, p, 4, seed=4)
    consts = ProtocolConstants.practical()
    s = build_structure(sim, consts, mode)
    assert sim.metrics.ok, sim.metrics.failures
    assert check_clustering(topo, s.dom_of, s.r_c).ok
    assert check_cluster_coloring(topo, s.dom_of, s.color, s.phi, p.r_half_eps).ok
    assert check_tree(s).ok
    assert check_csa(s, consts, 0.9).ok
    for c in s.clusters.values():
        assert sorted([c.dominator, *[u for u in c.reporters if u >= 0], *c.followers]) == sorted(c.members)


def test_structure_round_trip(tmp_path):
    p = SinrParams()
    topo = blob_field([20, 40], 200.0, 3.0, 1)
    sim = Simulation(topo, p, 4, seed=1)
    s = build_structure(sim, ProtocolConstants.practical(), "oracle")
    s.save(tmp_path / "s.txt", topo.ids)
    t = Structure.load(tmp_path / "s.txt", topo)
    assert np.array_equal(t.dom_of, s.dom_of)
    assert np.array_equal(t.color, s.color)
    assert np.array_equal(t.pos(), s.pos())
    assert t.phi == s.phi
    assert {d: c.f_v for d, c in t.clusters.items()} == {d: c.f_v for d, c in s.clusters.items()}
