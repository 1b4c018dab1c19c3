import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcsinr.harness.verify import brute_force_receptions
from mcsinr.sinr import (Medium, ParamsError, Reception, SinrParams, SlotFrame, clear_mask, clear_reception,
                         clear_threshold, resolve_slot)
from mcsinr.topology import Topology, generate_topology


def test_default_radii():
    p = SinrParams()
    assert p.r_t == pytest.approx(100.0)
    assert p.r_eps == pytest.approx(200.0 / 3)
    assert p.r_half_eps == pytest.approx(250.0 / 3)
    assert p.t_s == pytest.approx(1e-6 / 8)


@pytest.mark.parametrize("kw", [dict(alpha=2.0), dict(beta=0.5), dict(N=0.0), dict(P=-1.0),
                                dict(epsilon=1.0), dict(epsilon=0.0), dict(alpha_range=(3.5, 4.0))])
def test_params_rejected(kw):
    with pytest.raises(ParamsError):
        SinrParams(**kw)


def test_r_frac_domain():
    with pytest.raises(ParamsError):
        SinrParams().r_frac(1.5)


def test_scaled_threshold_meets_fixed_at_half_range():
    p = SinrParams()
    t = clear_threshold(p.P, p.alpha, p.beta, p.N, p.r_t / 2)
    assert t == pytest.approx(p.t_s)
    assert clear_threshold(p.P, p.alpha, p.beta, p.N, 10.0, scaled=False) == p.t_s


def test_lone_sender_within_range_is_decoded():
    p = SinrParams()
    t = Topology(np.array([5, 9]), np.array([[0.0, 0.0], [99.0, 0.0]]))
    rec, sensed = resolve_slot(t, p, SlotFrame.from_actions({0: ("tx", 1, "hi"), 1: ("rx", 1)}))
    assert len(rec) == 1
    r = rec[0]
    assert (r.receiver, r.sender, r.payload) == (9, 5, "hi")
    assert r.sinr == pytest.approx(p.P / 99.0**3 / p.N)
    assert sensed[9] == pytest.approx(p.N + p.P / 99.0**3)


def test_out_of_range_and_other_channel():
    p = SinrParams()
    t = Topology(np.arange(3), np.array([[0.0, 0.0], [101.0, 0.0], [10.0, 0.0]]))
    rec, sensed = resolve_slot(t, p, SlotFrame.from_actions({0: ("tx", 1), 1: ("rx", 1), 2: ("rx", 2)}))
    assert rec == []
    assert sensed[2] == p.N


def test_frame_validation():
    f = SlotFrame(np.array([0]), np.array([1]), np.array([0]), np.array([1]), [None])
    with pytest.raises(ValueError, match="both"):
        f.validate(2)
    with pytest.raises(ValueError):
        SlotFrame.from_actions({0: ("shout", 1)})


def test_clear_reception_needs_quiet_surroundings():
    p = SinrParams()
    r = 10.0
    sig = p.P / r**p.alpha
    quiet = Reception(1, 0, None, 1.0, sig, p.N + sig)
    assert clear_reception(quiet, p, r)
    noisy = Reception(1, 0, None, 1.0, sig, p.N + sig + p.t_s * 2)
    assert not clear_reception(noisy, p, r)
    far = Reception(1, 0, None, 1.0, p.P / 30.0**p.alpha, p.N + p.P / 30.0**p.alpha)
    assert not clear_reception(far, p, r)


def test_clear_mask_certifies_no_close_interferer():
    # receiver at 0, sender at r, interferer just inside 4r: never clear
    p = SinrParams()
    r = 8.0
    t = Topology(np.arange(3), np.array([[0.0, 0.0], [r, 0.0], [-3.9 * r, 0.0]]))
    res = Medium(t, p).resolve(SlotFrame(np.array([1, 2]), np.array([1, 1]), np.array([0]), np.array([1])))
    assert res.sender[0] == 0
    assert not clear_mask(res, p.knowledge(), r)[0]


def test_uncertain_parameters_are_conservative():
    p = SinrParams(alpha_range=(2.8, 3.2), N_range=(0.5e-6, 2e-6))
    k = p.knowledge()
    assert k.r_t < p.r_t
    assert k.clear_threshold(10.0) <= clear_threshold(p.P, p.alpha, p.beta, p.N, 10.0)


frames = st.integers(2, 30).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(0, 10_000),
    st.lists(st.sampled_from(["tx", "rx", "idle"]), min_size=n, max_size=n),
    st.lists(st.integers(1, 3), min_size=n, max_size=n)))


@settings(max_examples=200, deadline=None)
@given(frames)
def test_engine_matches_brute_force(case):
    n, seed, roles, chans = case
    p = SinrParams()
    t = generate_topology("uniform_disk", n, 60.0, seed)
    acts = {v: (r, c) for v, (r, c) in enumerate(zip(roles, chans))}
    f = SlotFrame.from_actions(acts)
    res = Medium(t, p).resolve(f)
    want = brute_force_receptions(t.xy, p, f)
    assert res.sender_node().tolist() == want


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_at_most_one_decode_when_beta_at_least_one(seed):
    p = SinrParams(beta=1.0)
    t = generate_topology("uniform_disk", 20, 30.0, seed)
    rng = np.random.default_rng(seed)
    tx = np.flatnonzero(rng.random(20) < 0.3)
    rx = np.setdiff1d(np.arange(20), tx)
    res = Medium(t, p).resolve(SlotFrame(tx, np.ones(len(tx), int), rx, np.ones(len(rx), int)))
    for k in np.flatnonzero(res.sender >= 0):
        g = [p.P / math.dist(t.xy[rx[k]], t.xy[u]) ** p.alpha for u in tx]
        others = sum(g) - max(g)
        assert max(g) / (p.N + others) >= p.beta


def test_exponential_chain_five_nodes():
    p = SinrParams(alpha=3.0, beta=2 ** (1 / 3))
    t = generate_topology("exponential_chain", 5)
    f = SlotFrame.from_actions({v: (("tx" if v in (1, 3) else "rx"), 1) for v in range(5)})
    res = Medium(t, p).resolve(f)
    assert res.sender_node().tolist() == brute_force_receptions(t.xy, p, f)
    # only one link aimed at the nearer neighbour succeeds: 1 -> 0 does, 3 -> 2 is drowned by node 1
    got = dict(zip(f.rx.tolist(), res.sender_node().tolist()))
    assert [u for u in (1, 3) if got.get(u - 1) == u] == [1]
