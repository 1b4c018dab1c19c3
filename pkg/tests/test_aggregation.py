import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcsinr.aggregation import (AGGREGATES, ContentionLedger, aggregate, follower_schedule, get_aggregate,
                                read_inputs)
from mcsinr.harness.verify import check_contention, check_powers
from mcsinr.sinr import SinrParams
from mcsinr.structure import ProtocolConstants
from mcsinr.topology import Topology, blob_field, generate_topology

ints = st.integers(-1000, 1000)


@pytest.mark.parametrize("name", ["sum", "max", "min", "count", "average"])
@given(a=ints, b=ints, c=ints)
def test_aggregate_algebra(name, a, b, c):
    f = get_aggregate(name)
    x, y, z = f.lift(a), f.lift(b), f.lift(c)
    assert f.combine(f.combine(x, y), z) == f.combine(x, f.combine(y, z))
    assert f.combine(x, y) == f.combine(y, x)
    assert f.combine(f.identity, x) == x


@given(st.lists(ints, min_size=1, max_size=30))
def test_fold_matches_builtins(vals):
    assert AGGREGATES["sum"].fold(vals) == sum(vals)
    assert AGGREGATES["max"].fold(vals) == max(vals)
    assert AGGREGATES["min"].fold(vals) == min(vals)
    assert AGGREGATES["count"].fold(vals) == len(vals)
    avg = AGGREGATES["average"]
    assert avg.final(avg.fold(vals)) == pytest.approx(sum(vals) / len(vals))


def test_unknown_aggregate():
    with pytest.raises(ValueError, match="unknown aggregate"):
        get_aggregate("median")


def test_follower_schedule_theory_preset():
    c = ProtocolConstants.theory(kappa=0.25, kappa1=0.25)
    ln_n = math.log(100)
    gamma, omega = follower_schedule(c, ln_n)
    assert omega == math.ceil(384 * ln_n)
    assert gamma == math.ceil(8 * 384 / 0.25 * ln_n)


def test_ledger():
    led = ContentionLedger(0.5)
    led.record(np.array([1, 2]), np.array([0.5, 1.0]), np.array([1, 2]))
    assert led.held and led.worst_ratio == pytest.approx(1.0)
    led.record(np.array([1, 2]), np.array([0.6, 0.1]), np.array([1, 2]))
    assert not led.held and led.violating_clusters == {1}
    assert "1" in check_contention(led).violations[0]


def test_single_node():
    t = Topology(np.array([7]), np.array([[0.0, 0.0]]))
    res = aggregate(t, SinrParams(), 1, "sum", [5], seed=0)
    assert res.values == [5] and res.metrics.ok


def test_disconnected_input_fails():
    t = Topology(np.array([0, 1]), np.array([[0.0, 0.0], [500.0, 0.0]]))
    res = aggregate(t, SinrParams(), 1, "sum", [1, 1])
    assert res.metrics.failures == {"disconnected": 1}


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 24), st.sampled_from([1, 2, 4]))
def test_powers_of_two_exact(seed, n, F):
    t = generate_topology("uniform_disk", n, 40.0, seed)
    res = aggregate(t, SinrParams(), F, "sum", [1 << i for i in range(n)], seed=seed)
    if res.metrics.ok:
        assert check_powers(res.values, n).ok
        assert res.ledger.held


@pytest.mark.parametrize("name", ["sum", "max", "min", "count", "average"])
def test_every_function_on_blobs(name):
    t = blob_field([12, 25, 40], 60.0, 3.0, 3)
    rng = np.random.default_rng(0)
    vals = rng.integers(-50, 50, size=t.n).tolist()
    res = aggregate(t, SinrParams(), 4, name, vals, seed=3)
    assert res.metrics.ok, res.metrics.failures
    f = get_aggregate(name)
    want = f.final(f.fold(vals))
    assert all(v == pytest.approx(want) for v in res.values)


def test_stage_rounds_are_cumulative():
    t = generate_topology("uniform_disk", 60, 60.0, 5)
    res = aggregate(t, SinrParams(), 2, "sum", [1] * 60, seed=5)
    assert res.correct
    s = res.stages
    assert 0 < s["follower"] <= s["tree"] <= s["backbone"]
    assert res.metrics.stage_rounds["aggregation"] == s["backbone"]


def test_read_inputs(tmp_path):
    t = Topology(np.array([4, 9]), np.array([[0.0, 0.0], [1.0, 0.0]]))
    f = tmp_path / "in.txt"
    f.write_text("# values\n9 2.5\n4 3\n")
    assert read_inputs(f, t) == [3, 2.5]
    f.write_text("5 1\n")
    with pytest.raises(ValueError, match=":1:"):
        read_inputs(f, t)
