"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line; the lines are repeated
in the pytest terminal summary.  The full module takes about 50 minutes
on one core.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import linregress

from mcsinr.aggregation import TreeConvergecast, aggregate, get_aggregate
from mcsinr.coloring import color_network, improper_edges
from mcsinr.harness.calibrate import calibrate
from mcsinr.harness.verify import (brute_force_receptions, check_cluster_coloring, check_powers, check_ruling_set,
                                   check_tdma_delivery, csa_interval)
from mcsinr.sim import Simulation
from mcsinr.sinr import Medium, SinrParams, SlotFrame, resolve_slot
from mcsinr.structure import ProtocolConstants, ReporterTree, build_structure, ruling_set
from mcsinr.topology import blob_field, cluster_line, generate_topology

pytestmark = pytest.mark.acceptance

P = SinrParams()
PRACTICAL = ProtocolConstants.practical()


# 1 ------------------------------------------------------------------------------


def test_criterion_1_sinr_oracle(record):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    mismatches = frames = 0
    for k in range(1000):
        n = int(rng.integers(2, 65))
        topo = generate_topology("uniform_disk", n, float(rng.uniform(5, 150)), int(rng.integers(1 << 30)))
        role = rng.choice(3, size=n, p=[0.3, 0.5, 0.2])
        ch = rng.integers(1, 5, size=n)
        acts = {v: ("tx", int(ch[v]), v) if role[v] == 0 else ("rx", int(ch[v])) if role[v] == 1 else ("idle",)
                for v in range(n)}
        frame = SlotFrame.from_actions(acts)
        receptions, _ = resolve_slot(topo, P, frame)
        got = {r.receiver: r.sender for r in receptions}
        want = brute_force_receptions(topo.xy, P, frame)
        for v, w in zip(frame.rx, want):
            mismatches += got.get(int(topo.ids[v]), -1) != (int(topo.ids[w]) if w >= 0 else -1)
        frames += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10
    record(1, ok, f"{frames} frames, {mismatches} discrepancies, {elapsed:.1f}s (limit 10s)")
    assert ok


# 2 ------------------------------------------------------------------------------


@pytest.mark.xfail(strict=True, reason="with free choice of listeners two far-apart transmitters are both decoded, "
                                       "e.g. senders at 2 and 8 reach listeners at 4 and 16; only links aimed at "
                                       "the nearer chain neighbour are exclusive")
def test_criterion_2_exponential_chain(record):
    topo = generate_topology("exponential_chain", 12)
    rng = np.random.default_rng(2)
    violations = slots = link_violations = 0
    for alpha in (2.5, 3.0, 4.0):
        # noise low enough that the whole chain is within transmission range
        params = SinrParams(alpha=alpha, beta=2 ** (1 / alpha), N=1e-20)
        med = Medium(topo, params)
        for _ in range(10_000):
            mask = rng.random(12) < rng.uniform(0.05, 0.95)
            if not mask.any():
                mask[rng.integers(12)] = True
            tx, rx = np.flatnonzero(mask), np.flatnonzero(~mask)
            res = med.resolve(SlotFrame(tx, np.ones(len(tx), int), rx, np.ones(len(rx), int)))
            violations += int(res.got.sum()) > 1
            # links i -> i-1, each sender aimed at its nearer neighbour
            got = dict(zip(rx.tolist(), res.sender_node().tolist()))
            link_violations += sum(got.get(int(u) - 1) == int(u) for u in tx) > 1
            slots += 1
    record(2, violations == 0, f"{slots} slots over alpha in (2.5, 3, 4), {violations} with two receptions; "
                               f"{link_violations} with two successful nearest-neighbour links")
    assert link_violations == 0
    assert violations == 0


# 3 ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def calibration():
    return calibrate(P)


def test_criterion_3_ruling_set(record, calibration):
    consts = PRACTICAL.with_(kappa=calibration.kappa)
    r = P.r_t / 4
    runs = good = over = 0
    for n in (100, 200):
        for seed in range(100):
            topo = generate_topology("uniform_disk", n, 150.0, seed)
            sim = Simulation(topo, P, 1, seed=seed)
            out = ruling_set(sim, np.ones(n, bool), r, consts)
            good += check_ruling_set(topo, out.members, r).ok
            over += out.phase2_rounds > math.ceil(consts.ruling_gamma(out.mu) * sim.ln_n)
            runs += 1
    frac = good / runs
    ok = frac >= 0.99 and over == 0
    record(3, ok, f"kappa={calibration.kappa:.4g}: valid ruling set in {frac:.1%} of {runs} runs (need 99%), "
                  f"{over} runs over the gamma ln n schedule")
    assert ok


# 4 and 6 ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def disk_structures():
    out = []
    for seed in range(100):
        topo = generate_topology("uniform_disk", 300, 120.0, seed)
        sim = Simulation(topo, P, 4, seed=seed)
        st = build_structure(sim, PRACTICAL, "distributed")
        out.append((topo, sim.metrics, st))
    return out


def test_criterion_4_cluster_coloring(record, disk_structures):
    separated = within_phi = 0
    attempted = delivered = 0
    for seed, (topo, m, st) in enumerate(disk_structures):
        rep = check_cluster_coloring(topo, st.dom_of, st.color, st.phi, P.r_half_eps)
        separated += rep.ok
        within_phi += st.phi <= st.phi_bound
        tdma = check_tdma_delivery(topo, P, st.dom_of, st.color, trials=2, seed=seed)
        attempted += tdma.stats["attempted"]
        delivered += tdma.stats["delivered"]
    runs = len(disk_structures)
    ok = separated == runs and within_phi == runs and delivered == attempted
    record(4, ok, f"{runs} runs: separation held in {separated}, colors within phi bound in {within_phi}, "
                  f"TDMA delivery {delivered}/{attempted}")
    assert ok


# 5 and 6 ------------------------------------------------------------------------


def blob_sizes(seed):
    return np.random.default_rng(seed).integers(30, 301, size=6).tolist()


@pytest.fixture(scope="module")
def blob_structures():
    out = {}
    for F, mode in ((1, "large"), (8, "auto")):
        runs = []
        for seed in range(100):
            topo = blob_field(blob_sizes(seed), 200.0, 3.0, seed)
            sim = Simulation(topo, P, F, seed=seed)
            st = build_structure(sim, PRACTICAL, "oracle", mode)
            runs.append((topo, sim, st))
        out[F] = runs
    return out


def test_criterion_5_csa(record, blob_structures):
    lo, hi = csa_interval(PRACTICAL)
    parts, ok = [], True
    for F, runs in blob_structures.items():
        ratios = np.array([c.size_estimate / (len(c.members) - 1)
                           for _, _, st in runs for c in st.clusters.values()])
        inside = float(np.mean((ratios >= lo) & (ratios <= hi)))
        path = runs[0][2].csa.path
        parts.append(f"{path} path (F={F}) {inside:.1%} of {len(ratios)} clusters in [{lo:g}, {hi:g}]")
        ok &= inside >= 0.95
        if path == "small":
            in_budget = np.mean([st.csa.completed and st.csa.rounds <= st.csa.budget for _, _, st in runs])
            parts.append(f"small path within budget in {in_budget:.0%} of runs")
            ok &= in_budget >= 0.95
    record(5, ok, "; ".join(parts))
    assert ok


def reporter_stats(structures):
    clusters = bad = 0
    for _, m, st in structures:
        clusters += sum(1 for c in st.clusters.values() if c.f_v > 0)
        bad += m.failures.get("empty_channel", 0) + m.failures.get("multiple_reporters", 0)
    return clusters, bad


def convergecast_slots(sim, st):
    """Run the reporter-tree convergecast; returns per-cluster (f_v, slots) and whether it delivered."""
    values = [1 if p >= 0 else 0 for p in st.pos()]
    proto = TreeConvergecast(st, get_aggregate("sum"), values)
    steps = sim.run(proto, max(1, proto.step_rounds) * 64, stage="tree_check") // proto.step_rounds
    exact = proto.missed == 0 and steps == proto.H
    for d, c in st.clusters.items():
        exact &= proto.values[d] == 1 + sum(u >= 0 for u in c.reporters)
    return [(c.f_v, 2 * ReporterTree(d, tuple(c.reporters)).height)
            for d, c in st.clusters.items() if c.f_v > 0], exact


def test_criterion_6_reporters(record, disk_structures, blob_structures):
    clusters, bad = reporter_stats(disk_structures + [(t, s.metrics, st) for t, s, st in blob_structures[8]])
    frac = 1 - bad / clusters
    pytest.reporters = (clusters, frac)
    assert frac >= 0.99, f"{frac:.2%} of {clusters} clusters have one reporter per channel"


@pytest.mark.xfail(strict=True, reason="a heap of f_v reporters has ceil(log2(f_v+1)) levels, so a two-slot-"
                                       "per-level convergecast needs 2*ceil(log2(f_v+1)) slots; the floor form "
                                       "holds only when f_v+1 is a power of two")
def test_criterion_6_convergecast_slots(record, blob_structures):
    clusters, frac = getattr(pytest, "reporters", (0, 0.0))
    matches = total = 0
    delivered = True
    for _, sim, st in blob_structures[8]:
        if not sim.metrics.ok:
            continue
        per_cluster, exact = convergecast_slots(sim, st)
        delivered &= exact
        for f, slots in per_cluster:
            total += 1
            matches += slots == 2 * math.floor(math.log2(f + 1))
    ok = frac >= 0.99 and delivered and matches == total
    record(6, ok, f"one reporter per channel in {frac:.2%} of {clusters} clusters; convergecast exact and "
                  f"deterministic: {delivered}; slots equal 2*floor(log2(f_v+1)) in {matches}/{total} clusters")
    assert delivered
    assert matches == total


# 7 ------------------------------------------------------------------------------


def test_criterion_7_powers_of_two(record):
    runs = failed = exact = 0
    for seed in range(200):
        n = 10 + seed % 21
        F = (1, 2, 4)[seed % 3]
        topo = generate_topology("uniform_disk", n, 50.0, seed)
        res = aggregate(topo, P, F, "sum", [1 << i for i in range(n)], seed=seed, consts=PRACTICAL)
        runs += 1
        if not res.metrics.ok:
            failed += 1
            continue
        exact += check_powers(res.values, n).ok
    ok_runs = runs - failed
    ok = exact == ok_runs and failed / runs <= 0.02
    record(7, ok, f"{runs} runs, failure rate {failed / runs:.1%} (limit 2%), exact bit set in "
                  f"{exact}/{ok_runs} successful runs")
    assert ok


# 8 ------------------------------------------------------------------------------


def test_criterion_8_bounded_contention(record):
    held = 0
    worst = 0.0
    for seed in range(200):
        topo = generate_topology("uniform_disk", 400, 140.0, seed)
        res = aggregate(topo, P, 4, "sum", [1] * 400, seed=seed, consts=PRACTICAL, structure_mode="oracle")
        held += res.ledger.held
        worst = max(worst, res.ledger.worst_ratio)
    frac = held / 200
    record(8, frac >= 0.99, f"ledger held in {frac:.1%} of 200 runs (need 99%), worst ratio {worst:.3g}")
    assert frac >= 0.99


# 9 ------------------------------------------------------------------------------


def test_criterion_9_speedup(record):
    topo = blob_field([513], 200.0, 3.0, 0)
    t0 = time.perf_counter()
    medians = {}
    for F in (1, 2, 4, 8):
        rounds = []
        for seed in range(50):
            res = aggregate(topo, P, F, "sum", [1] * topo.n, seed=seed, consts=PRACTICAL, structure_mode="oracle")
            if res.metrics.ok:
                rounds.append(res.stages["follower"])
        medians[F] = float(np.median(rounds))
    elapsed = time.perf_counter() - t0
    m = [medians[F] for F in (1, 2, 4, 8)]
    decreasing = all(a > b for a, b in zip(m, m[1:]))
    ratio = m[0] / m[-1]
    ok = decreasing and ratio >= 4 and elapsed < 1800
    record(9, ok, f"median follower rounds {', '.join(f'F={F}: {v:g}' for F, v in medians.items())}; "
                  f"F1/F8 ratio {ratio:.2f} (need 4); {elapsed / 60:.1f} min")
    assert ok


# 10 -----------------------------------------------------------------------------


def test_criterion_10_backbone_scaling(record):
    diam, med = [], []
    for D in (5, 10, 20):
        rounds = []
        for seed in range(30):
            topo = cluster_line(D + 1, 8, 60.0, 2.0, seed)
            res = aggregate(topo, P, 1, "sum", [1] * topo.n, seed=seed, consts=PRACTICAL, structure_mode="oracle")
            if res.metrics.ok:
                rounds.append(res.stages["backbone"])
        diam.append(D)
        med.append(float(np.median(rounds)))
    r2 = linregress(diam, med).rvalue ** 2
    record(10, r2 >= 0.9, f"median backbone rounds {dict(zip(diam, med))}, R^2 {r2:.4f} (need 0.9)")
    assert r2 >= 0.9


# 11 -----------------------------------------------------------------------------


def test_criterion_11_coloring(record):
    improper = over_budget = paired = within = 0
    ratios = []
    for seed in range(50):
        topo = generate_topology("uniform_disk", 300, 120.0, seed)
        sim = Simulation(topo, P, 4, seed=seed)
        st = build_structure(sim, PRACTICAL, "distributed")
        col = color_network(topo, P, 4, seed=seed, structure=st)
        agg = aggregate(topo, P, 4, "sum", [1] * topo.n, seed=seed, structure=st)
        if col.metrics.ok:
            improper += len(improper_edges(topo, P.r_eps, col.colors)) > 0
            biggest = max(len(c.members) for c in st.clusters.values())
            over_budget += col.n_colors > st.phi * biggest
        if col.metrics.ok and agg.metrics.ok:
            r = col.metrics.stage_rounds["coloring"] / agg.metrics.stage_rounds["aggregation"]
            ratios.append(r)
            paired += 1
            within += 0.5 <= r <= 2
    ok = improper == 0 and over_budget == 0 and within == paired > 0
    record(11, ok, f"{improper} runs with improper edges, {over_budget} over phi*max|C|; coloring/aggregation "
                   f"rounds within 2x in {within}/{paired} runs (median ratio {np.median(ratios):.2f})")
    assert ok
