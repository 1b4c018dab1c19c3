"""Data aggregation over the cluster structure: followers, reporter trees and the dominator backbone."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .sim import Protocol, RunMetrics, Simulation, Trace, virtual_channel
from .sinr import SinrParams
from .structure import ProtocolConstants, Structure, build_structure
from .structure.reporters import ReporterTree
from .structure.ruling import frame
from .topology import Topology, graph_at_radius


@dataclass(frozen=True)
class AggregateFunction:
    name: str
    identity: Any
    combine: Callable[[Any, Any], Any]
    lift: Callable[[Any], Any] = lambda x: x
    final: Callable[[Any], Any] = lambda x: x

    def fold(self, values) -> Any:
        acc = self.identity
        for v in values:
            acc = self.combine(acc, self.lift(v))
        return acc


def _avg_final(p):
    s, c = p
    return s / c if c else float("nan")


AGGREGATES = {
    "sum": AggregateFunction("sum", 0, lambda a, b: a + b),
    "max": AggregateFunction("max", -math.inf, max),
    "min": AggregateFunction("min", math.inf, min),
    "count": AggregateFunction("count", 0, lambda a, b: a + b, lift=lambda x: 1),
    "average": AggregateFunction("average", (0, 0), lambda a, b: (a[0] + b[0], a[1] + b[1]),
                                 lift=lambda x: (x, 1), final=_avg_final),
}


def get_aggregate(name: str) -> AggregateFunction:
    try:
        return AGGREGATES[name]
    except KeyError:
        raise ValueError(f"unknown aggregate {name!r}; choose from {sorted(AGGREGATES)}") from None


@dataclass
class ContentionLedger:
    """Per-cluster follower contention, recomputed from protocol state and never fed back."""

    lam: float
    rounds: int = 0
    violations: int = 0
    worst_ratio: float = 0.0
    violating_clusters: set = field(default_factory=set)

    def record(self, clusters: np.ndarray, p_sum: np.ndarray, f_v: np.ndarray) -> None:
        if len(clusters) == 0:
            return
        self.rounds += 1
        cap = self.lam * f_v
        ratio = p_sum / np.maximum(cap, 1e-300)
        bad = p_sum > cap * (1 + 1e-9)
        self.violations += int(bad.sum())
        self.violating_clusters.update(clusters[bad].tolist())
        self.worst_ratio = max(self.worst_ratio, float(ratio.max()))

    @property
    def held(self) -> bool:
        return self.violations == 0


def follower_schedule(consts: ProtocolConstants, ln_n: float) -> tuple[int, int]:
    """Phase length Gamma and backoff threshold Omega."""
    return math.ceil(consts.gamma2 * ln_n), math.ceil(consts.omega2 * ln_n)


class Aggregation(Protocol):
    """The three aggregation procedures sharing five-slot rounds.

    Slots 1-2 carry follower data and reporter acks, slots 3-4 the reporter
    tree (odd and even positions), slot 5 the backbone.  One scheduler step
    is one TDMA period: the intra-cluster slots of all colors resolve
    together on disjoint virtual channels, while slot 5 is resolved once per
    color in turn because the backbone links clusters of different colors.
    A node only ever uses state it has learned by the end of its previous
    active round.
    """

    name = "aggregation"
    slots_per_round = 5

    def __init__(self, st: Structure, agg: AggregateFunction, inputs: list, consts: ProtocolConstants,
                 d_hat: int, initiator: int | None = None):
        self.st = st
        self.agg = agg
        self.inputs = list(inputs)
        self.consts = consts
        self.phi = max(1, st.phi)
        self.step_rounds = self.phi
        self.d_hat = d_hat
        self.initiator = initiator

    # setup -------------------------------------------------------------------

    def setup(self, sim):
        super().setup(sim)
        st, c = self.st, self.consts
        n = sim.n
        self.n = n
        self.Gamma, self.Omega = follower_schedule(c, sim.ln_n)
        self.L = self.Gamma + 1
        self.col = np.maximum(st.color, 1)
        self.dom_of = st.dom_of
        self.pos = st.pos()
        self.is_dom = self.pos == 0
        self.is_rep = self.pos > 0
        self.fv = st.f_v.astype(np.int64)
        self.value = [self.agg.lift(x) for x in self.inputs]
        self.vch1 = virtual_channel(self.col, 1, sim.F)
        # followers
        self.follower = (self.pos < 0) & (self.fv > 0)
        est = np.maximum(st.estimate, 1)
        self.p = np.where(self.follower, c.lam * self.fv / est, 0.0)
        self.p = np.minimum(self.p, c.lam)
        self.f_active = self.follower.copy()
        self.f_acked_at = np.full(n, -1, dtype=np.int64)
        self.f_channel = np.zeros(n, dtype=np.int64)
        self.f_sent = np.zeros(n, dtype=bool)
        self.heard_backoff = np.zeros(n, dtype=bool)
        self.bound_to = np.full(n, -1, dtype=np.int64)
        self.double_bound = 0
        # reporters
        self.merged: list[set] = [set() for _ in range(n)]
        self.pending_ack: list[tuple[int, int]] = []
        self.last_busy = np.full(n, -1, dtype=np.int64)
        self.busy_now = np.zeros(n, dtype=bool)
        self.child_report: list[dict[int, tuple]] = [dict() for _ in range(n)]
        self.heights = {d: ReporterTree(d, tuple(cs.reporters)).height for d, cs in st.clusters.items()}
        self.H = np.zeros(n, dtype=np.int64)
        for v in range(n):
            self.H[v] = self.heights.get(int(self.dom_of[v]), 0)
        self.busy_power = sim.know.power_at(2 * st.r_c)
        # dominators
        self.count = np.zeros(n, dtype=np.int64)
        self.sched_p = np.where(self.is_dom & (self.fv > 0),
                                np.minimum(c.lam * self.fv / est, c.lam), 0.0)
        self.j0 = np.full(n, -1, dtype=np.int64)
        self.complete = self.is_dom & (self.fv == 0)
        self.complete_at = np.where(self.complete, 0, -1)
        self.cluster_value: list[Any] = [None] * n
        for d in np.flatnonzero(self.complete):
            self.cluster_value[d] = self.value[d]
        self.ledger = ContentionLedger(c.lam)
        self.backoff_sent = np.zeros(0, dtype=np.int64)
        # backbone
        doms = np.flatnonzero(self.is_dom)
        if self.initiator is None:
            self.initiator = int(doms[np.argmin(sim.ids[doms])])
        self.T_c = math.ceil(c.c_backbone * (self.d_hat + sim.ln_n))
        self.joined = np.zeros(n, dtype=bool)
        self.joined[self.initiator] = True
        self.parent = np.full(n, -1, dtype=np.int64)
        self.children: list[set] = [set() for _ in range(n)]
        self.bb_report: list[dict[int, tuple]] = [dict() for _ in range(n)]
        self.final = [None] * n
        self.final_at = np.full(n, -1, dtype=np.int64)
        self.snap_complete = self.complete.copy()
        self.snap_value = list(self.cluster_value)
        self.checked_join = False

    def slots(self):
        return ("f.send", "f.ack", "t.odd", "t.even") + tuple(f"bb.{i}" for i in range(1, self.phi + 1))

    # helpers -------------------------------------------------------------------

    def _vch(self, nodes, ch):
        return virtual_channel(self.col[nodes], ch, self.sim.F)

    def _phase(self, step):
        return step // self.L, step % self.L

    def _report(self, v: int) -> tuple:
        """(value, busy, asof) of the subtree below reporter or dominator ``v``."""
        val = self.value[v]
        busy = int(self.last_busy[v])
        j, _ = self._phase(self._step)
        asof = j if self.is_rep[v] else 10**9
        k = int(self.pos[v])
        f = int(self.fv[v])
        for ck in (2 * k, 2 * k + 1) if k > 0 else (1,):
            if ck < 1 or ck > f or ck == k:
                continue
            rep = self.child_report[v].get(ck)
            if rep is None:
                asof = -1
                continue
            val = self.agg.combine(val, rep[0])
            busy = max(busy, rep[1])
            asof = min(asof, rep[2])
        return val, busy, asof

    # slots ----------------------------------------------------------------------

    def act(self, step, slot):
        self._step = step
        j, k = self._phase(step)
        if slot == "f.send":
            return self._follower_send(step, j, k)
        if slot == "f.ack":
            return self._follower_ack(step, k)
        if slot in ("t.odd", "t.even"):
            return self._tree(step, slot)
        return self._backbone(step, int(slot.split(".")[1]))

    def _follower_send(self, step, j, k):
        s = self.sim.streams
        if k == 0:
            self.count[:] = 0
            self.busy_now[:] = False
        if k < self.Gamma:
            act = np.flatnonzero(self.f_active)
            if len(act):
                clusters, inv = np.unique(self.dom_of[act], return_inverse=True)
                p_sum = np.bincount(inv, weights=self.p[act])
                self.ledger.record(clusters, p_sum, self.fv[clusters])
            u = s.uniform("agg.f.tx", step, nodes=act)
            tx = act[u < self.p[act]]
            ch = 1 + np.minimum((s.uniform("agg.f.ch", step, nodes=tx) * self.fv[tx]).astype(np.int64),
                                self.fv[tx] - 1)
            self.f_sent[:] = False
            self.f_sent[tx] = True
            self.f_channel[tx] = ch
            reps = np.flatnonzero(self.is_rep)
            doms = np.flatnonzero(self.is_dom & ~self.complete & (self.fv > 0))
            # u_1 and the dominator both sit on channel 1; the dominator only counts
            rx = np.concatenate([reps, doms])
            rx_ch = np.concatenate([self._vch(reps, self.pos[reps]), self.vch1[doms]])
            return frame(tx, self._vch(tx, ch), rx, rx_ch, tx)
        # last round of the phase: dominators that counted enough send Backoff
        doms = np.flatnonzero(self.is_dom & ~self.complete & (self.fv > 0))
        tx = doms[self.count[doms] >= self.Omega]
        self.backoff_sent = tx
        rx = np.flatnonzero(self.f_active)
        self.heard_backoff[:] = False
        return frame(tx, self.vch1[tx], rx, self.vch1[rx])

    def _follower_ack(self, step, k):
        if k >= self.Gamma:
            return frame([], [], [], [])
        tx = np.array([r for r, _ in self.pending_ack], dtype=np.int64)
        pay = [f for _, f in self.pending_ack]
        self.pending_ack = []
        rx = np.flatnonzero(self.f_sent & self.f_active)
        return frame(tx, self._vch(tx, self.pos[tx]), rx, self._vch(rx, self.f_channel[rx]), pay)

    def _tree(self, step, slot):
        want_odd = slot == "t.odd"
        movers = []
        for v in np.flatnonzero(self.is_rep):
            k = int(self.pos[v])
            h = int(self.H[v])
            lvl = h - (int(math.floor(math.log2(k))) + 1) + 1
            if lvl == step % h + 1 and (k % 2 == 1) == want_odd:
                movers.append(v)
        tx = np.array(movers, dtype=np.int64)
        pay = []
        for v in movers:
            pay.append((int(self.pos[v]) // 2, *self._report(v)))
        listeners = np.flatnonzero((self.is_rep | (self.is_dom & (self.fv > 0))))
        listeners = np.setdiff1d(listeners, tx)
        return frame(tx, self._vch(tx, np.maximum(self.pos[tx] // 2, 1)), listeners,
                     self._vch(listeners, np.maximum(self.pos[listeners], 1)), pay)

    def _backbone(self, step, color):
        bb = np.flatnonzero(self.is_dom & (self.col == color))
        q = self.consts.q_backbone
        u = self.sim.streams.uniform("agg.bb", step, color, nodes=bb)
        cand = bb[u < q]
        if step < self.T_c:
            tx = cand[self.joined[cand]]
            pay = [("JOIN", int(self.parent[v])) for v in tx]
        else:
            tx = cand[self.joined[cand]]
            pay = []
            for v in tx:
                if self.final[v] is not None:
                    pay.append(("FINAL", self.final[v]))
                else:
                    val, comp = self._bb_report(v)
                    pay.append(("REPORT", int(self.parent[v]), val, comp))
        doms = np.setdiff1d(np.flatnonzero(self.is_dom), tx)
        mem = np.flatnonzero(~self.is_dom & (self.col == color))
        mem = mem[[self.final[v] is None for v in mem]] if len(mem) else mem
        rx = np.concatenate([doms, mem])
        return frame(tx, np.ones(len(tx)), rx, np.ones(len(rx)), pay)

    def _bb_report(self, v):
        comp = bool(self.snap_complete[v])
        val = self.snap_value[v] if comp else self.agg.identity
        for ch in self.children[v]:
            rep = self.bb_report[v].get(ch)
            if rep is None:
                comp = False
                continue
            val = self.agg.combine(val, rep[0])
            comp = comp and rep[1]
        return val, comp

    # deliveries ----------------------------------------------------------------------

    def deliver(self, step, slot, res):
        got = np.flatnonzero(res.sender >= 0)
        j, k = self._phase(step)
        fr = res.frame
        if slot == "f.send":
            if k < self.Gamma:
                sensed = res.sensed - self.sim.know.N_lo
                reps_mask = self.is_rep[fr.rx]
                busy = reps_mask & (sensed >= self.busy_power)
                self.busy_now[fr.rx[busy]] = True
                for i in got:
                    v = int(fr.rx[i])
                    f = int(fr.payload[res.sender[i]])
                    if self.dom_of[f] != self.dom_of[v]:
                        continue
                    if self.is_dom[v]:
                        self.count[v] += 1
                    else:
                        self.busy_now[v] = True
                        if f not in self.merged[v]:
                            self.merged[v].add(f)
                            self.value[v] = self.agg.combine(self.value[v], self.value[f])
                        self.pending_ack.append((v, f))
            else:
                for i in got:
                    v = int(fr.rx[i])
                    if self.dom_of[fr.tx[res.sender[i]]] == self.dom_of[v]:
                        self.heard_backoff[v] = True
        elif slot == "f.ack":
            for i in got:
                v = int(fr.rx[i])
                r = int(fr.tx[res.sender[i]])
                if int(fr.payload[res.sender[i]]) == v and self.dom_of[r] == self.dom_of[v]:
                    if self.f_active[v]:
                        self.f_active[v] = False
                        self.f_acked_at[v] = step
                    if self.bound_to[v] >= 0 and self.bound_to[v] != r:
                        self.double_bound += 1
                    self.bound_to[v] = r
        elif slot in ("t.odd", "t.even"):
            for i in got:
                v = int(fr.rx[i])
                s = int(fr.tx[res.sender[i]])
                if self.dom_of[s] != self.dom_of[v]:
                    continue
                target, val, busy, asof = fr.payload[res.sender[i]]
                if target == self.pos[v]:
                    self.child_report[v][int(self.pos[s])] = (val, busy, asof)
        else:
            self._deliver_backbone(step, res)

    def _deliver_backbone(self, step, res):
        fr = res.frame
        for i in np.flatnonzero(res.sender >= 0):
            v = int(fr.rx[i])
            s = int(fr.tx[res.sender[i]])
            msg = fr.payload[res.sender[i]]
            if not self.is_dom[v]:
                if msg[0] == "FINAL" and s == self.dom_of[v] and self.final[v] is None:
                    self.final[v] = msg[1]
                    self.final_at[v] = step
                continue
            if msg[0] == "JOIN":
                if not self.joined[v] and step < self.T_c:
                    self.joined[v] = True
                    self.parent[v] = s
                if msg[1] == v:
                    self.children[v].add(s)
            elif msg[0] == "REPORT":
                if msg[1] == v:
                    self.children[v].add(s)
                    self.bb_report[v][s] = (msg[2], msg[3])
            elif msg[0] == "FINAL" and self.final[v] is None:
                self.final[v] = msg[1]
                self.final_at[v] = step

    def end_step(self, step):
        self._end_cluster(step)
        self._end_backbone(step)

    def _end_cluster(self, step):
        j, k = self._phase(step)
        c = self.consts
        # dominators judge completion from the latest report of u_1
        for d in np.flatnonzero(self.is_dom & ~self.complete):
            rep = self.child_report[d].get(1)
            if rep is None or self.j0[d] < 0:
                continue
            _, busy, asof = rep
            if asof >= max(busy + 1, int(self.j0[d])) + 1:
                self.complete[d] = True
                self.complete_at[d] = step
                self.cluster_value[d] = self.agg.combine(self.value[d], rep[0])
        if k == self.L - 1:
            # phase boundary: busy bookkeeping and probability updates
            self.last_busy[self.busy_now] = j
            backed = np.zeros(self.n, dtype=bool)
            backed[self.backoff_sent] = True
            grow = self.f_active & ~self.heard_backoff
            self.p[grow] = np.minimum(2 * self.p[grow], c.lam)
            doms = np.flatnonzero(self.is_dom & (self.fv > 0))
            hold = backed[doms]
            self.sched_p[doms] = np.where(hold, self.sched_p[doms],
                                          np.minimum(2 * self.sched_p[doms], c.lam))
        # j0: first phase whose probability is at least lam/2 (known at the phase start)
        if k == self.L - 1 or step == 0:
            nxt = j + 1 if k == self.L - 1 else 0
            doms = np.flatnonzero(self.is_dom & (self.fv > 0) & (self.j0 < 0))
            reach = doms[self.sched_p[doms] >= c.lam / 2 - 1e-12]
            self.j0[reach] = nxt

    def _end_backbone(self, step):
        # backbone: root finishes once its subtree is complete
        self.snap_complete = self.complete.copy()
        self.snap_value = list(self.cluster_value)
        if step + 1 >= self.T_c:
            if not self.checked_join:
                self.checked_join = True
                self._check_backbone()
            r = self.initiator
            if self.final[r] is None:
                val, comp = self._bb_report(r)
                if comp:
                    self.final[r] = val
                    self.final_at[r] = step
        for d in np.flatnonzero(self.is_dom):
            if self.final[d] is not None and self.final_at[d] < 0:
                self.final_at[d] = step

    def _check_backbone(self):
        doms = np.flatnonzero(self.is_dom)
        unjoined = int((~self.joined[doms]).sum())
        orphans = sum(1 for v in doms if self.joined[v] and v != self.initiator
                      and v not in self.children[self.parent[v]])
        if unjoined or orphans:
            self.sim.metrics.fail("backbone_unjoined", unjoined + orphans)

    def done(self, step):
        return all(f is not None for f in self.final)

    def finish(self, steps):
        m = self.sim.metrics
        if np.any(self.f_active):
            m.fail("follower_unacked", int(self.f_active.sum()))
        m.fail("double_bound", self.double_bound)
        inc = int((self.is_dom & ~self.complete).sum())
        if inc:
            m.fail("cluster_incomplete", inc)
        missing = sum(1 for f in self.final if f is None)
        if missing:
            m.fail("backbone_incomplete", missing)
        m.contention_violations = self.ledger.violations
        m.contention_rounds = self.ledger.rounds


@dataclass
class AggregationResult:
    values: list
    metrics: RunMetrics
    structure: Structure
    expected: Any
    stages: dict[str, int]
    ledger: ContentionLedger
    protocol: Aggregation | None = None

    @property
    def correct(self) -> bool:
        return all(v == self.expected for v in self.values)


def aggregation_budget(st: Structure, consts: ProtocolConstants, ln_n: float, d_hat: int,
                       delta_hat: int, F: int) -> int:
    gamma, _ = follower_schedule(consts, ln_n)
    phases = math.ceil(math.log2(max(delta_hat, 2))) + 2 + math.ceil(delta_hat / (F * gamma * consts.lam * 0.1))
    t_c = math.ceil(consts.c_backbone * (d_hat + ln_n))
    steps = phases * (gamma + 1) + 3 * t_c + 8
    return 10 * steps * max(1, st.phi)


def aggregate(topo: Topology, params: SinrParams, F: int, agg: AggregateFunction | str, inputs,
              seed: int = 0, consts: ProtocolConstants | None = None, structure: Structure | None = None,
              structure_mode: str = "distributed", csa_mode: str = "auto", n_hat: int | None = None,
              trace: Trace | None = None, round_budget: int | None = None,
              d_hat: int | None = None, delta_hat: int | None = None) -> AggregationResult:
    """Build (or reuse) the structure, then run the three procedures until every node holds the result."""
    if isinstance(agg, str):
        agg = get_aggregate(agg)
    consts = consts or ProtocolConstants.practical()
    t0 = time.perf_counter()
    sim = Simulation(topo, params, F, seed=seed, n_hat=n_hat, trace=trace)
    sim.metrics.preset = consts.preset
    g = graph_at_radius(topo, params.r_eps)
    if not g.connected:
        sim.metrics.fail("disconnected")
        return AggregationResult([None] * topo.n, sim.metrics, structure, None, {},
                                 ContentionLedger(consts.lam))
    delta_hat = delta_hat if delta_hat is not None else g.delta + 1
    d_hat = d_hat if d_hat is not None else g.diameter + 1
    st = structure if structure is not None else build_structure(sim, consts, structure_mode, csa_mode, delta_hat)
    if structure is not None:
        sim.metrics.phi = st.phi
        sim.metrics.f_v = [c.f_v for c in st.clusters.values()]
    inputs = list(inputs)
    proto = Aggregation(st, agg, inputs, consts, d_hat)
    budget = round_budget or aggregation_budget(st, consts, sim.ln_n, d_hat, delta_hat, F)
    sim.run(proto, budget, stage="aggregation")
    phi = proto.phi
    stages = {
        "follower": int((proto.f_acked_at.max(initial=-1) + 1) * phi),
        "tree": int((proto.complete_at.max(initial=-1) + 1) * phi),
        "backbone": int((proto.final_at.max(initial=-1) + 1) * phi),
    }
    sim.metrics.stage_rounds["aggregation"] = stages["backbone"]
    for k, v in stages.items():
        sim.metrics.sub_rounds[f"aggregation.{k}"] = v
    values = [agg.final(v) if v is not None else None for v in proto.final]
    expected = agg.final(agg.fold(inputs))
    sim.metrics.wall_time = time.perf_counter() - t0
    return AggregationResult(values, sim.metrics, st, expected, stages, proto.ledger, proto)


class TreeConvergecast(Protocol):
    """One bottom-up pass over reporter trees: level ``s`` sends in step ``s``.

    Odd positions use the first slot and even positions the second, each on
    channel ``max(1, k//2)``.  Clusters are TDMA separated through virtual
    channels.  The pass over a tree of height ``H`` takes ``2H`` slots.
    """

    name = "tree_convergecast"

    def __init__(self, st: Structure, agg: AggregateFunction, values: list):
        self.st = st
        self.agg = agg
        self.values = list(values)
        self.step_rounds = max(1, st.phi)

    def setup(self, sim):
        super().setup(sim)
        self.pos = self.st.pos()
        self.col = np.maximum(self.st.color, 1)
        self.H = max([ReporterTree(d, tuple(c.reporters)).height for d, c in self.st.clusters.items()],
                     default=0)
        self.h_of = np.zeros(sim.n, dtype=np.int64)
        for d, c in self.st.clusters.items():
            h = ReporterTree(d, tuple(c.reporters)).height
            self.h_of[self.st.dom_of == d] = h
        self.sent_slots = np.zeros(sim.n, dtype=np.int64)
        self.received = np.zeros(sim.n, dtype=np.int64)
        self.missed = 0

    def slots(self):
        return ("odd", "even")

    def act(self, step, slot):
        s = step + 1
        rep = np.flatnonzero(self.pos > 0)
        depth = np.floor(np.log2(np.maximum(self.pos[rep], 1))).astype(np.int64) + 1
        lvl = self.h_of[rep] - depth + 1
        odd = self.pos[rep] % 2 == 1
        tx = rep[(lvl == s) & (odd == (slot == "odd"))]
        rx = np.setdiff1d(np.flatnonzero(self.pos >= 0), tx)
        F = self.sim.F
        pay = [(int(self.pos[v]) // 2, self.values[v]) for v in tx]
        self._expected = {int(v) for v in tx}
        return frame(tx, virtual_channel(self.col[tx], np.maximum(self.pos[tx] // 2, 1), F),
                     rx, virtual_channel(self.col[rx], np.maximum(self.pos[rx], 1), F), pay)

    def deliver(self, step, slot, res):
        fr = res.frame
        for i in np.flatnonzero(res.sender >= 0):
            v = int(fr.rx[i])
            s = int(fr.tx[res.sender[i]])
            target, val = fr.payload[res.sender[i]]
            if self.st.dom_of[s] == self.st.dom_of[v] and target == self.pos[v]:
                self.values[v] = self.agg.combine(self.values[v], val)
                self._expected.discard(s)
        self.missed += len(self._expected)

    def done(self, step):
        return step >= self.H


def tree_convergecast(tree: ReporterTree, agg: AggregateFunction, values: dict[int, Any]):
    """Fold ``values`` (keyed by heap position) up one reporter tree, level by level.

    Returns ``(dominator value, slots)`` where ``slots`` is the schedule
    length, two slots (odd, even) per level.
    """
    f = tree.f
    acc = {k: values.get(k, agg.identity) for k in range(f + 1)}
    slots = 0
    for s in range(1, tree.height + 1):
        for parity in (1, 0):
            movers = [k for k in range(1, f + 1) if tree.level(k) == s and k % 2 == parity]
            for k in movers:
                p = tree.parent(k)
                acc[p] = agg.combine(acc[p], acc[k])
            slots += 1
    return acc[0], slots


def read_inputs(path: str | Path, topo: Topology) -> list:
    """``id value`` lines; ids absent from the file get 0."""
    idx = {int(i): k for k, i in enumerate(topo.ids.tolist())}
    vals: list = [0] * topo.n
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 or int(parts[0]) not in idx:
            raise ValueError(f"{path}:{lineno}: expected 'id value' for a known node")
        v = float(parts[1])
        vals[idx[int(parts[0])]] = int(v) if v.is_integer() and "." not in parts[1] else v
    return vals
