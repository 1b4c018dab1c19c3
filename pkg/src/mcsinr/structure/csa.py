"""Cluster-size approximation: the doubling-probability counter and the multi-channel variant."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..sim import Protocol, Simulation, virtual_channel
from .constants import ProtocolConstants, cluster_radius
from .ruling import frame, ruling_set


def csa_phases(delta_hat: int) -> int:
    return max(1, math.ceil(math.log2(max(delta_hat, 2))))


def csa_estimate(delta_hat: int, j: int) -> int:
    return math.ceil(delta_hat * 2.0 ** (-j + 1))


class CsaCount(Protocol):
    """Heads estimate how many nodes share their group.

    ``head_of[v]`` is the head counting for ``v`` (``head_of[h] == h`` for
    heads, -1 for bystanders) and ``vch`` the (virtual) channel each node
    uses.  Phase ``j`` has ``ceil(gamma1 ln n_hat)`` counting steps in which
    undecided non-heads transmit with ``(lam/delta_hat) 2**(j-1)`` and heads
    count what they decode from their own group, then one step in which a
    head whose count reached ``omega1 ln n_hat`` sends Done with the estimate
    ``ceil(delta_hat 2**(1-j))`` and stops.  In the last phase an
    unterminated head that heard anybody sends Done with the final-phase
    value anyway and is marked as a fallback.
    """

    name = "csa"

    def __init__(self, head_of: np.ndarray, vch: np.ndarray, delta_hat: int,
                 consts: ProtocolConstants, step_rounds: int = 1, tag: str = "csa"):
        self.head_of = np.asarray(head_of, dtype=np.int64)
        self.vch = np.asarray(vch, dtype=np.int64)
        self.delta_hat = max(1, int(delta_hat))
        self.consts = consts
        self.step_rounds = step_rounds
        self.tag = tag

    def setup(self, sim):
        super().setup(sim)
        n = sim.n
        c = self.consts
        self.J = csa_phases(self.delta_hat)
        self.L = math.ceil(c.gamma1 * sim.ln_n) + 1
        self.threshold = c.omega1 * sim.ln_n
        self.total = self.J * self.L
        self.is_head = self.head_of == np.arange(n)
        self.is_member = (self.head_of >= 0) & ~self.is_head
        self.done_flag = np.zeros(n, dtype=bool)
        self.estimate = np.zeros(n, dtype=np.int64)
        self.count = np.zeros(n, dtype=np.int64)
        self.heard_ever = np.zeros(n, dtype=bool)
        self.fallback = np.zeros(n, dtype=bool)
        self.term_phase = np.zeros(n, dtype=np.int64)
        self.member_count = np.bincount(self.head_of[self.is_member], minlength=n)

    def _phase(self, step):
        return step // self.L + 1, step % self.L

    def act(self, step, slot):
        j, k = self._phase(step)
        heads = np.flatnonzero(self.is_head & ~self.done_flag)
        if k == 0:
            self.count[heads] = 0
        if k < self.L - 1:
            pj = min(1.0, self.consts.lam / self.delta_hat * 2.0 ** (j - 1))
            cand = np.flatnonzero(self.is_member & ~self.done_flag)
            u = self.sim.streams.uniform(self.tag + ".tx", step, nodes=cand)
            tx = cand[u < pj]
            return frame(tx, self.vch[tx], heads, self.vch[heads], self.head_of[tx])
        last = j == self.J
        go = self.count[heads] >= self.threshold
        if last:
            go |= self.count[heads] > 0
        tx = heads[go]
        self.done_flag[tx] = True
        self.fallback[tx] = ~(self.count[tx] >= self.threshold)
        self.estimate[tx] = csa_estimate(self.delta_hat, j)
        self.term_phase[tx] = j
        rx = np.flatnonzero(self.is_member & ~self.done_flag)
        return frame(tx, self.vch[tx], rx, self.vch[rx], self.estimate[tx])

    def deliver(self, step, slot, res):
        j, k = self._phase(step)
        got = res.sender >= 0
        if not got.any():
            return
        v = res.frame.rx[got]
        pay = np.asarray(res.frame.payload)[res.sender[got]]
        if k < self.L - 1:
            mine = pay == v
            np.add.at(self.count, v[mine], 1)
            self.heard_ever[v[mine]] = True
        else:
            s = res.frame.tx[res.sender[got]]
            mine = self.head_of[v] == s
            self.done_flag[v[mine]] = True
            self.estimate[v[mine]] = pay[mine]

    def done(self, step):
        return step >= self.total

    def fast_forward(self, step):
        # Once every head with a group is finished nobody transmits again.
        heads = np.flatnonzero(self.is_head)
        live = heads[~self.done_flag[heads] & (self.member_count[heads] > 0)]
        if len(live) == 0 and not (self.is_member & ~self.done_flag
                                   & ~self.done_flag[np.maximum(self.head_of, 0)]).any():
            return self.total
        return None

    def finish(self, steps):
        heads = np.flatnonzero(self.is_head & ~self.done_flag)
        self.estimate[heads] = np.where(self.heard_ever[heads], csa_estimate(self.delta_hat, self.J), 1)
        self.fallback[heads] = self.heard_ever[heads]


@dataclass
class SizeEstimates:
    estimate: np.ndarray      # per node: its cluster's estimate as known locally (0 = unknown)
    trivial: np.ndarray       # per node: cluster has no dominatee as far as the dominator knows
    path: str
    rounds: int
    budget: int
    completed: bool
    warnings: int = 0
    detail: dict | None = None


def _dominator_mask(dom_of):
    return dom_of == np.arange(len(dom_of))


def csa_large(sim: Simulation, dom_of: np.ndarray, color: np.ndarray, phi: int,
              delta_hat: int, consts: ProtocolConstants, stage: str = "csa") -> SizeEstimates:
    """One counter per cluster: dominators count their dominatees on channel 1 under TDMA."""
    vch = virtual_channel(np.maximum(color, 1), 1, sim.F)
    proto = CsaCount(dom_of, vch, delta_hat, consts, step_rounds=phi, tag="csa.large")
    budget = csa_phases(delta_hat) * (math.ceil(consts.gamma1 * sim.ln_n) + 1) * phi
    rounds = sim.run(proto, budget, stage=stage)
    doms = _dominator_mask(dom_of)
    est = proto.estimate.copy()
    trivial = np.zeros(sim.n, dtype=bool)
    trivial[doms] = ~proto.heard_ever[doms]
    trivial = trivial[dom_of]
    warn = int(proto.fallback[doms].sum())
    sim.metrics.warn("csa_no_termination", warn)
    unknown = (est == 0) & ~trivial
    completed = not unknown.any()
    return SizeEstimates(est, trivial, "large", rounds, budget, completed, warn,
                         {"term_phase": proto.term_phase.copy(), "fallback": proto.fallback.copy()})


class CsaTree(Protocol):
    """Leaders push their counts to the dominator over the channel heap.

    Position ``k`` (the channel) has parent ``k // 2`` and the dominator sits
    at position 0.  Each step handles one level bottom up with four slots:
    odd children send then get acked, even children (having overheard the
    odd sibling) send then get acked.  A child left without an ack has an
    empty parent position and takes it over, the even child carrying the odd
    sibling's value along; an odd child that overheard its even sibling
    leaves the job to it.
    """

    name = "csa_tree"

    def __init__(self, dom_of, color, pos, value, F, step_rounds=1):
        self.dom_of = dom_of
        self.color = np.maximum(color, 1)
        self.pos = np.asarray(pos, dtype=np.int64).copy()       # -1 = not in any tree
        self.value = np.asarray(value, dtype=np.int64).copy()
        self.F = F
        self.H = int(math.floor(math.log2(F))) + 1
        self.step_rounds = step_rounds
        self.moves: list[tuple[int, int, int]] = []

    def setup(self, sim):
        super().setup(sim)
        self.finished = self.pos < 0
        self.heard_odd = np.zeros(sim.n, dtype=np.int64)
        self.heard_odd_flag = np.zeros(sim.n, dtype=bool)
        self.heard_even = np.zeros(sim.n, dtype=bool)
        self.got_ack = np.zeros(sim.n, dtype=bool)
        self.odd_acked = np.zeros(sim.n, dtype=bool)

    def slots(self):
        return ("a.data", "a.ack", "b.data", "b.ack")

    def _level(self, pos):
        depth = np.floor(np.log2(np.maximum(pos, 1))).astype(np.int64) + 1
        return np.where(pos > 0, self.H - depth + 1, self.H + 1)

    def _vch(self, nodes, ch):
        return virtual_channel(self.color[self.dom_of[nodes]], np.maximum(ch, 1), self.F)

    def act(self, step, slot):
        s = step + 1
        live = np.flatnonzero(~self.finished)
        lvl = self._level(self.pos[live])
        movers = live[lvl == s]
        odd = movers[self.pos[movers] % 2 == 1]
        even = movers[self.pos[movers] % 2 == 0]
        parents = live[lvl > s]
        if slot == "a.data":
            self.heard_odd_flag[:] = False
            self.heard_even[:] = False
            self.got_ack[:] = False
            self.odd_acked[:] = False
            self._acks = []
            tx = odd
            pay = [(int(self.pos[v] // 2), int(self.value[v])) for v in tx]
            rx = np.concatenate([parents, even])
            rx_ch = np.concatenate([self._vch(parents, self.pos[parents]),
                                    self._vch(even, self.pos[even] // 2)])
            return frame(tx, self._vch(tx, self.pos[tx] // 2), rx, rx_ch, pay)
        if slot in ("a.ack", "b.ack"):
            tx = np.array(self._acks, dtype=np.int64)
            rx = movers
            return frame(tx, self._vch(tx, self.pos[tx]), rx, self._vch(rx, self.pos[rx] // 2))
        # b.data: even children add the odd sibling's value when the parent never acked it
        self._acks = []
        tx = even
        carry = self.heard_odd_flag[tx] & ~self.odd_acked[tx]
        self.value[tx] += np.where(carry, self.heard_odd[tx], 0)
        pay = [(int(self.pos[v] // 2), int(self.value[v])) for v in tx]
        rx = np.concatenate([parents, odd])
        rx_ch = np.concatenate([self._vch(parents, self.pos[parents]),
                                self._vch(odd, self.pos[odd] // 2)])
        return frame(tx, self._vch(tx, self.pos[tx] // 2), rx, rx_ch, pay)

    def deliver(self, step, slot, res):
        got = np.flatnonzero(res.sender >= 0)
        for k in got:
            v = int(res.frame.rx[k])
            s = int(res.frame.tx[res.sender[k]])
            if self.dom_of[s] != self.dom_of[v]:
                continue
            if slot in ("a.data", "b.data"):
                target, val = res.frame.payload[res.sender[k]]
                if target == self.pos[v] and self.pos[v] < self.pos[s]:
                    self.value[v] += val
                    self._acks.append(v)
                elif slot == "a.data" and self.pos[v] == self.pos[s] - 1:
                    self.heard_odd[v] = val
                    self.heard_odd_flag[v] = True
                elif slot == "b.data" and self.pos[v] == self.pos[s] + 1:
                    self.heard_even[v] = True
            elif self.pos[s] == self.pos[v] // 2:
                odd = self.pos[v] % 2 == 1
                if slot == "a.ack" and not odd:
                    self.odd_acked[v] = True
                elif (slot == "a.ack") == odd:
                    self.got_ack[v] = True

    def end_step(self, step):
        s = step + 1
        live = np.flatnonzero(~self.finished)
        movers = live[self._level(self.pos[live]) == s]
        for v in movers:
            p = int(self.pos[v])
            if self.got_ack[v] or (p % 2 == 1 and self.heard_even[v]):
                self.finished[v] = True
            else:
                self.moves.append((int(v), p, p // 2))
                self.pos[v] = p // 2
        self.got_ack[:] = False

    def done(self, step):
        return step >= self.H


def csa_small(sim: Simulation, dom_of: np.ndarray, color: np.ndarray, phi: int,
              consts: ProtocolConstants, stage: str = "csa") -> SizeEstimates:
    """Spread the dominatees over all channels, count per channel, sum up the channel heap."""
    n, F = sim.n, sim.F
    doms = _dominator_mask(dom_of)
    col = np.maximum(color, 1)
    members = ~doms
    ch = sim.streams.integers(1, F + 1, "csa.small.channel")
    ch[doms] = 1
    vch = virtual_channel(col, ch, F)
    # 1: a leader per (cluster, channel)
    r = 2 * cluster_radius(sim.params)
    group = np.where(members, vch * (n + 1) + dom_of, -1)
    rs = ruling_set(sim, members, r, consts, group=group, step_rounds=phi,
                    stage=f"{stage}.leaders", tag="csa.leaders")
    rounds = (rs.phase1_rounds + rs.phase2_rounds)
    leader = rs.members & members
    key = np.where(leader, group, -1)
    head_of = np.full(n, -1, dtype=np.int64)
    multi = 0
    for g in np.unique(group[members]):
        ls = np.flatnonzero(key == g)
        nodes = np.flatnonzero(group == g)
        if len(ls) == 0:
            continue
        multi += len(ls) > 1
        # a node follows the lowest-id leader it shares a channel with
        head_of[nodes] = ls[np.argmin(sim.ids[ls])]
        head_of[ls] = ls
    # 2: count per channel
    delta_small = math.ceil(consts.gamma3 * sim.ln_n ** consts.c_small)
    cnt = CsaCount(head_of, vch, delta_small, consts, step_rounds=phi, tag="csa.small")
    rounds += sim.run(cnt, csa_phases(delta_small) * (math.ceil(consts.gamma1 * sim.ln_n) + 1) * phi,
                      stage=f"{stage}.count")
    # a leader that never heard anybody has no one else on its channel
    e = np.where(cnt.heard_ever, cnt.estimate, 0)
    # 3: leaders sum (estimate + 1) up the channel heap; dominators sit at position 0
    pos = np.where(leader, ch, -1)
    pos[doms] = 0
    value = np.where(leader, e + 1, 0)
    tree = CsaTree(dom_of, color, pos, value, F, step_rounds=phi)
    rounds += sim.run(tree, (tree.H) * phi, stage=f"{stage}.tree")
    total = np.zeros(n, dtype=np.int64)
    total[doms] = tree.value[doms]
    # 4: dominators broadcast the total on channel 1
    bc = _Broadcast(np.flatnonzero(doms & (total > 0)), np.flatnonzero(members), dom_of,
                    virtual_channel(col, 1, F), total, step_rounds=phi)
    rounds += sim.run(bc, phi, stage=f"{stage}.broadcast")
    est = bc.received
    est[doms] = np.maximum(total[doms], 1)
    trivial = np.zeros(n, dtype=bool)
    trivial[doms] = total[doms] == 0
    trivial = trivial[dom_of]
    warn = int(cnt.fallback.sum())
    sim.metrics.warn("csa_no_termination", warn)
    if multi:
        sim.metrics.warn("csa_multiple_leaders", multi)
    budget = phi * (rs.phase1_rounds // phi + rs.params.rounds
                    + csa_phases(delta_small) * (math.ceil(consts.gamma1 * sim.ln_n) + 1)
                    + tree.H + 1)
    completed = rounds <= budget and not ((est == 0) & ~trivial).any() and multi == 0
    detail = {"leaders": leader, "channel": ch, "tree_moves": tree.moves,
              "delta_small": delta_small, "leader_estimate": e}
    return SizeEstimates(est, trivial, "small", rounds, budget, completed, warn, detail)


class _Broadcast(Protocol):
    name = "broadcast"

    def __init__(self, senders, listeners, dom_of, vch, payload, step_rounds=1):
        self.senders, self.listeners = senders, listeners
        self.dom_of, self.vch, self.payload = dom_of, vch, payload
        self.step_rounds = step_rounds

    def setup(self, sim):
        super().setup(sim)
        self.received = np.zeros(sim.n, dtype=np.int64)

    def act(self, step, slot):
        tx, rx = self.senders, self.listeners
        return frame(tx, self.vch[tx], rx, self.vch[rx], self.payload[tx])

    def deliver(self, step, slot, res):
        got = res.sender >= 0
        v = res.frame.rx[got]
        s = res.frame.tx[res.sender[got]]
        mine = self.dom_of[v] == s
        self.received[v[mine]] = np.asarray(res.frame.payload)[res.sender[got]][mine]

    def done(self, step):
        return step >= 1


def use_small_path(delta_hat: int, F: int, ln_n: float, consts: ProtocolConstants) -> bool:
    return delta_hat / F <= ln_n ** consts.c_small


def estimate_sizes(sim: Simulation, dom_of, color, phi, delta_hat, consts,
                   mode: str = "auto", stage: str = "csa") -> SizeEstimates:
    if mode not in ("auto", "large", "small"):
        raise ValueError(f"unknown csa mode {mode!r}")
    small = mode == "small" or (mode == "auto" and use_small_path(delta_hat, sim.F, sim.ln_n, consts))
    if small:
        return csa_small(sim, dom_of, color, phi, consts, stage)
    return csa_large(sim, dom_of, color, phi, delta_hat, consts, stage)
