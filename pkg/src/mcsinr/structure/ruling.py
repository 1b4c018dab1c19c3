"""Decay dominating sets and the Hello/Ack/In ruling-set protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..sim import Protocol, Simulation
from ..sinr import SlotFrame, SlotResult, clear_mask, near_mask
from .constants import ProtocolConstants

UNDECIDED, DOMINATOR, DOMINATED = 0, 1, 2


def frame(tx, tx_ch, rx, rx_ch, payload=None) -> SlotFrame:
    i64 = lambda a: np.asarray(a, dtype=np.int64)
    return SlotFrame(i64(tx), i64(tx_ch), i64(rx), i64(rx_ch), payload)


def density(topo_dist: np.ndarray, members: np.ndarray, group: np.ndarray, radius: float) -> int:
    """Largest number of same-group members inside any node-centered ball of ``radius``."""
    idx = np.flatnonzero(members)
    if len(idx) == 0:
        return 0
    best = 0
    for g in np.unique(group[idx]):
        sel = idx[group[idx] == g]
        inside = topo_dist[:, sel] <= radius
        best = max(best, int(inside.sum(axis=1).max()))
    return best


class DominatingSet(Protocol):
    """Decay-style dominating set among ``candidates`` at ``radius``.

    Probability level ``k`` lasts ``ds_len`` steps of two slots.  In the
    announce slot an undecided candidate transmits with probability
    ``min(1/2, 2**k/n_hat)`` and becomes a dominator; in the beacon slot
    dominators repeat themselves with a constant probability.  An undecided
    listener that decodes a message from a sender inferred within ``radius``
    becomes that sender's dominatee.  Whoever is undecided at the end
    dominates itself.  Candidates interact only with candidates on the same
    channel in ``group``.
    """

    name = "dominating_set"

    def __init__(self, candidates: np.ndarray, group: np.ndarray, radius: float,
                 consts: ProtocolConstants, step_rounds: int = 1, tag: str = "ds"):
        self.cand = np.asarray(candidates, dtype=bool)
        self.group = np.asarray(group, dtype=np.int64)
        self.radius = radius
        self.consts = consts
        self.step_rounds = step_rounds
        self.tag = tag

    def setup(self, sim: Simulation) -> None:
        super().setup(sim)
        n = sim.n
        self.levels = math.ceil(math.log2(max(sim.n_hat, 2))) + 1
        self.total = self.levels * self.consts.ds_len
        self.status = np.where(self.cand, UNDECIDED, -1)
        self.dom_of = np.full(n, -1, dtype=np.int64)
        self.heard_from: np.ndarray | None = None

    def slots(self):
        return ("announce", "beacon")

    def act(self, step, slot):
        sim = self.sim
        und = np.flatnonzero(self.status == UNDECIDED)
        if slot == "announce":
            level = step // self.consts.ds_len
            p = min(0.5, 2.0**level / sim.n_hat)
            u = sim.streams.uniform(self.tag + ".announce", step, nodes=und)
            tx = und[u < p]
            self.status[tx] = DOMINATOR
            self.dom_of[tx] = tx
        else:
            doms = np.flatnonzero(self.status == DOMINATOR)
            u = sim.streams.uniform(self.tag + ".beacon", step, nodes=doms)
            tx = doms[u < self.consts.ds_beacon]
        rx = np.flatnonzero(self.status == UNDECIDED)
        return frame(tx, self.group[tx], rx, self.group[rx])

    def deliver(self, step, slot, res: SlotResult):
        ok = near_mask(res, self.sim.know, self.radius)
        if ok.any():
            v = res.frame.rx[ok]
            self.status[v] = DOMINATED
            self.dom_of[v] = res.frame.tx[res.sender[ok]]

    def done(self, step):
        return step >= self.total

    def fast_forward(self, step):
        if not (self.status == UNDECIDED).any():
            return self.total
        return None

    def finish(self, steps):
        rest = self.status == UNDECIDED
        self.status[rest] = DOMINATOR
        self.dom_of[rest] = np.flatnonzero(rest)

    @property
    def dominators(self) -> np.ndarray:
        return self.status == DOMINATOR


class RulingPhase(Protocol):
    """Hello/Ack/In elimination among a constant-density candidate set.

    Runs a fixed ``steps`` schedule.  Slot 1: an active node sends Hello with
    probability ``1/(2 mu)``.  Slot 2: an active listener with a clear
    reception of a Hello from within ``r`` sends Ack with the same
    probability.  Slot 3: a Hello sender that decoded an Ack from within
    ``r`` joins and sends In; active listeners decoding In from within ``r``
    drop out.  Nodes still active at the end join.
    """

    name = "ruling_set"

    def __init__(self, candidates: np.ndarray, group: np.ndarray, r: float, mu: float,
                 steps: int, step_rounds: int = 1, tag: str = "rs"):
        self.active = np.asarray(candidates, dtype=bool).copy()
        self.group = np.asarray(group, dtype=np.int64)
        self.r = r
        self.p = 1.0 / (2.0 * max(mu, 1.0))
        self.steps = steps
        self.step_rounds = step_rounds
        self.tag = tag

    def setup(self, sim):
        super().setup(sim)
        self.joined = np.zeros(sim.n, dtype=bool)
        self.joined_at = np.full(sim.n, -1, dtype=np.int64)
        self.halted_at = np.full(sim.n, -1, dtype=np.int64)
        self.halted_by = np.full(sim.n, -1, dtype=np.int64)
        self.sent_hello = np.zeros(sim.n, dtype=bool)
        self.will_ack = np.zeros(sim.n, dtype=bool)
        self.acked = np.zeros(sim.n, dtype=bool)
        self._dist = sim.medium.topo.distances() if sim.n <= 4096 else None

    def slots(self):
        return ("hello", "ack", "in")

    def act(self, step, slot):
        s = self.sim.streams
        act = np.flatnonzero(self.active)
        if slot == "hello":
            u = s.uniform(self.tag + ".hello", step, nodes=act)
            tx = act[u < self.p]
            self.sent_hello[:] = False
            self.sent_hello[tx] = True
            rx = act[u >= self.p]
        elif slot == "ack":
            cand = np.flatnonzero(self.will_ack)
            u = s.uniform(self.tag + ".ack", step, nodes=cand)
            tx = cand[u < self.p]
            rx = np.flatnonzero(self.sent_hello)
        else:
            tx = np.flatnonzero(self.acked)
            self.active[tx] = False
            self.joined[tx] = True
            self.joined_at[tx] = step
            rx = np.flatnonzero(self.active)
        return frame(tx, self.group[tx], rx, self.group[rx])

    def deliver(self, step, slot, res):
        know = self.sim.know
        if slot == "hello":
            self.will_ack[:] = False
            ok = clear_mask(res, know, self.r)
            self.will_ack[res.frame.rx[ok]] = True
        elif slot == "ack":
            self.acked[:] = False
            ok = near_mask(res, know, self.r)
            self.acked[res.frame.rx[ok]] = True
        else:
            ok = near_mask(res, know, self.r)
            v = res.frame.rx[ok]
            self.active[v] = False
            self.halted_at[v] = step
            self.halted_by[v] = res.frame.tx[res.sender[ok]]

    def done(self, step):
        return step >= self.steps

    def fast_forward(self, step):
        # Once no two active nodes on one channel are within r of each other
        # nobody can be halted any more and every active node ends up joining.
        act = np.flatnonzero(self.active)
        if len(act) == 0:
            return self.steps
        if self._dist is None or len(act) > 1500:
            return None
        d = self._dist[np.ix_(act, act)]
        same = self.group[act][:, None] == self.group[act][None, :]
        np.fill_diagonal(same, False)
        if not (same & (d <= self.r)).any():
            return self.steps
        return None

    def finish(self, steps):
        rest = np.flatnonzero(self.active)
        self.joined[rest] = True
        self.joined_at[rest] = steps
        self.active[:] = False


@dataclass(frozen=True)
class RulingSetParams:
    r: float
    rounds: int

    @classmethod
    def make(cls, r: float, consts: ProtocolConstants, mu: float, ln_n: float) -> "RulingSetParams":
        return cls(r, math.ceil(consts.ruling_gamma(mu) * ln_n))


@dataclass
class RulingOutcome:
    members: np.ndarray
    phase1: DominatingSet
    phase2: RulingPhase
    mu: int
    params: RulingSetParams
    phase1_rounds: int
    phase2_rounds: int


def ruling_set(sim: Simulation, candidates: np.ndarray, r: float, consts: ProtocolConstants,
               group: np.ndarray | None = None, step_rounds: int = 1, stage: str = "ruling_set",
               tag: str = "rs") -> RulingOutcome:
    """Compute an ``(r, 2r)``-ruling set of ``candidates`` (per channel in ``group``).

    A decay dominating set at ``r`` first thins the candidates to constant
    density; the Hello/Ack/In phase then runs ``ceil(gamma ln n_hat)`` steps.
    ``mu`` is measured from the phase-1 dominators unless fixed in ``consts``.
    """
    cand = np.asarray(candidates, dtype=bool)
    if group is None:
        group = np.ones(sim.n, dtype=np.int64)
    ds = DominatingSet(cand, group, r, consts, step_rounds, tag=tag + ".ds")
    budget1 = ds_rounds(sim, consts) * step_rounds
    r1 = sim.run(ds, budget1, stage=f"{stage}.phase1")
    doms = ds.dominators
    measured = density(sim.medium.topo.distances(), doms, group, r)
    mu = consts.mu if consts.mu is not None else max(1, measured)
    params = RulingSetParams.make(r, consts, mu, sim.ln_n)
    ph = RulingPhase(doms, group, r, mu, params.rounds, step_rounds, tag=tag + ".hia")
    r2 = sim.run(ph, params.rounds * step_rounds, stage=f"{stage}.phase2")
    return RulingOutcome(ph.joined.copy(), ds, ph, int(max(1, measured)), params, r1, r2)


def ds_rounds(sim: Simulation, consts: ProtocolConstants) -> int:
    return (math.ceil(math.log2(max(sim.n_hat, 2))) + 1) * consts.ds_len
