"""Reporter election and the heap-shaped reporter tree of a cluster."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..sim import Simulation, virtual_channel
from .constants import ProtocolConstants, channel_count, cluster_radius
from .ruling import ruling_set


@dataclass(frozen=True)
class ReporterTree:
    """Reporters ``u_1..u_f`` of one cluster with ``u_0`` the dominator.

    ``u_k`` hangs below ``u_{k//2}``.  Levels count from the leaves: a
    reporter at depth ``d`` (``u_1`` has depth 1) sits on level
    ``height - d + 1`` and the dominator on ``height + 1``.
    """

    dominator: int
    reporters: tuple[int, ...]

    @property
    def f(self) -> int:
        return len(self.reporters)

    def node(self, k: int) -> int:
        return self.dominator if k == 0 else self.reporters[k - 1]

    @staticmethod
    def parent(k: int) -> int:
        if k < 1:
            raise ValueError("the dominator has no parent")
        return k // 2

    def children(self, k: int) -> list[int]:
        return [c for c in (2 * k, 2 * k + 1) if 1 <= c <= self.f and c != k]

    @staticmethod
    def depth(k: int) -> int:
        return 0 if k == 0 else int(math.floor(math.log2(k))) + 1

    @property
    def height(self) -> int:
        return self.depth(self.f) if self.f else 0

    def level(self, k: int) -> int:
        return self.height - self.depth(k) + 1

    @staticmethod
    def send_channel(k: int) -> int:
        return max(1, k // 2)

    @staticmethod
    def listen_channel(k: int) -> int:
        return max(1, k)

    @staticmethod
    def send_slot(k: int) -> int:
        return 3 if k % 2 == 1 else 4

    def convergecast_slots(self) -> int:
        """Slots the level-by-level convergecast takes: two per level."""
        return 2 * self.height

    def paper_slots(self) -> int:
        return 2 * int(math.floor(math.log2(self.f + 1))) if self.f else 0


@dataclass
class Election:
    reporter_of_channel: dict[int, list[int]]   # dominator -> node per channel (-1 if empty)
    f_v: np.ndarray                              # per node, from its own estimate
    role: np.ndarray                             # 0 dominator, 1 reporter, 2 follower
    channel: np.ndarray                          # reporters: their channel; others 0
    empty: int
    multiple: int
    rounds: int


def elect_reporters(sim: Simulation, dom_of: np.ndarray, color: np.ndarray, phi: int,
                    estimate: np.ndarray, trivial: np.ndarray, consts: ProtocolConstants,
                    stage: str = "reporters") -> Election:
    """Members pick a channel among the cluster's ``f_v`` and each channel elects one reporter.

    Election on a channel is a ruling set at twice the cluster radius (the
    cluster diameter), so one winner per channel is what independence
    requires.
    """
    n, F = sim.n, sim.F
    doms = dom_of == np.arange(n)
    f_v = np.array([channel_count(int(estimate[v]), sim.ln_n, consts.c1, F, bool(trivial[v]))
                    if estimate[v] > 0 or trivial[v] else 0 for v in range(n)], dtype=np.int64)
    members = ~doms & (f_v > 0)
    pick = np.zeros(n, dtype=np.int64)
    for f in np.unique(f_v[members]):
        sel = np.flatnonzero(members & (f_v == f))
        pick[sel] = sim.streams.integers(1, int(f) + 1, "reporters.channel", int(f), nodes=sel)
    vch = virtual_channel(np.maximum(color, 1), np.maximum(pick, 1), F)
    group = np.where(members, vch * (n + 1) + dom_of, -1)
    rs = ruling_set(sim, members, 2 * cluster_radius(sim.params), consts, group=group,
                    step_rounds=phi, stage=stage, tag="reporters")
    won = rs.members & members
    role = np.full(n, 2, dtype=np.int64)
    role[doms] = 0
    role[won] = 1
    channel = np.where(won, pick, 0)
    table: dict[int, list[int]] = {}
    empty = multiple = 0
    for d in np.flatnonzero(doms):
        f = int(f_v[d])
        slots = [-1] * f
        for k in range(1, f + 1):
            winners = np.flatnonzero(won & (dom_of == d) & (pick == k))
            if len(winners) == 0:
                empty += 1
            else:
                multiple += len(winners) > 1
                slots[k - 1] = int(winners[np.argmin(sim.ids[winners])])
        table[int(d)] = slots
    if empty:
        sim.metrics.fail("empty_channel", empty)
    if multiple:
        sim.metrics.fail("multiple_reporters", multiple)
    return Election(table, f_v, role, channel, empty, multiple,
                    rs.phase1_rounds + rs.phase2_rounds)
