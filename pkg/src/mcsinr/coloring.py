"""Coloring with O(Delta) colors on top of the aggregation structure."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregation import AGGREGATES, Aggregation
from .sim import RunMetrics, Simulation, Trace
from .sinr import SinrParams
from .structure import ProtocolConstants, Structure, build_structure
from .structure.ruling import frame
from .topology import Topology, graph_at_radius


@dataclass(frozen=True)
class ColorRange:
    """Indices ``k`` in ``[start, stop)`` realized as colors ``k*phi + cluster_color``."""

    cluster_color: int
    start: int
    stop: int

    def __post_init__(self):
        if self.cluster_color < 1 or self.start < 0 or self.stop < self.start:
            raise ValueError(f"invalid color range {self}")

    def __len__(self) -> int:
        return self.stop - self.start

    def colors(self, phi: int) -> list[int]:
        return [k * phi + self.cluster_color for k in range(self.start, self.stop)]

    def split(self, sizes: list[int]) -> list["ColorRange"]:
        """Keep index ``start`` for the owner and hand out consecutive blocks of ``sizes``."""
        if 1 + sum(sizes) != len(self):
            raise ValueError("sizes must cover the range minus the owner's own index")
        out, a = [], self.start + 1
        for s in sizes:
            out.append(ColorRange(self.cluster_color, a, a + s))
            a += s
        return out


class Coloring(Aggregation):
    """ID collection, subtree counting, range dissemination and per-follower announcement.

    Four slots per round; one scheduler step covers two rounds so the two
    halves of the follower exchange (send, ack) and of the tree pass (odd,
    even) share a slot each.  Ranges move down one tree depth per slot,
    cycling, and every reporter announces one follower per slot in
    ascending id order, cycling.
    """

    name = "coloring"
    slots_per_round = 4

    def __init__(self, st: Structure, consts: ProtocolConstants):
        super().__init__(st, AGGREGATES["count"], [1] * len(st.dom_of), consts, d_hat=1)
        self.step_rounds = 2 * self.phi

    def setup(self, sim):
        super().setup(sim)
        n = sim.n
        self.k_start = np.full(n, -1, dtype=np.int64)
        self.k_index = np.full(n, -1, dtype=np.int64)
        self.depth = np.where(self.pos > 0, np.floor(np.log2(np.maximum(self.pos, 1))) + 1, 0).astype(np.int64)
        self.ranges: dict[int, ColorRange] = {}
        self.split_log: list[tuple[int, ColorRange, list[ColorRange]]] = []
        self.colored_at = np.full(n, -1, dtype=np.int64)

    def slots(self):
        return ("f.send", "t.odd", "range.0", "announce.0", "f.ack", "t.even", "range.1", "announce.1")

    def act(self, step, slot):
        if slot.startswith("range."):
            return self._range(step, 2 * step + int(slot[-1]))
        if slot.startswith("announce."):
            return self._announce(step, 2 * step + int(slot[-1]))
        return super().act(step, slot)

    def deliver(self, step, slot, res):
        if slot.startswith("range."):
            return self._deliver_range(step, res)
        if slot.startswith("announce."):
            return self._deliver_announce(step, res)
        return super().deliver(step, slot, res)

    # helpers -------------------------------------------------------------------

    def _followers_of(self, v) -> list[int]:
        return sorted(self.merged[v], key=lambda u: int(self.sim.ids[u]))

    def _child_counts(self, v) -> list[tuple[int, int]]:
        k = int(self.pos[v])
        f = int(self.fv[v])
        kids = [1] if k == 0 and f >= 1 else [c for c in (2 * k, 2 * k + 1) if 1 <= c <= f and k > 0]
        return [(c, self.child_report[v][c][0]) for c in kids]

    def _own_range(self, v) -> ColorRange:
        if v in self.ranges:
            return self.ranges[v]
        k = int(self.pos[v])
        nf = 0 if k == 0 else len(self.merged[v])
        size = 1 + nf + sum(c for _, c in self._child_counts(v))
        r = ColorRange(int(self.col[v]), int(self.k_start[v]), int(self.k_start[v]) + size)
        self.ranges[v] = r
        kids = self._child_counts(v)
        parts = r.split([nf] + [c for _, c in kids]) if nf or kids else []
        self.split_log.append((int(v), r, parts))
        return r

    def _give(self, v) -> dict[int, int]:
        """Start index for each child, after the owner's index and its followers."""
        r = self._own_range(v)
        a = r.start + 1 + (0 if self.pos[v] == 0 else len(self.merged[v]))
        out = {}
        for c, cnt in self._child_counts(v):
            out[c] = a
            a += cnt
        return out

    # slots ----------------------------------------------------------------------

    def _range(self, step, tick):
        tx, pay = [], []
        for v in np.flatnonzero((self.k_start >= 0) & (self.is_dom | self.is_rep) & (self.fv > 0)):
            h = int(self.H[v])
            if h == 0 or int(self.depth[v]) != tick % h:
                continue
            give = self._give(v)
            if give:
                tx.append(int(v))
                pay.append(give)
        tx = np.array(tx, dtype=np.int64)
        rx = np.flatnonzero(self.is_rep & (self.k_start < 0))
        return frame(tx, self._vch(tx, np.maximum(self.pos[tx], 1)),
                     rx, self._vch(rx, np.maximum(self.pos[rx] // 2, 1)), pay)

    def _deliver_range(self, step, res):
        fr = res.frame
        for i in np.flatnonzero(res.sender >= 0):
            v = int(fr.rx[i])
            s = int(fr.tx[res.sender[i]])
            give = fr.payload[res.sender[i]]
            if self.dom_of[s] == self.dom_of[v] and int(self.pos[v]) in give and self.k_start[v] < 0:
                self.k_start[v] = give[int(self.pos[v])]
                self.k_index[v] = self.k_start[v]
                self.colored_at[v] = step

    def _announce(self, step, tick):
        tx, pay = [], []
        for v in np.flatnonzero(self.is_rep & (self.k_start >= 0)):
            fol = self._followers_of(v)
            if not fol:
                continue
            i = tick % len(fol)
            tx.append(int(v))
            pay.append((fol[i], int(self.k_start[v]) + 1 + i))
        tx = np.array(tx, dtype=np.int64)
        rx = np.flatnonzero((self.pos < 0) & (self.bound_to >= 0) & (self.k_index < 0))
        ch = self.pos[self.bound_to[rx]] if len(rx) else np.zeros(0, dtype=np.int64)
        return frame(tx, self._vch(tx, self.pos[tx]), rx, self._vch(rx, ch), pay)

    def _deliver_announce(self, step, res):
        fr = res.frame
        for i in np.flatnonzero(res.sender >= 0):
            v = int(fr.rx[i])
            target, k = fr.payload[res.sender[i]]
            if target == v and self.k_index[v] < 0:
                self.k_index[v] = k
                self.colored_at[v] = step

    def end_step(self, step):
        self._end_cluster(step)
        for d in np.flatnonzero(self.is_dom & self.complete & (self.k_start < 0)):
            self.k_start[d] = 0
            self.k_index[d] = 0
            self.colored_at[d] = step

    def done(self, step):
        return bool(np.all(self.k_index >= 0))

    def finish(self, steps):
        m = self.sim.metrics
        if np.any(self.f_active):
            m.fail("follower_unacked", int(self.f_active.sum()))
        m.fail("double_bound", self.double_bound)
        inc = int((self.is_dom & ~self.complete).sum())
        if inc:
            m.fail("cluster_incomplete", inc)
        mism = 0
        for v in np.flatnonzero(self.is_rep & (self.k_start >= 0)):
            par = int(self.dom_of[v]) if self.pos[v] == 1 else self._node_at(v, int(self.pos[v]) // 2)
            allotted = self.child_report[par].get(int(self.pos[v]))
            if allotted is None or allotted[0] != len(self._own_range(v)):
                mism += 1
        if mism:
            m.fail("range_mismatch", mism)
        missing = int((self.k_index < 0).sum())
        if missing:
            m.fail("color_unannounced", missing)
        m.contention_violations = self.ledger.violations
        m.contention_rounds = self.ledger.rounds

    def _node_at(self, v, k) -> int:
        return self.st.clusters[int(self.dom_of[v])].reporters[k - 1]

    @property
    def colors(self) -> np.ndarray:
        return np.where(self.k_index >= 0, self.k_index * self.phi + self.col, 0)


@dataclass
class ColoringResult:
    colors: np.ndarray
    metrics: RunMetrics
    structure: Structure
    rounds: int
    protocol: Coloring | None = None

    @property
    def n_colors(self) -> int:
        return len(set(self.colors[self.colors > 0].tolist()))


def coloring_budget(st: Structure, consts: ProtocolConstants, ln_n: float, delta_hat: int, F: int) -> int:
    gamma = math.ceil(consts.gamma2 * ln_n)
    phases = math.ceil(math.log2(max(delta_hat, 2))) + 2 + math.ceil(delta_hat / (F * gamma * consts.lam * 0.1))
    steps = phases * (gamma + 1) + 4 * delta_hat + 8
    return 10 * steps * 2 * max(1, st.phi)


def color_network(topo: Topology, params: SinrParams, F: int, seed: int = 0,
                  consts: ProtocolConstants | None = None, structure: Structure | None = None,
                  structure_mode: str = "distributed", csa_mode: str = "auto", n_hat: int | None = None,
                  trace: Trace | None = None, round_budget: int | None = None,
                  delta_hat: int | None = None) -> ColoringResult:
    """Build (or reuse) the structure and color every node with ``k*phi + cluster_color``."""
    consts = consts or ProtocolConstants.practical()
    t0 = time.perf_counter()
    sim = Simulation(topo, params, F, seed=seed, n_hat=n_hat, trace=trace)
    sim.metrics.preset = consts.preset
    g = graph_at_radius(topo, params.r_eps)
    if not g.connected:
        sim.metrics.fail("disconnected")
        return ColoringResult(np.zeros(topo.n, dtype=np.int64), sim.metrics, structure, 0)
    delta_hat = delta_hat if delta_hat is not None else g.delta + 1
    st = structure if structure is not None else build_structure(sim, consts, structure_mode, csa_mode, delta_hat)
    if structure is not None:
        sim.metrics.phi = st.phi
        sim.metrics.f_v = [c.f_v for c in st.clusters.values()]
    proto = Coloring(st, consts)
    budget = round_budget or coloring_budget(st, consts, sim.ln_n, delta_hat, F)
    rounds = sim.run(proto, budget, stage="coloring")
    rounds = int((proto.colored_at.max(initial=-1) + 1) * proto.step_rounds)
    sim.metrics.stage_rounds["coloring"] = rounds
    sim.metrics.wall_time = time.perf_counter() - t0
    return ColoringResult(proto.colors, sim.metrics, st, rounds, proto)


def improper_edges(topo: Topology, radius: float, colors) -> list[tuple[int, int]]:
    """Brute-force scan of every pair within ``radius``; returns offending id pairs."""
    colors = np.asarray(colors)
    d = topo.distances()
    iu, ju = np.nonzero(np.triu(d <= radius, k=1))
    bad = colors[iu] == colors[ju]
    return [(int(topo.ids[a]), int(topo.ids[b])) for a, b in zip(iu[bad], ju[bad])]


def write_colors(path: str | Path, topo: Topology, colors, header=()) -> None:
    lines = [f"# {h}" for h in header] + ["id,color"] + [f"{i},{c}" for i, c in zip(topo.ids.tolist(), np.asarray(colors).tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_colors(path: str | Path, topo: Topology) -> np.ndarray:
    idx = {int(i): k for k, i in enumerate(topo.ids.tolist())}
    out = np.zeros(topo.n, dtype=np.int64)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("id"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2 or int(parts[0]) not in idx:
            raise ValueError(f"{path}:{lineno}: expected 'id,color' for a known node")
        out[idx[int(parts[0])]] = int(parts[1])
    return out
