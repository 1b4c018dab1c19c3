"""Clustering around a dominating set, and TDMA coloring of the clusters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..sim import Protocol, Simulation
from ..topology import Topology
from .constants import ProtocolConstants, cluster_radius, phi_bound
from .ruling import DominatingSet, density, ds_rounds, frame, ruling_set


@dataclass
class Clustering:
    dom_of: np.ndarray
    r_c: float
    mu: int
    rounds: int = 0

    @property
    def dominators(self) -> np.ndarray:
        return np.flatnonzero(self.dom_of == np.arange(len(self.dom_of)))

    def members(self, dom: int) -> np.ndarray:
        return np.flatnonzero(self.dom_of == dom)


def cluster(sim: Simulation, consts: ProtocolConstants, stage: str = "clustering") -> Clustering:
    """Distributed clustering: every node ends with a dominator within ``r_c``."""
    r_c = cluster_radius(sim.params)
    everyone = np.ones(sim.n, dtype=bool)
    ds = DominatingSet(everyone, np.ones(sim.n, dtype=np.int64), r_c, consts, tag="cluster")
    rounds = sim.run(ds, ds_rounds(sim, consts), stage=stage)
    dom_of = ds.dom_of.copy()
    if (dom_of < 0).any():
        sim.metrics.fail("unassigned_node", int((dom_of < 0).sum()))
    mu = density(sim.medium.topo.distances(), ds.dominators, np.ones(sim.n, dtype=np.int64), r_c)
    sim.metrics.mu["clustering"] = mu
    return Clustering(dom_of, r_c, mu, rounds)


def oracle_cluster(topo: Topology, r_c: float) -> Clustering:
    """Centralized ground truth: nodes in id order claim every unclaimed node within ``r_c``."""
    d = topo.distances()
    dom_of = np.full(topo.n, -1, dtype=np.int64)
    for v in np.argsort(topo.ids, kind="stable"):
        if dom_of[v] >= 0:
            continue
        grab = (d[v] <= r_c) & (dom_of < 0)
        dom_of[grab] = v
    doms = dom_of == np.arange(topo.n)
    mu = density(d, doms, np.ones(topo.n, dtype=np.int64), r_c)
    return Clustering(dom_of, r_c, mu, 0)


@dataclass
class ClusterColoring:
    color: np.ndarray           # per node: its cluster's color, 0 if unknown
    phi: int
    phi_bound: int
    phase_mu: list[int] = field(default_factory=list)
    rounds: int = 0


class ColorAnnounce(Protocol):
    """Freshly colored dominators broadcast their color once; members listen."""

    name = "color_announce"

    def __init__(self, senders: np.ndarray, listeners: np.ndarray, dom_of: np.ndarray, color: int):
        self.senders = senders
        self.listeners = listeners
        self.dom_of = dom_of
        self.color = color
        self.learned = np.zeros(0, dtype=np.int64)

    def act(self, step, slot):
        tx, rx = self.senders, self.listeners
        return frame(tx, np.ones(len(tx)), rx, np.ones(len(rx)))

    def deliver(self, step, slot, res):
        got = res.sender >= 0
        v = res.frame.rx[got]
        s = res.frame.tx[res.sender[got]]
        self.learned = v[self.dom_of[v] == s]

    def done(self, step):
        return step >= 1


def color_clusters(sim: Simulation, clustering: Clustering, consts: ProtocolConstants,
                   stage: str = "cluster_coloring", max_phases: int | None = None) -> ClusterColoring:
    """Color dominators phase by phase with ``(R_eps/2, R_eps)``-ruling sets.

    Phase ``i`` gives color ``i`` to a ruling set of the still-uncolored
    dominators; each freshly colored dominator then announces its color to
    its cluster.  The color count actually used is the TDMA period.
    """
    p = sim.params
    radius = p.r_half_eps
    dom_of = clustering.dom_of
    n = sim.n
    is_dom = dom_of == np.arange(n)
    bound = phi_bound(clustering.mu, radius, clustering.r_c)
    limit = max_phases if max_phases is not None else bound
    color = np.zeros(n, dtype=np.int64)
    rounds = 0
    phase_mu = []
    i = 0
    while (is_dom & (color == 0)).any() and i < limit:
        i += 1
        cand = is_dom & (color == 0)
        out = ruling_set(sim, cand, radius, consts, stage=f"{stage}.{i}", tag=f"color{i}")
        rounds += out.phase1_rounds + out.phase2_rounds
        phase_mu.append(out.mu)
        new = np.flatnonzero(out.members)
        color[new] = i
        listeners = np.flatnonzero(~is_dom & (color == 0) & np.isin(dom_of, new))
        ann = ColorAnnounce(new, listeners, dom_of, i)
        rounds += sim.run(ann, 1, stage=f"{stage}.{i}.announce")
        color[ann.learned] = i
    uncolored = int((is_dom & (color == 0)).sum())
    if uncolored:
        sim.metrics.fail("uncolored_cluster", uncolored)
    unknown = int(((color == 0) & (color[dom_of] > 0)).sum())
    if unknown:
        sim.metrics.fail("color_unknown", unknown)
    phi = int(color.max()) if n else 0
    sim.metrics.phi = phi
    sim.metrics.phi_bound = bound
    sim.metrics.mu["cluster_coloring"] = max(phase_mu, default=0)
    return ClusterColoring(color, max(phi, 1), bound, phase_mu, rounds)


def oracle_color(topo: Topology, clustering: Clustering, radius: float) -> ClusterColoring:
    """Greedy coloring of the dominator conflict graph (distance at most ``radius``) in id order."""
    d = topo.distances()
    doms = clustering.dominators
    order = doms[np.argsort(topo.ids[doms], kind="stable")]
    dcolor: dict[int, int] = {}
    for v in order:
        taken = {dcolor[u] for u in dcolor if d[v, u] <= radius}
        c = 1
        while c in taken:
            c += 1
        dcolor[int(v)] = c
    color = np.array([dcolor[int(clustering.dom_of[v])] for v in range(topo.n)], dtype=np.int64)
    phi = int(color.max())
    bound = phi_bound(clustering.mu, radius, clustering.r_c)
    return ClusterColoring(color, phi, bound, [], 0)
