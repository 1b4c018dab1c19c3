"""The aggregation structure: clusters, colors, size estimates and reporter trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..sim import Simulation
from ..topology import Topology, graph_at_radius
from .clustering import cluster, color_clusters, oracle_cluster, oracle_color
from .constants import ProtocolConstants, cluster_radius
from .csa import estimate_sizes
from .reporters import ReporterTree, elect_reporters

STRUCT_HEADER = "#mcsinr-structure v1"


@dataclass
class ClusterState:
    dominator: int
    members: list[int]
    color: int
    size_estimate: int
    f_v: int
    reporters: list[int]
    followers: list[int]
    trivial: bool = False

    @property
    def tree(self) -> ReporterTree:
        return ReporterTree(self.dominator, tuple(self.reporters))


@dataclass
class Structure:
    """Per-node arrays are indexed by topology position, not node id."""

    dom_of: np.ndarray
    color: np.ndarray
    phi: int
    estimate: np.ndarray
    trivial: np.ndarray
    f_v: np.ndarray
    role: np.ndarray
    channel: np.ndarray
    clusters: dict[int, ClusterState]
    r_c: float
    phi_bound: int = 0
    rounds: dict[str, int] = field(default_factory=dict)
    mu: dict[str, int] = field(default_factory=dict)
    csa: object | None = None

    @property
    def n(self) -> int:
        return len(self.dom_of)

    @property
    def dominators(self) -> np.ndarray:
        return np.flatnonzero(self.dom_of == np.arange(self.n))

    def pos(self) -> np.ndarray:
        """Heap position per node: 0 for dominators, k for reporter ``u_k``, -1 for followers."""
        pos = np.full(self.n, -1, dtype=np.int64)
        for c in self.clusters.values():
            pos[c.dominator] = 0
            for k, u in enumerate(c.reporters, start=1):
                if u >= 0:
                    pos[u] = k
        return pos

    @classmethod
    def assemble(cls, dom_of, color, phi, estimate, trivial, f_v, reporter_table, r_c,
                 phi_bound=0, rounds=None, mu=None) -> "Structure":
        n = len(dom_of)
        role = np.full(n, 2, dtype=np.int64)
        channel = np.zeros(n, dtype=np.int64)
        clusters = {}
        for d in np.flatnonzero(dom_of == np.arange(n)):
            d = int(d)
            reps = list(reporter_table.get(d, []))
            members = np.flatnonzero(dom_of == d).tolist()
            role[d] = 0
            for k, u in enumerate(reps, start=1):
                if u >= 0:
                    role[u] = 1
                    channel[u] = k
            rep_set = {u for u in reps if u >= 0}
            followers = [u for u in members if u != d and u not in rep_set]
            clusters[d] = ClusterState(d, members, int(color[d]), int(estimate[d]), int(f_v[d]),
                                       reps, followers, bool(trivial[d]))
        return cls(np.asarray(dom_of), np.asarray(color), int(phi), np.asarray(estimate),
                   np.asarray(trivial), np.asarray(f_v), role, channel, clusters, r_c,
                   phi_bound, dict(rounds or {}), dict(mu or {}))

    # text dump -------------------------------------------------------------

    def dumps(self, ids: np.ndarray, header=()) -> str:
        lines = [STRUCT_HEADER, *(f"# {h}" for h in header), f"phi {self.phi}", f"phi_bound {self.phi_bound}",
                 f"r_c {self.r_c!r}", "[clusters]", "# dominator color estimate f_v trivial"]
        for d, c in sorted(self.clusters.items(), key=lambda kv: int(ids[kv[0]])):
            lines.append(f"{ids[d]} {c.color} {c.size_estimate} {c.f_v} {int(c.trivial)}")
        lines += ["[members]", "# node dominator known_estimate known_f_v"]
        for v in np.argsort(ids, kind="stable"):
            lines.append(f"{ids[v]} {ids[self.dom_of[v]]} {self.estimate[v]} {self.f_v[v]}")
        lines += ["[reporters]", "# dominator channel reporter(-1 if none)"]
        for d, c in sorted(self.clusters.items(), key=lambda kv: int(ids[kv[0]])):
            for k, u in enumerate(c.reporters, start=1):
                lines.append(f"{ids[d]} {k} {ids[u] if u >= 0 else -1}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path, ids: np.ndarray, header=()) -> None:
        Path(path).write_text(self.dumps(ids, header))

    @classmethod
    def load(cls, path: str | Path, topo: Topology) -> "Structure":
        text = Path(path).read_text().splitlines()
        if not text or text[0].strip() != STRUCT_HEADER:
            raise ValueError(f"{path}: missing header {STRUCT_HEADER!r}")
        idx = {int(i): k for k, i in enumerate(topo.ids.tolist())}
        n = topo.n
        head: dict[str, str] = {}
        section = None
        cl_rows, mem_rows, rep_rows = [], [], []
        for lineno, line in enumerate(text[1:], start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                section = line
                continue
            parts = line.split()
            try:
                if section is None:
                    head[parts[0]] = parts[1]
                elif section == "[clusters]":
                    cl_rows.append([int(x) for x in parts[:5]])
                elif section == "[members]":
                    mem_rows.append([int(x) for x in parts[:4]])
                elif section == "[reporters]":
                    rep_rows.append([int(x) for x in parts[:3]])
                else:
                    raise ValueError(f"unknown section {section}")
            except (ValueError, IndexError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
        dom_of = np.full(n, -1, dtype=np.int64)
        estimate = np.zeros(n, dtype=np.int64)
        f_v = np.zeros(n, dtype=np.int64)
        for v, d, e, f in mem_rows:
            dom_of[idx[v]] = idx[d]
            estimate[idx[v]] = e
            f_v[idx[v]] = f
        if (dom_of < 0).any():
            raise ValueError(f"{path}: some nodes have no dominator")
        color_by_dom = {}
        trivial = np.zeros(n, dtype=bool)
        for d, col, e, f, triv in cl_rows:
            color_by_dom[idx[d]] = col
            trivial[idx[d]] = bool(triv)
        color = np.array([color_by_dom[int(d)] for d in dom_of], dtype=np.int64)
        trivial = trivial[dom_of]
        table: dict[int, list[int]] = {}
        for d, k, u in rep_rows:
            reps = table.setdefault(idx[d], [])
            while len(reps) < k:
                reps.append(-1)
            reps[k - 1] = idx[u] if u >= 0 else -1
        return cls.assemble(dom_of, color, int(head.get("phi", 1)), estimate, trivial, f_v, table,
                            float(head.get("r_c", "0")), int(head.get("phi_bound", 0)))


def build_structure(sim: Simulation, consts: ProtocolConstants, mode: str = "distributed",
                    csa_mode: str = "auto", delta_hat: int | None = None) -> Structure:
    """Clustering, cluster coloring, size estimation and reporter election in sequence.

    ``mode="oracle"`` replaces clustering and coloring with their centralized
    ground truth; size estimation and reporter election still run.
    ``delta_hat`` defaults to the maximum degree of the communication graph
    plus one.
    """
    p = sim.params
    rounds: dict[str, int] = {}
    if mode == "oracle":
        cl = oracle_cluster(sim.topo, cluster_radius(p))
        col = oracle_color(sim.topo, cl, p.r_half_eps)
        sim.metrics.phi, sim.metrics.phi_bound = col.phi, col.phi_bound
        sim.metrics.mu["clustering"] = cl.mu
    elif mode == "distributed":
        cl = cluster(sim, consts)
        rounds["clustering"] = cl.rounds
        col = color_clusters(sim, cl, consts)
        rounds["cluster_coloring"] = col.rounds
    else:
        raise ValueError(f"unknown structure mode {mode!r}")
    if delta_hat is None:
        delta_hat = graph_at_radius(sim.topo, p.r_eps).delta + 1
    est = estimate_sizes(sim, cl.dom_of, col.color, col.phi, delta_hat, consts, mode=csa_mode)
    rounds["csa"] = est.rounds
    el = elect_reporters(sim, cl.dom_of, col.color, col.phi, est.estimate, est.trivial, consts)
    rounds["reporters"] = el.rounds
    for k, v in rounds.items():
        sim.metrics.add_rounds(k, v)
    st = Structure.assemble(cl.dom_of, col.color, col.phi, est.estimate, est.trivial, el.f_v,
                            el.reporter_of_channel, cl.r_c, col.phi_bound, rounds, sim.metrics.mu)
    sim.metrics.f_v = [c.f_v for c in st.clusters.values()]
    st.csa = est
    return st
