"""Brute-force checks over protocol outputs and traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..sinr import SinrParams, SlotFrame
from ..structure.reporters import ReporterTree
from ..structure.state import Structure
from ..topology import Topology

CHECKS = ("ruling_set", "clustering", "cluster_coloring", "csa", "tree", "aggregation", "coloring",
          "contention", "sinr_oracle")


@dataclass
class CheckReport:
    check: str
    basis: str
    violations: list[str] = field(default_factory=list)
    stats: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def format(self, limit: int = 20) -> str:
        head = f"[{'PASS' if self.ok else 'FAIL'}] {self.check}: {self.basis}"
        lines = [head] + [f"  {k}: {v}" for k, v in self.stats.items()]
        lines += [f"  violation: {v}" for v in self.violations[:limit]]
        if len(self.violations) > limit:
            lines.append(f"  ... {len(self.violations) - limit} more")
        return "\n".join(lines)


def check_ruling_set(topo: Topology, members, r: float, candidates=None) -> CheckReport:
    rep = CheckReport("ruling_set", f"members pairwise more than r={r:g} apart; every candidate within 2r of one")
    members = np.asarray(members, dtype=bool)
    cand = np.ones(topo.n, dtype=bool) if candidates is None else np.asarray(candidates, dtype=bool)
    d = topo.distances()
    m = np.flatnonzero(members)
    sub = d[np.ix_(m, m)]
    iu, ju = np.nonzero(np.triu(sub <= r, k=1))
    for a, b in zip(m[iu], m[ju]):
        rep.violations.append(f"members {topo.ids[a]} and {topo.ids[b]} at distance {d[a, b]:.4g} <= {r:g}")
    if len(m):
        far = np.flatnonzero(cand & (d[:, m].min(axis=1) > 2 * r))
    else:
        far = np.flatnonzero(cand)
    for v in far:
        rep.violations.append(f"node {topo.ids[v]} has no member within {2 * r:g}")
    rep.stats.update(members=len(m), candidates=int(cand.sum()))
    return rep


def check_clustering(topo: Topology, dom_of, r_c: float, mu: int | None = None) -> CheckReport:
    bound = "" if mu is None else f"; at most mu={mu} dominators in any r_c-ball"
    rep = CheckReport("clustering", f"every node within r_c={r_c:.4g} of its dominator{bound}")
    dom_of = np.asarray(dom_of)
    d = topo.distances()
    is_dom = dom_of == np.arange(topo.n)
    for v in range(topo.n):
        u = int(dom_of[v])
        if u < 0 or dom_of[u] != u:
            rep.violations.append(f"node {topo.ids[v]} points at non-dominator")
        elif d[v, u] > r_c:
            rep.violations.append(f"node {topo.ids[v]} is {d[v, u]:.4g} from dominator {topo.ids[u]}")
    # balls of radius r_c centred on every node
    counts = (d[:, is_dom] <= r_c).sum(axis=1)
    density = int(counts.max()) if len(counts) else 0
    if mu is not None and density > mu:
        v = int(np.argmax(counts))
        rep.violations.append(f"{density} dominators within r_c of node {topo.ids[v]} exceed mu={mu}")
    rep.stats.update(clusters=int(is_dom.sum()), density=density)
    return rep


def check_cluster_coloring(topo: Topology, dom_of, color, phi: int, radius: float) -> CheckReport:
    rep = CheckReport("cluster_coloring", f"same-color dominators more than {radius:.4g} apart; colors in 1..phi")
    dom_of, color = np.asarray(dom_of), np.asarray(color)
    doms = np.flatnonzero(dom_of == np.arange(topo.n))
    d = topo.distances()
    for v in doms:
        if not 1 <= color[v] <= phi:
            rep.violations.append(f"dominator {topo.ids[v]} has color {color[v]} outside 1..{phi}")
    for v in range(topo.n):
        if color[v] != color[dom_of[v]]:
            rep.violations.append(f"node {topo.ids[v]} disagrees with its dominator's color")
    sub = d[np.ix_(doms, doms)]
    same = color[doms][:, None] == color[doms][None, :]
    iu, ju = np.nonzero(np.triu((sub <= radius) & same, k=1))
    for a, b in zip(doms[iu], doms[ju]):
        rep.violations.append(f"dominators {topo.ids[a]} and {topo.ids[b]} share color {color[a]} "
                              f"at distance {d[a, b]:.4g}")
    rep.stats.update(phi=phi, colors_used=len(set(color[doms].tolist())))
    return rep


def check_tdma_delivery(topo: Topology, params: SinrParams, dom_of, color, trials: int = 20,
                        seed: int = 0) -> CheckReport:
    """One random transmitter per cluster of the active color; every other member must decode it."""
    from ..sinr import Medium
    rep = CheckReport("cluster_coloring", "TDMA slot with one transmitter per cluster reaches all members")
    dom_of, color = np.asarray(dom_of), np.asarray(color)
    med = Medium(topo, params)
    rng = np.random.default_rng(seed)
    doms = np.flatnonzero(dom_of == np.arange(topo.n))
    members = {int(d): np.flatnonzero(dom_of == d) for d in doms}
    delivered = attempted = 0
    for t in range(trials):
        for c in np.unique(color[doms]):
            active = [d for d in doms if color[d] == c]
            tx = np.array([rng.choice(members[int(d)]) for d in active], dtype=np.int64)
            rx = np.setdiff1d(np.concatenate([members[int(d)] for d in active]), tx)
            res = med.resolve(SlotFrame(tx, np.ones(len(tx), dtype=np.int64), rx,
                                        np.ones(len(rx), dtype=np.int64)))
            got = res.sender_node()
            for i, v in enumerate(rx):
                attempted += 1
                if got[i] >= 0 and dom_of[got[i]] == dom_of[v]:
                    delivered += 1
                else:
                    rep.violations.append(f"trial {t} color {c}: node {topo.ids[v]} missed its cluster's sender")
    rep.stats.update(attempted=attempted, delivered=delivered)
    return rep


def csa_interval(consts) -> tuple[float, float]:
    """Accepted range of estimate / true dominatee count."""
    return 1.0 / (2 * consts.lam), 2 * consts.gamma1 / consts.omega1


def check_csa(st: Structure, consts, min_fraction: float = 1.0) -> CheckReport:
    lo, hi = csa_interval(consts)
    rep = CheckReport("csa", f"estimate / dominatee count in [{lo:g}, {hi:g}] for at least "
                             f"{min_fraction:.0%} of non-trivial clusters")
    ratios = []
    for d, c in st.clusters.items():
        true = len(c.members) - 1
        if true == 0:
            continue
        ratios.append((d, c.size_estimate / true))
    inside = [r for _, r in ratios if lo - 1e-9 <= r <= hi + 1e-9]
    frac = len(inside) / len(ratios) if ratios else 1.0
    if frac < min_fraction:
        for d, r in ratios:
            if not lo - 1e-9 <= r <= hi + 1e-9:
                rep.violations.append(f"cluster {d}: ratio {r:.3g} outside [{lo:g}, {hi:g}]")
    rep.stats.update(clusters=len(ratios), inside_fraction=round(frac, 4))
    return rep


def check_tree(st: Structure) -> CheckReport:
    rep = CheckReport("tree", "one reporter per channel in each cluster, all inside the cluster")
    slots_ok = 0
    for d, c in st.clusters.items():
        if len(c.reporters) != c.f_v:
            rep.violations.append(f"cluster {d}: {len(c.reporters)} reporter slots for f_v={c.f_v}")
        for k, u in enumerate(c.reporters, start=1):
            if u < 0:
                rep.violations.append(f"cluster {d}: channel {k} has no reporter")
            elif st.dom_of[u] != d:
                rep.violations.append(f"cluster {d}: reporter {u} on channel {k} belongs elsewhere")
        if len(set(u for u in c.reporters if u >= 0)) != sum(u >= 0 for u in c.reporters):
            rep.violations.append(f"cluster {d}: a node holds two channels")
        t = ReporterTree(d, tuple(c.reporters))
        slots_ok += t.convergecast_slots() == t.paper_slots()
    rep.stats.update(clusters=len(st.clusters), slot_formula_matches=slots_ok)
    return rep


def check_aggregation(values, expected) -> CheckReport:
    rep = CheckReport("aggregation", "every node holds the fold over all inputs")
    for i, v in enumerate(values):
        if v != expected:
            rep.violations.append(f"node index {i} holds {v!r}, expected {expected!r}")
    rep.stats.update(nodes=len(values))
    return rep


def check_powers(values, n: int) -> CheckReport:
    """Sum of distinct powers of two: the bit set exposes lost or repeated inputs."""
    rep = CheckReport("aggregation", "bit set of the sum of 2^i inputs equals {0..n-1}")
    want = (1 << n) - 1
    for i, v in enumerate(values):
        if v is None or int(v) != want:
            bits = {b for b in range(max(n, int(v or 0).bit_length())) if int(v or 0) >> b & 1}
            rep.violations.append(f"node index {i}: missing {sorted(set(range(n)) - bits)}, "
                                  f"extra {sorted(bits - set(range(n)))}")
    return rep


def check_coloring(topo: Topology, colors, radius: float, budget: int | None = None) -> CheckReport:
    from ..coloring import improper_edges
    rep = CheckReport("coloring", "adjacent nodes differ in color")
    colors = np.asarray(colors)
    for a, b in improper_edges(topo, radius, colors):
        rep.violations.append(f"edge ({a}, {b}) has both ends colored {colors[topo.index_of(a)]}")
    uncolored = np.flatnonzero(colors <= 0)
    for v in uncolored:
        rep.violations.append(f"node {topo.ids[v]} is uncolored")
    used = len(set(colors[colors > 0].tolist()))
    if budget is not None and used > budget:
        rep.violations.append(f"{used} colors exceed the budget {budget}")
    rep.stats.update(colors=used, budget=budget)
    return rep


def check_contention(ledger) -> CheckReport:
    rep = CheckReport("contention", "summed follower probability per cluster at most lambda * f_v")
    if ledger.violations:
        rep.violations.append(f"{ledger.violations} cluster-rounds over the cap, clusters "
                              f"{sorted(ledger.violating_clusters)[:10]}, worst ratio {ledger.worst_ratio:.3g}")
    rep.stats.update(rounds=ledger.rounds, worst_ratio=round(ledger.worst_ratio, 4))
    return rep


def brute_force_receptions(xy: np.ndarray, params: SinrParams, frame: SlotFrame) -> list[int]:
    """Reference evaluator: for every listener, the unique sender meeting the threshold or -1.

    Loops over every (listener, sender) pair and sums interference from
    scratch, sharing no code with the vectorized engine.
    """
    out = []
    tx_set = set(int(t) for t in frame.tx)
    for v, ch in zip(frame.rx, frame.rx_ch):
        best = -1
        if int(v) not in tx_set:
            powers = []
            for u, c in zip(frame.tx, frame.tx_ch):
                if c == ch:
                    dist = math.dist(xy[v], xy[u])
                    powers.append((int(u), params.P / dist ** params.alpha))
            total = sum(p for _, p in powers)
            hits = [u for u, p in powers if p / (params.N + total - p) >= params.beta]
            if len(hits) > 1:
                sig = dict(powers)
                hits = [max(hits, key=lambda u: sig[u])]
            best = hits[0] if hits else -1
        out.append(best)
    return out


def check_sinr_trace(topo: Topology, params: SinrParams, records: list[dict]) -> CheckReport:
    """Replay every traced slot through the reference evaluator."""
    rep = CheckReport("sinr_oracle", "traced receptions match a brute-force SINR evaluation")
    idx = {int(i): k for k, i in enumerate(topo.ids.tolist())}
    slots = 0
    for rec in records:
        if "tx" not in rec:
            continue
        slots += 1
        tx = np.array([idx[t[0]] for t in rec["tx"]], dtype=np.int64)
        tx_ch = np.array([t[1] for t in rec["tx"]], dtype=np.int64)
        rx = np.array([idx[t[0]] for t in rec["rx"]], dtype=np.int64)
        rx_ch = np.array([t[1] for t in rec["rx"]], dtype=np.int64)
        want = brute_force_receptions(topo.xy, params, SlotFrame(tx, tx_ch, rx, rx_ch))
        for t, w in zip(rec["rx"], want):
            got = t[2]
            exp = int(topo.ids[w]) if w >= 0 else None
            if (got if got >= 0 else None) != exp:
                rep.violations.append(f"stage {rec.get('stage')} round {rec.get('round')} slot {rec.get('slot')}: "
                                      f"node {t[0]} traced {got}, reference {exp}")
    rep.stats.update(slots=slots)
    return rep
