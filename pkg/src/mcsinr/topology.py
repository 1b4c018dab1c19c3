"""Node placement, topology generators and communication-graph analytics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

TOPO_HEADER = "#mcsinr-topo v1"
KINDS = ("uniform_disk", "grid", "exponential_chain", "clustered")

# 2**1023 is the largest power of two a double can hold; beyond that the
# chain coordinates overflow to inf.
MAX_CHAIN_NODES = 1023


class TopologyError(ValueError):
    pass


class CapacityError(TopologyError):
    pass


@dataclass(frozen=True, eq=False)
class Topology:
    ids: np.ndarray
    xy: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        if len(ids) == 0:
            raise TopologyError("a topology needs at least one node")
        if len(ids) != len(xy):
            raise TopologyError("ids and coordinates differ in length")
        if (ids < 0).any() or len(np.unique(ids)) != len(ids):
            raise TopologyError("node ids must be unique non-negative integers")
        if not np.isfinite(xy).all():
            raise TopologyError("node coordinates must be finite")
        if len(np.unique(xy, axis=0)) != len(xy):
            raise TopologyError("two nodes share identical coordinates")
        ids.setflags(write=False)
        xy.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "xy", xy)

    @property
    def n(self) -> int:
        return len(self.ids)

    def distances(self) -> np.ndarray:
        diff = self.xy[:, None, :] - self.xy[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def index_of(self, node_id: int) -> int:
        hits = np.flatnonzero(self.ids == node_id)
        if len(hits) == 0:
            raise KeyError(node_id)
        return int(hits[0])

    def same_as(self, other: "Topology") -> bool:
        return np.array_equal(self.ids, other.ids) and np.array_equal(self.xy, other.xy)


def _dedupe(xy: np.ndarray, rng: np.random.Generator, scale: float) -> np.ndarray:
    # Exact coordinate collisions are practically impossible with continuous
    # sampling, but the invariant is hard, so nudge any that occur.
    while len(np.unique(xy, axis=0)) != len(xy):
        _, first = np.unique(xy, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(len(xy)), first)
        xy[dup] += rng.normal(0.0, scale * 1e-6, size=(len(dup), 2))
    return xy


def generate_topology(kind: str, n: int, extent: float = 100.0, seed: int = 0,
                      n_clusters: int | None = None, spread: float | None = None) -> Topology:
    """Build a topology of ``n`` nodes with ids ``0..n-1``.

    ``extent`` is the disk radius for ``uniform_disk``, the square side for
    ``grid`` and ``clustered``; ``exponential_chain`` ignores it and puts node
    ``i`` at ``(2**(i+1), 0)``.  ``clustered`` draws ``n_clusters`` uniform
    centers and scatters nodes around them with Gaussian ``spread``.
    """
    if n < 1:
        raise TopologyError("n must be at least 1")
    if kind not in KINDS:
        raise TopologyError(f"unknown topology kind {kind!r}")
    if kind != "exponential_chain" and not extent > 0:
        raise TopologyError("extent must be positive")
    rng = np.random.default_rng(seed)
    ids = np.arange(n)

    if kind == "exponential_chain":
        if n > MAX_CHAIN_NODES:
            raise CapacityError(f"2**{n} overflows double-precision coordinates")
        xs = np.array([2.0 ** (i + 1) for i in range(n)])
        return Topology(ids, np.column_stack([xs, np.zeros(n)]))

    if kind == "uniform_disk":
        r = extent * np.sqrt(rng.random(n))
        theta = rng.random(n) * 2 * np.pi
        xy = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    elif kind == "grid":
        side = math.ceil(math.sqrt(n))
        step = extent / max(side - 1, 1)
        cells = [(i % side, i // side) for i in range(n)]
        xy = np.array(cells, dtype=np.float64) * step
    else:
        k = n_clusters if n_clusters is not None else max(1, n // 50)
        sigma = spread if spread is not None else extent / 20.0
        centers = rng.random((k, 2)) * extent
        owner = rng.integers(0, k, size=n)
        xy = centers[owner] + rng.normal(0.0, sigma, size=(n, 2))
    return Topology(ids, _dedupe(xy, rng, extent))


def cluster_line(n_clusters: int, per_cluster: int, spacing: float, spread: float,
                 seed: int = 0) -> Topology:
    """Tight node groups placed ``spacing`` apart along the x axis."""
    if n_clusters < 1 or per_cluster < 1:
        raise TopologyError("need at least one group of one node")
    rng = np.random.default_rng(seed)
    centers = np.column_stack([np.arange(n_clusters) * spacing, np.zeros(n_clusters)])
    owner = np.repeat(np.arange(n_clusters), per_cluster)
    xy = centers[owner] + rng.uniform(-spread, spread, size=(len(owner), 2))
    return Topology(np.arange(len(owner)), _dedupe(xy, rng, spacing))


@dataclass
class CommGraph:
    adjacency: list[frozenset[int]]
    delta: int
    diameter: int | None
    connected: bool = field(default=True)

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    @property
    def n(self) -> int:
        return len(self.adjacency)


def graph_at_radius(topo: Topology, radius: float) -> CommGraph:
    d = topo.distances()
    within = d <= radius
    np.fill_diagonal(within, False)
    adj = [frozenset(np.flatnonzero(row).tolist()) for row in within]
    delta = int(within.sum(axis=1).max())
    hops = shortest_path(csr_matrix(within), method="D", unweighted=True)
    if np.isinf(hops).any():
        return CommGraph(adj, delta, None, False)
    return CommGraph(adj, delta, int(hops.max()), True)


def build_comm_graph(topo: Topology, params) -> CommGraph:
    """Nodes are adjacent iff their distance is at most ``params.r_eps``.

    ``diameter`` is ``None`` (and ``connected`` false) for disconnected graphs.
    """
    return graph_at_radius(topo, params.r_eps)


def dumps_topology(topo: Topology, header=()) -> str:
    lines = [TOPO_HEADER] + [f"# {h}" for h in header]
    # repr() of a float is the shortest string that round-trips exactly
    lines += [f"{i} {float(x)!r} {float(y)!r}" for i, (x, y) in zip(topo.ids.tolist(), topo.xy)]
    return "\n".join(lines) + "\n"


def save_topology(topo: Topology, path: str | Path, header=()) -> None:
    Path(path).write_text(dumps_topology(topo, header))


def load_topology(path: str | Path) -> Topology:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != TOPO_HEADER:
        raise TopologyError(f"{path}: missing header {TOPO_HEADER!r}")
    ids, xy = [], []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise TopologyError(f"{path}:{lineno}: expected 'id x y'")
        ids.append(int(parts[0]))
        xy.append((float(parts[1]), float(parts[2])))
    return Topology(np.array(ids), np.array(xy))


def blob_field(sizes: list[int], spacing: float, radius: float, seed: int = 0) -> Topology:
    """Tight disks of ``sizes`` nodes each, centers on a square lattice ``spacing`` apart."""
    if not sizes or min(sizes) < 1:
        raise TopologyError("every blob needs at least one node")
    rng = np.random.default_rng(seed)
    side = math.ceil(math.sqrt(len(sizes)))
    parts = []
    for i, m in enumerate(sizes):
        c = np.array([i % side, i // side], dtype=np.float64) * spacing
        r = radius * np.sqrt(rng.random(m))
        th = rng.random(m) * 2 * np.pi
        parts.append(c + np.column_stack([r * np.cos(th), r * np.sin(th)]))
    xy = np.vstack(parts)
    return Topology(np.arange(len(xy)), _dedupe(xy, rng, spacing))
