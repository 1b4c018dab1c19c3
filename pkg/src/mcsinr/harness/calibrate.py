"""Monte-Carlo calibration of the clear-reception probability constants."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..sim import Simulation
from ..sinr import SinrParams, clear_mask
from ..structure.constants import ProtocolConstants, cluster_radius
from ..structure.ruling import DominatingSet, density, ds_rounds, frame
from ..topology import generate_topology


@dataclass
class PairRates:
    radius: float
    mu: int
    pairs: int
    rates: np.ndarray

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.rates, q)) if len(self.rates) else 0.0


def clear_rates(params: SinrParams, n: int, extent: float, radius: float, seed: int,
                rounds: int = 2000, consts: ProtocolConstants | None = None) -> PairRates:
    """Per-pair clear-reception rates among density-thinned senders.

    Candidates are thinned by the decay dominating set at ``radius``; every
    survivor then transmits with probability ``1/(2 mu)`` per round.  For each
    ordered pair ``(v, u)`` within ``radius`` the rate is the fraction of
    rounds where ``v`` sent, ``u`` listened, and ``u`` got a clear reception
    from ``v``.
    """
    consts = consts or ProtocolConstants.practical()
    topo = generate_topology("uniform_disk", n, extent, seed)
    sim = Simulation(topo, params, 1, seed=seed)
    ones = np.ones(n, dtype=np.int64)
    ds = DominatingSet(np.ones(n, dtype=bool), ones, radius, consts)
    sim.run(ds, ds_rounds(sim, consts), count_budget_failure=False)
    doms = np.flatnonzero(ds.dominators)
    d = topo.distances()
    mu = max(1, density(d, ds.dominators, ones, radius))
    q = 1.0 / (2 * mu)
    sub = d[np.ix_(doms, doms)]
    pv, pu = np.nonzero((sub <= radius) & ~np.eye(len(doms), dtype=bool))
    if len(pv) == 0:
        return PairRates(radius, mu, 0, np.zeros(0))
    pair_id = np.full((len(doms), len(doms)), -1, dtype=np.int64)
    pair_id[pv, pu] = np.arange(len(pv))
    local = np.full(n, -1, dtype=np.int64)
    local[doms] = np.arange(len(doms))
    att = np.zeros(len(pv))
    suc = np.zeros(len(pv))
    rng = np.random.default_rng(seed)
    for _ in range(rounds):
        sending = rng.random(len(doms)) < q
        tx = doms[sending]
        rx = doms[~sending]
        att += sending[pv] & ~sending[pu]
        res = sim.medium.resolve(frame(tx, np.ones(len(tx)), rx, np.ones(len(rx))))
        ok = np.flatnonzero(clear_mask(res, sim.know, radius))
        if len(ok):
            s = local[res.frame.tx[res.sender[ok]]]
            r = local[res.frame.rx[ok]]
            ids = pair_id[s, r]
            np.add.at(suc, ids[ids >= 0], 1)
    seen = att > 0
    return PairRates(radius, mu, len(pv), suc[seen] / att[seen])


@dataclass
class Calibration:
    kappa: float
    kappa1: float
    quantile: float
    radius: float
    cluster_radius: float
    seeds: int
    rounds: int
    n: int
    extent: float
    mu_max: int
    provenance: str = ""

    def constants(self) -> ProtocolConstants:
        return ProtocolConstants.theory(self.kappa, self.kappa1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Calibration":
        return cls(**json.loads(Path(path).read_text()))


def calibrate(params: SinrParams, radius: float | None = None, n: int = 200, extent: float = 150.0,
              seeds: int = 30, rounds: int = 3000, quantile: float = 0.1) -> Calibration:
    """Estimate the per-pair clear-reception probability at ``radius`` and at the cluster radius.

    ``kappa`` is the ``quantile`` of per-pair rates at ``radius`` (default a
    quarter of the transmission range); ``kappa1`` is the same statistic at
    the cluster radius, measured over a disk scaled to keep the density.
    """
    radius = radius if radius is not None else params.r_t / 4
    rc = cluster_radius(params)
    at_r, at_rc, mus = [], [], []
    for s in range(seeds):
        a = clear_rates(params, n, extent, radius, s, rounds)
        b = clear_rates(params, n, extent * rc / radius, rc, s, rounds)
        at_r.append(a.rates)
        at_rc.append(b.rates)
        mus += [a.mu, b.mu]
    ra, rb = np.concatenate(at_r), np.concatenate(at_rc)
    k = float(np.quantile(ra, quantile)) if len(ra) else 0.0
    k1 = float(np.quantile(rb, quantile)) if len(rb) else 0.0
    floor = 1.0 / (seeds * rounds)
    return Calibration(max(k, floor), max(k1, floor), quantile, radius, rc, seeds, rounds, n, extent,
                       max(mus))
