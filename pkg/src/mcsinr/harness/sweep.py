"""Seed sweeps over channel counts with per-stage summary statistics."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..aggregation import aggregate
from ..coloring import color_network
from ..sim import Simulation, Trace, write_rows
from ..structure import build_structure, ruling_set
from .config import ExperimentConfig


def make_inputs(kind: str, n: int) -> list[int]:
    if kind == "ones":
        return [1] * n
    if kind == "ids":
        return list(range(n))
    if kind == "powers":
        return [1 << i for i in range(n)]
    raise ValueError(f"unknown input pattern {kind!r}")


def run_cell(cfg: ExperimentConfig, F: int, seed: int, trace: Trace | None = None) -> dict:
    """One (F, seed) run of the configured pipeline; returns a metrics row."""
    params, consts = cfg.params(), cfg.consts()
    topo = cfg.topo(seed)
    n_hat = cfg.n_hat(topo.n)
    extra: dict = {}
    if cfg.pipeline == "ruling_set":
        sim = Simulation(topo, params, F, seed=seed, n_hat=n_hat, trace=trace)
        sim.metrics.preset = consts.preset
        r = cfg.radius if cfg.radius is not None else params.r_t / 4
        out = ruling_set(sim, np.ones(topo.n, dtype=bool), r, consts)
        sim.metrics.add_rounds("ruling_set.phase1", out.phase1_rounds)
        sim.metrics.add_rounds("ruling_set.phase2", out.phase2_rounds)
        sim.metrics.mu["ruling_set"] = out.mu
        from .verify import check_ruling_set
        rep = check_ruling_set(topo, out.members, r)
        extra.update(independent_dominating=int(rep.ok), gamma_ln_n=out.params.rounds)
        m = sim.metrics
    elif cfg.pipeline == "structure":
        sim = Simulation(topo, params, F, seed=seed, n_hat=n_hat, trace=trace)
        sim.metrics.preset = consts.preset
        build_structure(sim, consts, cfg.structure_mode, cfg.csa_mode)
        m = sim.metrics
    elif cfg.pipeline == "aggregate":
        res = aggregate(topo, params, F, cfg.agg, make_inputs(cfg.inputs, topo.n), seed=seed, consts=consts,
                        structure_mode=cfg.structure_mode, csa_mode=cfg.csa_mode, n_hat=n_hat, trace=trace,
                        round_budget=cfg.round_budget)
        m = res.metrics
        extra.update(correct=int(res.correct and m.ok))
    else:
        res = color_network(topo, params, F, seed=seed, consts=consts, structure_mode=cfg.structure_mode,
                            csa_mode=cfg.csa_mode, n_hat=n_hat, trace=trace, round_budget=cfg.round_budget)
        m = res.metrics
        from .verify import check_coloring
        extra.update(proper=int(check_coloring(topo, res.colors, params.r_eps).ok), colors=res.n_colors)
    row = {"config_hash": cfg.hash, "pipeline": cfg.pipeline}
    row.update(m.row())
    row.update(extra)
    return row


def _cell(args):
    cfg_dict, F, seed = args
    return run_cell(ExperimentConfig.from_dict(cfg_dict), F, seed)


@dataclass
class SweepResult:
    rows: list[dict]
    summary: list[dict]

    def speedup(self, stage: str = "rounds.aggregation.follower") -> list[dict]:
        return [{"F": s["F"], "median_rounds": s.get(f"{stage}.median", ""), "p10": s.get(f"{stage}.p10", ""),
                 "p90": s.get(f"{stage}.p90", "")} for s in self.summary]


def summarize(rows: list[dict]) -> list[dict]:
    """Median, p10 and p90 of every per-stage round count, per F, over successful runs."""
    out = []
    for F in sorted({r["F"] for r in rows}):
        cell = [r for r in rows if r["F"] == F]
        ok = [r for r in cell if r["ok"]]
        s = {"F": F, "runs": len(cell), "failed": len(cell) - len(ok)}
        cols = sorted({k for r in cell for k in r if k.startswith("rounds.") or k == "total_rounds"})
        for c in cols:
            vals = [r[c] for r in ok if r.get(c, "") != ""]
            if vals:
                q = np.percentile(vals, [50, 10, 90])
                s[f"{c}.median"], s[f"{c}.p10"], s[f"{c}.p90"] = (float(x) for x in q)
        out.append(s)
    return out


def run_sweep(cfg: ExperimentConfig, workers: int | None = None, write: bool = True) -> SweepResult:
    """Every (F, seed) cell; failures are recorded and the sweep carries on.

    Rows are ordered by (F, seed) regardless of worker count, so the metrics
    file is byte-identical across reruns of the same configuration.
    """
    workers = workers if workers is not None else cfg.workers
    cells = [(F, s) for F in cfg.F for s in cfg.seeds]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_cell, [(cfg.to_dict(), F, s) for F, s in cells]))
    else:
        rows = [run_cell(cfg, F, s) for F, s in cells]
    rows = [_clean(r) for r in rows]
    res = SweepResult(rows, summarize(rows))
    if write:
        out = cfg.outputs
        if out.get("metrics"):
            write_rows(rows, out["metrics"], cfg.header())
        if out.get("summary"):
            write_rows(res.summary, out["summary"], cfg.header())
        if out.get("speedup"):
            write_rows(res.speedup(), out["speedup"], cfg.header())
    return res


def _clean(row: dict) -> dict:
    return {k: (float(v) if isinstance(v, (np.floating,)) else int(v) if isinstance(v, np.integer) else v)
            for k, v in row.items() if not (isinstance(v, float) and math.isnan(v))}


def stage_rows(metrics) -> list[dict]:
    """``stage,rounds,failed`` rows for one run."""
    failed = int(not metrics.ok)
    return [{"stage": k, "rounds": v, "failed": failed} for k, v in {**metrics.stage_rounds, **metrics.sub_rounds}.items()]


def write_stage_csv(path: str | Path, metrics, header=()) -> None:
    write_rows(stage_rows(metrics), path, header)
