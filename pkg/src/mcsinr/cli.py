"""Command line entry point.

Exit codes: 0 ok, 1 verification failure, 2 usage error, 3 run failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .sinr import ParamsError, SinrParams, SlotFrame
from .topology import (TopologyError, blob_field, cluster_line, dumps_topology, generate_topology, load_topology,
                       save_topology)

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_RUN = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _sinr_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("physical model")
    g.add_argument("--power", type=float, default=1.0)
    g.add_argument("--alpha", type=float, default=3.0)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=1e-6)
    g.add_argument("--epsilon", type=float, default=1 / 3)


def _params(a) -> SinrParams:
    return SinrParams(P=a.power, alpha=a.alpha, beta=a.beta, N=a.noise, epsilon=a.epsilon)


def _seed(a) -> int:
    s = os.environ.get("MCSINR_SEED")
    if s:
        try:
            return int(s)
        except ValueError:
            raise UsageError(f"MCSINR_SEED must be an integer, got {s!r}") from None
    return a.seed


def _topo_args(p: argparse.ArgumentParser, required: bool = False) -> None:
    p.add_argument("--topo", help="topology file (id x y lines)", required=required)


def _load_topo(a):
    if not a.topo:
        raise UsageError("--topo is required")
    return load_topology(a.topo)


# gen-topo --------------------------------------------------------------------

def cmd_gen_topo(a) -> int:
    seed = _seed(a)
    if a.kind == "blob_field":
        sizes = [int(x) for x in a.sizes.split(",")] if a.sizes else [a.n]
        topo = blob_field(sizes, a.spacing, a.radius, seed)
    elif a.kind == "cluster_line":
        topo = cluster_line(a.n_clusters or 5, a.per_cluster, a.spacing, a.spread or 2.0, seed)
    else:
        kw = {}
        if a.n_clusters is not None:
            kw["n_clusters"] = a.n_clusters
        if a.spread is not None:
            kw["spread"] = a.spread
        topo = generate_topology(a.kind, a.n, a.extent, seed, **kw)
    header = _provenance(a, seed)
    if a.out:
        save_topology(topo, a.out, header)
    else:
        sys.stdout.write(dumps_topology(topo, header))
    return EXIT_OK


# run -------------------------------------------------------------------------

def _provenance(a, seed: int) -> list[str]:
    """Version plus a hash of the effective arguments, for every output file of a run."""
    args = {k: v for k, v in sorted(vars(a).items()) if k != "func"}
    args["seed"] = seed
    if getattr(a, "topo", None):
        args["topo_sha"] = hashlib.sha256(Path(a.topo).read_bytes()).hexdigest()[:16]
    h = hashlib.sha256(json.dumps(args, sort_keys=True, default=str).encode()).hexdigest()[:16]
    return [f"mcsinr {__version__} config_hash={h}", f"config={json.dumps(args, sort_keys=True, default=str)}"]


def cmd_run(a) -> int:
    from .aggregation import AGGREGATES, aggregate, read_inputs
    from .coloring import color_network, write_colors
    from .harness.sweep import make_inputs, write_stage_csv
    from .sim import Simulation, Trace, write_rows
    from .structure import ProtocolConstants, Structure, build_structure

    topo = _load_topo(a)
    params = _params(a)
    seed = _seed(a)
    over = {}
    if a.calibration:
        from .harness.calibrate import Calibration
        cal = Calibration.load(a.calibration)
        over["kappa"] = cal.kappa
        if a.preset == "theory":
            over["kappa1"] = cal.kappa1
    consts = ProtocolConstants.preset_named(a.preset, **over)
    trace = Trace(enabled=bool(a.trace))
    n_hat = max(topo.n, int(round(topo.n ** a.n_hat_power)))
    st_in = Structure.load(a.structure_in, topo) if a.structure_in else None
    header = _provenance(a, seed)
    if a.pipeline == "structure":
        sim = Simulation(topo, params, a.F, seed=seed, n_hat=n_hat, trace=trace)
        sim.metrics.preset = consts.preset
        st = build_structure(sim, consts, a.structure_mode, a.csa_mode)
        metrics = sim.metrics
    elif a.pipeline == "aggregate":
        if a.agg not in AGGREGATES:
            raise UsageError(f"--agg must be one of {sorted(AGGREGATES)}")
        inputs = read_inputs(a.inputs, topo) if a.inputs else make_inputs(a.input_pattern, topo.n)
        res = aggregate(topo, params, a.F, a.agg, inputs, seed=seed, consts=consts, structure=st_in,
                        structure_mode=a.structure_mode, csa_mode=a.csa_mode, n_hat=n_hat, trace=trace,
                        round_budget=a.round_budget)
        st, metrics = res.structure, res.metrics
        if a.values_out:
            lines = [f"# {h}" for h in header] + ["id,value"] + [f"{i},{v}" for i, v in zip(topo.ids.tolist(), res.values)]
            Path(a.values_out).write_text("\n".join(lines) + "\n")
        print(f"expected={res.expected} correct={int(res.correct)} stages={res.stages}")
    else:
        res = color_network(topo, params, a.F, seed=seed, consts=consts, structure=st_in,
                            structure_mode=a.structure_mode, csa_mode=a.csa_mode, n_hat=n_hat, trace=trace,
                            round_budget=a.round_budget)
        st, metrics = res.structure, res.metrics
        if a.colors_out:
            write_colors(a.colors_out, topo, res.colors, header)
        print(f"colors={res.n_colors} rounds={res.rounds}")
    if a.structure_out and st is not None:
        st.save(a.structure_out, topo.ids, header)
    if a.stages_out:
        write_stage_csv(a.stages_out, metrics, header)
    if a.metrics_out:
        write_rows([metrics.row()], a.metrics_out, header)
    if a.trace:
        trace.records.insert(0, {"event": "provenance", "header": header})
        trace.write(a.trace)
    print(f"ok={int(metrics.ok)} failures={metrics.failures or '-'} total_rounds={metrics.total_rounds}")
    return EXIT_OK if metrics.ok else EXIT_RUN


# sweep -----------------------------------------------------------------------

def cmd_sweep(a) -> int:
    from .harness.config import ExperimentConfig
    from .harness.sweep import run_sweep
    cfg = ExperimentConfig.load(a.config)
    out = dict(cfg.outputs)
    for key in ("metrics", "summary", "speedup"):
        v = getattr(a, f"{key}_out")
        if v:
            out[key] = v
    cfg.outputs = out
    res = run_sweep(cfg, workers=a.workers)
    failed = sum(1 for r in res.rows if not r["ok"])
    print(f"config_hash={cfg.hash} runs={len(res.rows)} failed={failed}")
    for s in res.summary:
        keys = [k for k in s if k.endswith(".median")]
        print(f"F={s['F']} " + " ".join(f"{k[:-7]}={s[k]:g}" for k in keys))
    return EXIT_OK


# verify ----------------------------------------------------------------------

def cmd_verify(a) -> int:
    from .harness import verify as V
    from .sim import Trace
    from .structure import ProtocolConstants, Structure
    from .structure.constants import cluster_radius

    params = _params(a)
    reports = []
    need_topo = a.check not in ("contention",)
    topo = _load_topo(a) if need_topo else None
    st = Structure.load(a.structure, topo) if a.structure else None

    def want_structure():
        if st is None:
            raise UsageError(f"check {a.check} needs --structure")
        return st

    if a.check == "ruling_set":
        if not a.members:
            raise UsageError("ruling_set needs --members (file of member ids)")
        ids = {int(x) for x in Path(a.members).read_text().split()}
        mem = np.isin(topo.ids, list(ids))
        reports.append(V.check_ruling_set(topo, mem, a.r if a.r else params.r_t / 4))
    elif a.check == "clustering":
        s = want_structure()
        reports.append(V.check_clustering(topo, s.dom_of, s.r_c or cluster_radius(params), a.mu))
    elif a.check == "cluster_coloring":
        s = want_structure()
        reports.append(V.check_cluster_coloring(topo, s.dom_of, s.color, s.phi, params.r_half_eps))
        reports.append(V.check_tdma_delivery(topo, params, s.dom_of, s.color, trials=a.trials))
    elif a.check == "csa":
        consts = ProtocolConstants.preset_named(a.preset)
        reports.append(V.check_csa(want_structure(), consts, a.min_fraction))
    elif a.check == "tree":
        reports.append(V.check_tree(want_structure()))
    elif a.check == "aggregation":
        if not a.values:
            raise UsageError("aggregation needs --values (id,value CSV)")
        rows = [line for line in Path(a.values).read_text().splitlines() if line and not line.startswith("#")]
        vals = [line.split(",")[1] for line in rows[1:]]
        expected = a.expected
        if expected is None:
            raise UsageError("aggregation needs --expected")
        reports.append(V.check_aggregation(vals, expected))
    elif a.check == "coloring":
        if not a.colors:
            raise UsageError("coloring needs --colors (id,color CSV)")
        from .coloring import read_colors
        reports.append(V.check_coloring(topo, read_colors(a.colors, topo), params.r_eps, a.budget))
    elif a.check == "contention":
        if not a.metrics:
            raise UsageError("contention needs --metrics (CSV written by run or sweep)")
        import csv
        rows = list(csv.DictReader(line for line in open(a.metrics) if not line.startswith("#")))
        rep = V.CheckReport("contention", "summed follower probability per cluster at most lambda * f_v")
        for r in rows:
            if int(r.get("contention_violations") or 0):
                rep.violations.append(f"seed {r['seed']} F {r['F']}: {r['contention_violations']} cluster-rounds over the cap")
        rep.stats["runs"] = len(rows)
        reports.append(rep)
    elif a.check == "sinr_oracle":
        if not a.trace:
            raise UsageError("sinr_oracle needs --trace")
        reports.append(V.check_sinr_trace(topo, params, Trace.read(a.trace)))
    for r in reports:
        print(r.format())
    return EXIT_OK if all(r.ok for r in reports) else EXIT_VERIFY


# calibrate -------------------------------------------------------------------

def cmd_calibrate(a) -> int:
    from .harness.calibrate import calibrate
    cal = calibrate(_params(a), radius=a.r, n=a.n, extent=a.extent, seeds=a.seeds, rounds=a.rounds,
                    quantile=a.quantile)
    cal.provenance = _provenance(a, 0)[0]
    cal.save(a.out)
    print(f"kappa={cal.kappa:.6g} kappa1={cal.kappa1:.6g} mu_max={cal.mu_max} -> {a.out}")
    return EXIT_OK


# sinr eval -------------------------------------------------------------------

def read_frame(path: str | Path, topo) -> SlotFrame:
    """``node action channel`` lines with action ``tx`` or ``rx``."""
    tx, tx_ch, rx, rx_ch = [], [], [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3 or parts[1] not in ("tx", "rx"):
            raise UsageError(f"{path}:{lineno}: expected 'node tx|rx channel'")
        try:
            v, c = topo.index_of(int(parts[0])), int(parts[2])
        except (ValueError, KeyError) as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
        (tx if parts[1] == "tx" else rx).append(v)
        (tx_ch if parts[1] == "tx" else rx_ch).append(c)
    i64 = lambda x: np.asarray(x, dtype=np.int64)
    frame = SlotFrame(i64(tx), i64(tx_ch), i64(rx), i64(rx_ch))
    frame.validate(topo.n)
    return frame


def cmd_sinr_eval(a) -> int:
    from .sinr import Medium
    topo = _load_topo(a)
    frame = read_frame(a.frame, topo)
    res = Medium(topo, _params(a)).resolve(frame)
    out = ["receiver,sender,sinr,sensed"]
    for k, v in enumerate(frame.rx):
        s = res.sender[k]
        if s >= 0:
            out.append(f"{topo.ids[v]},{topo.ids[frame.tx[s]]},{float(res.sinr[k])!r},{float(res.sensed[k])!r}")
        else:
            out.append(f"{topo.ids[v]},,,{float(res.sensed[k])!r}")
    sys.stdout.write("\n".join(out) + "\n")
    return EXIT_OK


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcsinr", description="Multi-channel SINR aggregation and coloring simulator")
    p.add_argument("--version", action="version", version=f"mcsinr {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-topo", help="generate a topology file")
    g.add_argument("--kind", default="uniform_disk",
                   choices=["uniform_disk", "grid", "exponential_chain", "clustered", "blob_field", "cluster_line"])
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--extent", type=float, default=100.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-clusters", type=int)
    g.add_argument("--spread", type=float)
    g.add_argument("--sizes", help="comma-separated blob sizes (blob_field)")
    g.add_argument("--spacing", type=float, default=60.0)
    g.add_argument("--radius", type=float, default=3.0)
    g.add_argument("--per-cluster", type=int, default=8)
    g.add_argument("--out", "-o")
    g.set_defaults(func=cmd_gen_topo)

    r = sub.add_parser("run", help="run one pipeline on a topology")
    _topo_args(r, required=True)
    r.add_argument("--pipeline", choices=["structure", "aggregate", "color"], default="aggregate")
    r.add_argument("--F", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--preset", choices=["practical", "theory"], default="practical")
    r.add_argument("--calibration", help="constants file written by calibrate")
    r.add_argument("--agg", default="sum")
    r.add_argument("--inputs", help="file of 'id value' lines")
    r.add_argument("--input-pattern", choices=["ones", "ids", "powers"], default="ones")
    r.add_argument("--structure-mode", choices=["distributed", "oracle"], default="distributed")
    r.add_argument("--csa-mode", choices=["auto", "large", "small"], default="auto")
    r.add_argument("--n-hat-power", type=float, default=1.0)
    r.add_argument("--round-budget", type=int)
    r.add_argument("--structure-in")
    r.add_argument("--structure-out")
    r.add_argument("--colors-out")
    r.add_argument("--values-out")
    r.add_argument("--stages-out", help="CSV stage,rounds,failed")
    r.add_argument("--metrics-out")
    r.add_argument("--trace", help="write the slot trace (JSONL, gzip if it ends in .gz)")
    _sinr_args(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a configured seed sweep")
    s.add_argument("config")
    s.add_argument("--workers", type=int)
    s.add_argument("--metrics-out")
    s.add_argument("--summary-out")
    s.add_argument("--speedup-out", help="CSV F,median_rounds,p10,p90")
    s.set_defaults(func=cmd_sweep)

    from .harness.verify import CHECKS
    v = sub.add_parser("verify", help="check outputs against brute-force oracles")
    v.add_argument("check", choices=CHECKS)
    _topo_args(v)
    v.add_argument("--structure")
    v.add_argument("--members")
    v.add_argument("--r", type=float)
    v.add_argument("--mu", type=int, help="density bound for the clustering check")
    v.add_argument("--colors")
    v.add_argument("--budget", type=int)
    v.add_argument("--values")
    v.add_argument("--expected")
    v.add_argument("--metrics")
    v.add_argument("--trace")
    v.add_argument("--preset", choices=["practical", "theory"], default="practical")
    v.add_argument("--min-fraction", type=float, default=0.95)
    v.add_argument("--trials", type=int, default=5)
    _sinr_args(v)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("calibrate", help="estimate kappa and kappa1 by Monte Carlo")
    c.add_argument("--out", "-o", default="constants.json")
    c.add_argument("--r", type=float)
    c.add_argument("--n", type=int, default=200)
    c.add_argument("--extent", type=float, default=150.0)
    c.add_argument("--seeds", type=int, default=30)
    c.add_argument("--rounds", type=int, default=3000)
    c.add_argument("--quantile", type=float, default=0.1)
    _sinr_args(c)
    c.set_defaults(func=cmd_calibrate)

    for name in ("sinr-eval",):
        e = sub.add_parser(name, help="resolve one frame and print receptions")
        _topo_args(e, required=True)
        e.add_argument("--frame", required=True, help="file of 'node tx|rx channel' lines")
        _sinr_args(e)
        e.set_defaults(func=cmd_sinr_eval)
    sn = sub.add_parser("sinr", help="physical-layer debugging")
    snsub = sn.add_subparsers(dest="sinr_cmd", required=True)
    e = snsub.add_parser("eval", help="resolve one frame and print receptions")
    _topo_args(e, required=True)
    e.add_argument("--frame", required=True)
    _sinr_args(e)
    e.set_defaults(func=cmd_sinr_eval)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    from .harness.config import ConfigError
    try:
        return a.func(a)
    except (UsageError, ParamsError, TopologyError, ConfigError, FileNotFoundError) as exc:
        print(f"mcsinr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"mcsinr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
