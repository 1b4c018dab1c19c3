import json

import numpy as np
import pytest

from mcsinr import cli
from mcsinr.harness.calibrate import Calibration, calibrate, clear_rates
from mcsinr.harness.config import ConfigError, ExperimentConfig
from mcsinr.harness.sweep import make_inputs, run_cell, run_sweep, summarize
from mcsinr.harness.verify import check_tdma_delivery
from mcsinr.sinr import SinrParams
from mcsinr.structure import cluster_radius, oracle_cluster, oracle_color
from mcsinr.topology import Topology, generate_topology, save_topology


def small_cfg(**kw):
    base = dict(topology={"kind": "uniform_disk", "n": 30, "extent": 40.0, "seed": "run"}, F=[1, 2],
                seeds=[0, 1], pipeline="aggregate")
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_config_hash_stable_and_sensitive():
    a, b = small_cfg(), small_cfg()
    assert a.hash == b.hash and len(a.hash) == 16
    assert small_cfg(F=[1, 4]).hash != a.hash


def test_config_rejects_bad_input(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({"seedz": [1]})
    with pytest.raises(ConfigError):
        small_cfg(pipeline="teleport")
    with pytest.raises(ConfigError):
        small_cfg(F=[0])
    f = tmp_path / "c.json"
    f.write_text('{\n  "F": [1],\n  oops\n}')
    with pytest.raises(ConfigError, match=":3:"):
        ExperimentConfig.load(f)


def test_config_save_load_and_env(tmp_path, monkeypatch):
    cfg = small_cfg()
    cfg.save(tmp_path / "c.json")
    assert ExperimentConfig.load(tmp_path / "c.json", env=False).hash == cfg.hash
    monkeypatch.setenv("MCSINR_SEED", "42")
    assert ExperimentConfig.load(tmp_path / "c.json").seeds == [42]
    monkeypatch.setenv("MCSINR_SEED", "x")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "c.json")


def test_make_inputs():
    assert make_inputs("powers", 4) == [1, 2, 4, 8]
    assert make_inputs("ids", 3) == [0, 1, 2]
    with pytest.raises(ValueError):
        make_inputs("noise", 3)


@pytest.mark.parametrize("pipeline", ["ruling_set", "structure", "aggregate", "color"])
def test_run_cell_rows(pipeline):
    row = run_cell(small_cfg(pipeline=pipeline), 2, 0)
    assert row["pipeline"] == pipeline and row["F"] == 2 and row["seed"] == 0
    assert row["config_hash"] == small_cfg(pipeline=pipeline).hash
    extra = {"ruling_set": "independent_dominating", "aggregate": "correct", "color": "proper"}.get(pipeline)
    if extra:
        assert row[extra] == 1


def test_sweep_deterministic_and_worker_independent(tmp_path):
    out1 = {"metrics": str(tmp_path / "m1.csv"), "summary": str(tmp_path / "s.csv"),
            "speedup": str(tmp_path / "sp.csv")}
    cfg = small_cfg(outputs=out1)
    r1 = run_sweep(cfg, workers=1)
    r2 = run_sweep(small_cfg(outputs={"metrics": str(tmp_path / "m2.csv")}), workers=2)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_time"} for r in rows]
    assert strip(r1.rows) == strip(r2.rows)
    assert [(r["F"], r["seed"]) for r in r1.rows] == [(1, 0), (1, 1), (2, 0), (2, 1)]
    head = (tmp_path / "m1.csv").read_text().splitlines()[0]
    assert head.startswith("# mcsinr") and cfg.hash in head
    assert (tmp_path / "sp.csv").read_text().count("\n") == 5
    run_sweep(cfg, workers=1)
    assert (tmp_path / "m1.csv").read_text().splitlines()[2:] == (tmp_path / "m2.csv").read_text().splitlines()[2:]


def test_summarize_percentiles():
    rows = [{"F": 1, "ok": 1, "rounds.a": v} for v in range(1, 11)] + [{"F": 1, "ok": 0, "rounds.a": 999}]
    s = summarize(rows)[0]
    assert s["runs"] == 11 and s["failed"] == 1
    assert s["rounds.a.median"] == pytest.approx(5.5)
    assert s["rounds.a.p10"] == pytest.approx(1.9)


def test_tdma_delivery_on_oracle_structure():
    p = SinrParams()
    topo = generate_topology("uniform_disk", 120, 60.0, 3)
    cl = oracle_cluster(topo, cluster_radius(p))
    col = oracle_color(topo, cl, p.r_half_eps)
    rep = check_tdma_delivery(topo, p, cl.dom_of, col.color, trials=3)
    assert rep.ok and rep.stats["delivered"] == rep.stats["attempted"] > 0


def test_calibration_small(tmp_path):
    p = SinrParams()
    pr = clear_rates(p, 60, 80.0, p.r_t / 4, 0, rounds=200)
    assert pr.pairs >= 0 and ((pr.rates >= 0) & (pr.rates <= 1)).all()
    cal = calibrate(p, n=60, extent=80.0, seeds=2, rounds=200)
    assert cal.kappa >= 1 / (2 * 200)
    cal.save(tmp_path / "k.json")
    back = Calibration.load(tmp_path / "k.json")
    assert back == cal
    assert back.constants().kappa == cal.kappa


# command line -----------------------------------------------------------------


def test_cli_usage_errors(tmp_path, capsys):
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE
    assert cli.main(["verify", "tree"]) == cli.EXIT_USAGE
    t = tmp_path / "t.txt"
    assert cli.main(["gen-topo", "--n", "10", "--extent", "20", "-o", str(t)]) == 0
    assert cli.main(["verify", "tree", "--topo", str(t)]) == cli.EXIT_USAGE
    assert "needs --structure" in capsys.readouterr().err
    assert cli.main(["run", "--topo", str(tmp_path / "missing.txt")]) == cli.EXIT_USAGE


def test_cli_improper_coloring_fixture(tmp_path, capsys):
    topo = Topology(np.array([1, 2, 3]), np.array([[0.0, 0.0], [5.0, 0.0], [200.0, 0.0]]))
    save_topology(topo, tmp_path / "t.txt")
    (tmp_path / "c.csv").write_text("id,color\n1,3\n2,3\n3,3\n")
    rc = cli.main(["verify", "coloring", "--topo", str(tmp_path / "t.txt"), "--colors", str(tmp_path / "c.csv")])
    assert rc == cli.EXIT_VERIFY
    assert "edge (1, 2)" in capsys.readouterr().out


def test_cli_ruling_set_fixture(tmp_path, capsys):
    topo = Topology(np.array([10, 11, 12]), np.array([[0.0, 0.0], [3.0, 0.0], [40.0, 0.0]]))
    save_topology(topo, tmp_path / "t.txt")
    (tmp_path / "m.txt").write_text("10 11 12\n")
    rc = cli.main(["verify", "ruling_set", "--topo", str(tmp_path / "t.txt"), "--members", str(tmp_path / "m.txt"),
                   "--r", "10"])
    assert rc == cli.EXIT_VERIFY
    assert "members 10 and 11" in capsys.readouterr().out


def test_cli_end_to_end_n200(tmp_path, capsys):
    t = str(tmp_path / "t.txt")
    assert cli.main(["gen-topo", "--n", "200", "--extent", "90", "--seed", "5", "-o", t]) == 0
    s, c, v, m = (str(tmp_path / x) for x in ("s.txt", "c.csv", "v.csv", "m.csv"))
    assert cli.main(["run", "--topo", t, "--pipeline", "aggregate", "--F", "4", "--seed", "5",
                     "--structure-out", s, "--values-out", v, "--metrics-out", m]) == 0
    assert cli.main(["run", "--topo", t, "--pipeline", "color", "--F", "4", "--seed", "5",
                     "--structure-in", s, "--colors-out", c]) == 0
    checks = [["clustering", "--structure", s], ["cluster_coloring", "--structure", s],
              ["csa", "--structure", s], ["tree", "--structure", s], ["coloring", "--colors", c],
              ["aggregation", "--values", v, "--expected", "200"], ["contention", "--metrics", m]]
    for args in checks:
        assert cli.main(["verify", args[0], "--topo", t, *args[1:]]) == 0, args
    out = capsys.readouterr().out
    assert "[FAIL]" not in out
    for path in (s, c, v, m):
        head = open(path).read().splitlines()[:3]
        assert any("config_hash=" in line and "mcsinr 0.1.0" in line for line in head), path


def test_cli_trace_replay(tmp_path):
    t = str(tmp_path / "t.txt")
    cli.main(["gen-topo", "--n", "25", "--extent", "30", "-o", t])
    tr = str(tmp_path / "tr.jsonl.gz")
    assert cli.main(["run", "--topo", t, "--pipeline", "structure", "--F", "2", "--trace", tr]) == 0
    assert cli.main(["verify", "sinr_oracle", "--topo", t, "--trace", tr]) == 0


def test_cli_seed_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MCSINR_SEED", "9")
    cli.main(["gen-topo", "--n", "5"])
    a = capsys.readouterr().out
    monkeypatch.delenv("MCSINR_SEED")
    cli.main(["gen-topo", "--n", "5", "--seed", "9"])
    b = capsys.readouterr().out
    body = lambda s: [line for line in s.splitlines() if not line.startswith("#")]
    assert body(a) == body(b)


def test_cli_sinr_eval(tmp_path, capsys):
    topo = Topology(np.array([1, 2, 3]), np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]]))
    save_topology(topo, tmp_path / "t.txt")
    (tmp_path / "f.txt").write_text("1 tx 1\n2 rx 1\n3 rx 2\n")
    for cmd in (["sinr-eval"], ["sinr", "eval"]):
        assert cli.main([*cmd, "--topo", str(tmp_path / "t.txt"), "--frame", str(tmp_path / "f.txt")]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "receiver,sender,sinr,sensed"
        r, s, sinr, sensed = lines[1].split(",")
        assert (r, s) == ("2", "1") and float(sinr) == pytest.approx(1e-3 / 1e-6)
        assert lines[2] == "3,,," + repr(1e-6)
    (tmp_path / "bad.txt").write_text("1 shout 1\n")
    assert cli.main(["sinr-eval", "--topo", str(tmp_path / "t.txt"), "--frame", str(tmp_path / "bad.txt")]) == 2


def test_cli_sweep(tmp_path, capsys):
    cfg = small_cfg(seeds=[0], F=[1])
    cfg.save(tmp_path / "c.json")
    m = tmp_path / "m.csv"
    assert cli.main(["sweep", str(tmp_path / "c.json"), "--metrics-out", str(m)]) == 0
    assert f"config_hash={cfg.hash}" in capsys.readouterr().out
    assert cfg.hash in m.read_text().splitlines()[0]
    data = json.loads(m.read_text().splitlines()[1].split("=", 1)[1])
    assert data["F"] == [1]
