"""Experiment configuration: a versioned JSON document with a stable hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .. import __version__
from ..sinr import SinrParams
from ..structure.constants import ProtocolConstants
from ..topology import Topology, blob_field, cluster_line, generate_topology, load_topology

CONFIG_VERSION = 1
PIPELINES = ("ruling_set", "structure", "aggregate", "color")
INPUT_KINDS = ("ones", "ids", "powers")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Schema (version 1), every key optional:

    ``topology``  {"kind", "n", "extent", "seed", ...} or {"path"}; ``seed``
                  may be an int (fixed topology) or "run" (one per run seed).
                  Kinds: those of ``generate_topology`` plus ``blob_field``
                  (``sizes``, ``spacing``, ``radius``) and ``cluster_line``
                  (``n_clusters``, ``per_cluster``, ``spacing``, ``spread``).
    ``sinr``      SinrParams fields.
    ``F``         list of channel counts.
    ``seeds``     list of run seeds (``MCSINR_SEED`` replaces it with one seed).
    ``preset``    "practical" or "theory"; ``constants`` overrides fields;
                  ``calibration`` names a file written by ``calibrate``.
    ``pipeline``  one of ruling_set, structure, aggregate, color.
    ``agg``, ``inputs``  aggregate function and input pattern (ones, ids, powers).
    ``structure_mode``, ``csa_mode``, ``radius`` (ruling_set only, default R_T/4).
    ``n_hat_power``  protocols assume n_hat = n ** n_hat_power (an over-estimate when above 1).
    ``round_budget``, ``workers``, ``outputs`` {"metrics", "summary", "speedup", "traces"}.
    """

    topology: dict = field(default_factory=lambda: {"kind": "uniform_disk", "n": 50, "extent": 60.0,
                                                    "seed": "run"})
    sinr: dict = field(default_factory=dict)
    F: list = field(default_factory=lambda: [1])
    seeds: list = field(default_factory=lambda: [0])
    preset: str = "practical"
    constants: dict = field(default_factory=dict)
    calibration: str | None = None
    pipeline: str = "aggregate"
    agg: str = "sum"
    inputs: str = "ones"
    structure_mode: str = "distributed"
    csa_mode: str = "auto"
    radius: float | None = None
    round_budget: int | None = None
    n_hat_power: float = 1.0
    workers: int = 1
    outputs: dict = field(default_factory=dict)
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}")
        if self.inputs not in INPUT_KINDS:
            raise ConfigError(f"inputs must be one of {INPUT_KINDS}")
        if not self.F or any(int(f) < 1 for f in self.F):
            raise ConfigError("F must be a non-empty list of positive integers")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        self.F = [int(f) for f in self.F]
        self.seeds = [int(s) for s in self.seeds]
        if self.n_hat_power < 1:
            raise ConfigError("n_hat_power must be at least 1")
        self.params()
        self.consts()

    def n_hat(self, n: int) -> int:
        return max(n, int(round(n ** self.n_hat_power)))

    # serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        """Covers every field that can change results; output paths and worker count do not."""
        d = {k: v for k, v in self.to_dict().items() if k not in ("outputs", "workers")}
        return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]

    def header(self) -> list[str]:
        return [f"mcsinr {__version__} config_hash={self.hash}", f"config={self.canonical()}"]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path, env: bool = True) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
        cfg = cls.from_dict(d)
        return cfg.with_env() if env else cfg

    def with_env(self) -> "ExperimentConfig":
        s = os.environ.get("MCSINR_SEED")
        if s is None or s == "":
            return self
        try:
            seed = int(s)
        except ValueError:
            raise ConfigError(f"MCSINR_SEED must be an integer, got {s!r}") from None
        return dataclasses.replace(self, seeds=[seed])

    # builders ----------------------------------------------------------------

    def params(self) -> SinrParams:
        try:
            return SinrParams(**self.sinr)
        except TypeError as exc:
            raise ConfigError(f"bad sinr section: {exc}") from None

    def consts(self) -> ProtocolConstants:
        over: dict[str, Any] = dict(self.constants)
        if self.calibration:
            from .calibrate import Calibration
            cal = Calibration.load(self.calibration)
            over.setdefault("kappa", cal.kappa)
            if self.preset == "theory":
                over.setdefault("kappa1", cal.kappa1)
        try:
            return ProtocolConstants.preset_named(self.preset, **over)
        except TypeError as exc:
            raise ConfigError(f"bad constants section: {exc}") from None

    def topo(self, run_seed: int) -> Topology:
        t = dict(self.topology)
        if "path" in t:
            return load_topology(t["path"])
        kind = t.pop("kind", "uniform_disk")
        seed = t.pop("seed", "run")
        seed = run_seed if seed == "run" else int(seed)
        if kind == "blob_field":
            return blob_field(list(t["sizes"]), float(t.get("spacing", 200.0)), float(t.get("radius", 3.0)), seed)
        if kind == "cluster_line":
            return cluster_line(int(t["n_clusters"]), int(t["per_cluster"]), float(t.get("spacing", 60.0)),
                                float(t.get("spread", 2.0)), seed)
        return generate_topology(kind, int(t.pop("n")), float(t.pop("extent", 100.0)), seed, **t)
