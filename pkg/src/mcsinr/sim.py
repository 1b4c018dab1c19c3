"""Synchronous round/slot scheduler, per-node random streams, traces and run metrics."""

from __future__ import annotations

import csv
import gzip
import io
import json
import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .sinr import Knowledge, Medium, SinrParams, SlotFrame, SlotResult
from .topology import Topology

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        return x ^ (x >> np.uint64(31))


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode())


class Streams:
    """Counter-based per-node randomness.

    Every draw is a hash of (seed, node id, purpose, counters), so a node's
    randomness depends only on its own id and the point in the protocol where
    it draws.  Nothing a trace consumer or another node does can shift it.
    """

    def __init__(self, seed: int, ids: np.ndarray):
        self.seed = int(seed)
        self._ids = np.asarray(ids, dtype=np.uint64)
        self._id_keys = _splitmix(self._ids * _MIX2)

    def _key(self, purpose: str, counters: Sequence[int]) -> np.uint64:
        k = _splitmix(np.array([self.seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
        for c in (_tag(purpose), *counters):
            k = _splitmix(k ^ np.uint64(int(c) & 0xFFFFFFFFFFFFFFFF))
        return k[0]

    def bits(self, purpose: str, *counters: int, nodes: np.ndarray | None = None) -> np.ndarray:
        keys = self._id_keys if nodes is None else self._id_keys[nodes]
        return _splitmix(keys ^ self._key(purpose, counters))

    def uniform(self, purpose: str, *counters: int, nodes: np.ndarray | None = None) -> np.ndarray:
        b = self.bits(purpose, *counters, nodes=nodes)
        return (b >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def integers(self, low: int, high: int, purpose: str, *counters: int,
                 nodes: np.ndarray | None = None) -> np.ndarray:
        """Uniform integers in ``[low, high)``."""
        u = self.uniform(purpose, *counters, nodes=nodes)
        return low + np.minimum((u * (high - low)).astype(np.int64), high - low - 1)


def tdma_gate(cluster_color: int, round: int, phi: int) -> bool:
    if not 1 <= cluster_color <= phi:
        raise ValueError(f"color {cluster_color} outside 1..{phi}")
    return round % phi + 1 == cluster_color


def virtual_channel(color: np.ndarray | int, channel: np.ndarray | int, F: int):
    """Encode (cluster color, physical channel) as one channel index.

    Clusters of different colors never share a physical round, so resolving
    every color class in one frame on disjoint virtual channels is equivalent
    to resolving them in their separate TDMA rounds.
    """
    return (np.asarray(color) - 1) * F + np.asarray(channel)


def physical_channel(vch: np.ndarray | int, F: int):
    vch = np.asarray(vch)
    return (vch - 1) // F + 1, (vch - 1) % F + 1


@dataclass
class RoundClock:
    round: int = 0
    slot: int = 0
    slots_per_round: int = 1

    def __post_init__(self):
        if not 1 <= self.slots_per_round <= 5:
            raise ValueError("slots_per_round must lie in 1..5")


class Trace:
    """Append-only per-slot records, serialized as JSON lines."""

    def __init__(self, enabled: bool = True, payloads: bool = True):
        self.enabled = enabled
        self.payloads = payloads
        self.records: list[dict] = []

    def slot(self, stage: str, rnd: int, slot: str, frame: SlotFrame, result: SlotResult,
             ids: np.ndarray, extra: dict | None = None) -> None:
        if not self.enabled:
            return
        rec: dict[str, Any] = {"stage": stage, "round": rnd, "slot": slot}
        tx = [[int(ids[u]), int(c)] for u, c in zip(frame.tx, frame.tx_ch)]
        if self.payloads and frame.payload is not None:
            for row, p in zip(tx, frame.payload):
                row.append(_jsonable(p))
        rec["tx"] = tx
        senders = result.sender_node()
        rec["rx"] = [[int(ids[v]), int(c), int(ids[s]) if s >= 0 else -1]
                     for v, c, s in zip(frame.rx, frame.rx_ch, senders)]
        if extra:
            rec.update(extra)
        self.records.append(rec)

    def event(self, stage: str, rnd: int, kind: str, **data) -> None:
        if self.enabled:
            self.records.append({"stage": stage, "round": rnd, "event": kind,
                                 **{k: _jsonable(v) for k, v in data.items()}})

    def dumps(self) -> bytes:
        return b"".join(json.dumps(r, sort_keys=True, separators=(",", ":")).encode() + b"\n"
                        for r in self.records)

    def write(self, path: str | Path) -> None:
        data = self.dumps()
        path = Path(path)
        if path.suffix == ".gz":
            # no mtime or name in the header keeps the output byte-identical
            with open(path, "wb") as fh, gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(data)
        else:
            path.write_bytes(data)

    @staticmethod
    def read(path: str | Path) -> list[dict]:
        path = Path(path)
        raw = gzip.open(path).read() if path.suffix == ".gz" else path.read_bytes()
        out = []
        for lineno, line in enumerate(raw.decode().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed trace record ({exc.msg})") from None
        return out


def _jsonable(v):
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


# Failure reason codes.  The set is fixed so failure rates compare across runs.
REASONS = (
    "budget_exhausted",
    "unassigned_node",
    "uncolored_cluster",
    "color_unknown",
    "csa_no_termination",
    "empty_channel",
    "multiple_reporters",
    "reporter_unknown",
    "follower_unacked",
    "double_bound",
    "cluster_incomplete",
    "backbone_unjoined",
    "backbone_incomplete",
    "range_mismatch",
    "color_unannounced",
    "disconnected",
)


@dataclass
class RunMetrics:
    seed: int = 0
    F: int = 1
    n: int = 0
    stage_rounds: dict[str, int] = field(default_factory=dict)
    sub_rounds: dict[str, int] = field(default_factory=dict)   # concurrent sub-stages, not summed
    failures: dict[str, int] = field(default_factory=dict)
    warnings: dict[str, int] = field(default_factory=dict)
    mu: dict[str, int] = field(default_factory=dict)
    phi: int | None = None
    phi_bound: int | None = None
    f_v: list[int] = field(default_factory=list)
    contention_violations: int = 0
    contention_rounds: int = 0
    wall_time: float = 0.0
    preset: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def fail(self, reason: str, count: int = 1) -> None:
        if reason not in REASONS:
            raise ValueError(f"unknown failure reason {reason!r}")
        if count:
            self.failures[reason] = self.failures.get(reason, 0) + count

    def warn(self, reason: str, count: int = 1) -> None:
        if count:
            self.warnings[reason] = self.warnings.get(reason, 0) + count

    def add_rounds(self, stage: str, rounds: int) -> None:
        self.stage_rounds[stage] = self.stage_rounds.get(stage, 0) + int(rounds)

    @property
    def total_rounds(self) -> int:
        return sum(self.stage_rounds.values())

    def row(self) -> dict[str, Any]:
        fv = self.f_v or [0]
        row = {
            "seed": self.seed, "F": self.F, "n": self.n, "preset": self.preset,
            "ok": int(self.ok),
            "failures": ";".join(f"{k}={v}" for k, v in sorted(self.failures.items())),
            "warnings": ";".join(f"{k}={v}" for k, v in sorted(self.warnings.items())),
            "phi": self.phi if self.phi is not None else "",
            "phi_bound": self.phi_bound if self.phi_bound is not None else "",
            "mu": ";".join(f"{k}={v}" for k, v in sorted(self.mu.items())),
            "f_v_min": min(fv), "f_v_max": max(fv), "f_v_mean": round(float(np.mean(fv)), 6),
            "contention_violations": self.contention_violations,
            "total_rounds": self.total_rounds,
        }
        for stage, r in {**self.stage_rounds, **self.sub_rounds}.items():
            row[f"rounds.{stage}"] = r
        return row


def write_rows(rows: Iterable[dict], path_or_buf, header_comments: Sequence[str] = ()) -> None:
    rows = list(rows)
    cols: list[str] = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        for line in header_comments:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=cols, restval="", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if own:
            fh.close()


def rows_to_text(rows: Iterable[dict], header_comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    write_rows(rows, buf, header_comments)
    return buf.getvalue()


class Protocol:
    """A protocol driver advanced by the scheduler.

    Each step the scheduler walks ``slots()`` in order, asks ``act`` for the
    frame, resolves it and hands the result to ``deliver``.  Drivers keep the
    state of every node in arrays and may only update a node from what that
    node itself sent, heard or sensed.  ``step_rounds`` converts scheduler
    steps into global rounds: TDMA-virtualized drivers resolve all color
    classes in one step, which stands for ``phi`` global rounds.
    """

    name = "protocol"
    step_rounds = 1
    # Physical slots per round.  Differs from len(slots()) when one physical
    # slot is resolved once per TDMA color inside a step.
    slots_per_round: int | None = None

    def setup(self, sim: "Simulation") -> None:
        self.sim = sim

    def slots(self) -> Sequence[str]:
        return ("main",)

    def act(self, step: int, slot: str) -> SlotFrame:
        raise NotImplementedError

    def deliver(self, step: int, slot: str, result: SlotResult) -> None:
        pass

    def end_step(self, step: int) -> None:
        pass

    def done(self, step: int) -> bool:
        return False

    def fast_forward(self, step: int) -> int | None:
        """Return a later step to jump to when no further step can change the outcome."""
        return None

    def finish(self, steps: int) -> None:
        pass


class Simulation:
    """Binds topology, physics and per-node knowledge for a sequence of protocol stages."""

    def __init__(self, topo: Topology, params: SinrParams, F: int, seed: int = 0,
                 n_hat: int | None = None, trace: Trace | None = None,
                 metrics: RunMetrics | None = None, sense_noise: float = 0.0):
        if F < 1:
            raise ValueError("F must be at least 1")
        self.topo = topo
        self.params = params
        self.F = int(F)
        self.seed = int(seed)
        self.medium = Medium(topo, params, sense_noise=sense_noise, noise_seed=seed)
        self.know: Knowledge = params.knowledge()
        self.n_hat = int(n_hat) if n_hat is not None else topo.n
        self.ln_n = math.log(max(self.n_hat, 2))
        self.streams = Streams(seed, topo.ids)
        self.trace = trace if trace is not None else Trace(enabled=False)
        self.metrics = metrics if metrics is not None else RunMetrics(seed=seed, F=F, n=topo.n)
        self.ids = topo.ids
        self.clock = RoundClock()

    @property
    def n(self) -> int:
        return self.topo.n

    def run(self, protocol: Protocol, round_budget: int, stage: str | None = None,
            count_budget_failure: bool = True) -> int:
        """Run ``protocol`` to completion or budget.  Returns global rounds used."""
        if round_budget < 1:
            raise ValueError("round_budget must be at least 1")
        stage = stage or protocol.name
        protocol.setup(self)
        scale = max(1, int(protocol.step_rounds))
        max_steps = max(1, math.ceil(round_budget / scale))
        step = 0
        finished = False
        while step < max_steps:
            slots = protocol.slots()
            self.clock = RoundClock(step * scale, 0, protocol.slots_per_round or len(slots))
            for k, slot in enumerate(slots):
                self.clock.slot = k
                frame = protocol.act(step, slot)
                result = self.medium.resolve(frame)
                self.trace.slot(stage, step * scale, slot, frame, result, self.ids)
                protocol.deliver(step, slot, result)
            protocol.end_step(step)
            step += 1
            if protocol.done(step):
                finished = True
                break
            jump = protocol.fast_forward(step)
            if jump is not None and jump > step:
                self.trace.event(stage, step * scale, "fast_forward", to=jump * scale)
                step = min(jump, max_steps)
                if protocol.done(step):
                    finished = True
                    break
        if not finished and count_budget_failure and not protocol.done(step):
            self.metrics.fail("budget_exhausted")
            self.trace.event(stage, step * scale, "budget_exhausted")
        protocol.finish(step)
        return step * scale


def run_protocol(topo: Topology, params: SinrParams, F: int, protocol: Protocol, seed: int,
                 round_budget: int, n_hat: int | None = None, trace: bool = True):
    """Run one protocol from a cold start.  Returns ``(trace, metrics)``."""
    tr = Trace(enabled=trace)
    sim = Simulation(topo, params, F, seed=seed, n_hat=n_hat, trace=tr)
    t0 = time.perf_counter()
    rounds = sim.run(protocol, round_budget)
    sim.metrics.add_rounds(protocol.name, rounds)
    sim.metrics.wall_time = time.perf_counter() - t0
    return tr, sim.metrics
