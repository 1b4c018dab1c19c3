"""Slot resolution under the SINR reception rule, plus receiver-side carrier sense."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .topology import Topology

# Relative slack when comparing a distance inferred from received power
# against a radius: the power inversion is exact up to float rounding only.
INFER_RTOL = 1e-12


class ParamsError(ValueError):
    pass


@dataclass(frozen=True)
class SinrParams:
    P: float = 1.0
    alpha: float = 3.0
    beta: float = 1.0
    N: float = 1e-6
    epsilon: float = 1.0 / 3.0
    # Optional (min, max) ranges handed to nodes instead of the true values.
    alpha_range: tuple[float, float] | None = None
    beta_range: tuple[float, float] | None = None
    N_range: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.alpha > 2:
            raise ParamsError("alpha must exceed 2")
        if not self.beta >= 1:
            raise ParamsError("beta must be at least 1")
        if not (self.P > 0 and self.N > 0):
            raise ParamsError("P and N must be positive")
        if not 0 < self.epsilon < 1:
            raise ParamsError("epsilon must lie in (0, 1)")
        for name, true, rng in (("alpha", self.alpha, self.alpha_range),
                                ("beta", self.beta, self.beta_range),
                                ("N", self.N, self.N_range)):
            if rng is not None and not rng[0] <= true <= rng[1]:
                raise ParamsError(f"{name}={true} outside its range {rng}")

    @property
    def r_t(self) -> float:
        return (self.P / (self.beta * self.N)) ** (1.0 / self.alpha)

    def r_frac(self, c: float) -> float:
        if not 0 < c < 1:
            raise ParamsError("c must lie in (0, 1)")
        return (1.0 - c) * self.r_t

    @property
    def r_eps(self) -> float:
        return self.r_frac(self.epsilon)

    @property
    def r_half_eps(self) -> float:
        return self.r_frac(self.epsilon / 2)

    @property
    def t_s(self) -> float:
        a = self.alpha
        return self.N * min((2**a - 1) / 2**a, 0.5**a * self.beta)

    @property
    def uncertain(self) -> bool:
        return any(r is not None for r in (self.alpha_range, self.beta_range, self.N_range))

    def knowledge(self) -> "Knowledge":
        return Knowledge.from_params(self)


def clear_threshold(P: float, alpha: float, beta: float, N: float, radius: float,
                    scaled: bool = True) -> float:
    """Residual-interference bound certifying a clear reception at ``radius``.

    The fixed threshold ``t_s`` certifies that no other transmitter is within
    ``2 R_T``, which is exactly ``4r`` at ``r = R_T/2``.  With ``scaled`` the
    bound becomes ``min(P/(4r)^a, (P/(b r^a) - N)/2^a)``: it equals ``t_s`` at
    ``r = R_T/2`` and still certifies no other transmitter within ``4r`` for
    every other radius.  Without ``scaled``, ``t_s`` is used up to ``R_T/2``
    and the scaled value above it.
    """
    r_t = (P / (beta * N)) ** (1.0 / alpha)
    t_s = N * min((2**alpha - 1) / 2**alpha, 0.5**alpha * beta)
    if radius <= r_t / 2 and not scaled:
        return t_s
    return min(P / (4 * radius) ** alpha, (P / (beta * radius**alpha) - N) / 2**alpha)


@dataclass(frozen=True)
class Knowledge:
    """What nodes may assume about the physical layer.

    With parameter ranges configured, every derived quantity takes the
    extreme that makes node-side decisions conservative.
    """

    P: float
    alpha_lo: float
    alpha_hi: float
    beta_lo: float
    beta_hi: float
    N_lo: float
    N_hi: float

    @classmethod
    def from_params(cls, p: SinrParams) -> "Knowledge":
        a = p.alpha_range or (p.alpha, p.alpha)
        b = p.beta_range or (p.beta, p.beta)
        nn = p.N_range or (p.N, p.N)
        return cls(p.P, a[0], a[1], b[0], b[1], nn[0], nn[1])

    def _extremes(self):
        for a in {self.alpha_lo, self.alpha_hi}:
            for b in {self.beta_lo, self.beta_hi}:
                for nn in {self.N_lo, self.N_hi}:
                    yield a, b, nn

    @property
    def r_t(self) -> float:
        return min((self.P / (b * nn)) ** (1.0 / a) for a, b, nn in self._extremes())

    def r_frac(self, c: float) -> float:
        return (1.0 - c) * self.r_t

    def clear_threshold(self, radius: float, scaled: bool = True) -> float:
        return min(clear_threshold(self.P, a, b, nn, radius, scaled) for a, b, nn in self._extremes())

    def infer_distance(self, signal: np.ndarray) -> np.ndarray:
        ratio = self.P / np.asarray(signal, dtype=np.float64)
        lo = ratio ** (1.0 / self.alpha_lo)
        hi = ratio ** (1.0 / self.alpha_hi)
        return np.maximum(lo, hi)

    def within(self, signal: np.ndarray, radius: float) -> np.ndarray:
        return self.infer_distance(signal) <= radius * (1 + INFER_RTOL)

    def power_at(self, distance: float) -> float:
        """Lowest power a sender at ``distance`` can produce at a receiver."""
        return min(self.P / distance**a for a in (self.alpha_lo, self.alpha_hi))


@dataclass
class SlotFrame:
    """One slot's actions: who transmits on which channel, who listens where.

    Nodes are topology indices.  Nodes in neither list are idle.  Channel
    numbers are arbitrary integers; the simulator uses values above ``F`` as
    virtual channels for disjoint TDMA color classes.
    """

    tx: np.ndarray
    tx_ch: np.ndarray
    rx: np.ndarray
    rx_ch: np.ndarray
    payload: Sequence[Any] | None = None

    @classmethod
    def empty(cls) -> "SlotFrame":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, [])

    @classmethod
    def from_actions(cls, actions: dict[int, tuple]) -> "SlotFrame":
        """Build from ``{node: ("tx", ch, payload) | ("rx", ch) | ("idle",)}``."""
        tx, tx_ch, pl, rx, rx_ch = [], [], [], [], []
        for node, act in sorted(actions.items()):
            if act[0] == "tx":
                tx.append(node)
                tx_ch.append(act[1])
                pl.append(act[2] if len(act) > 2 else None)
            elif act[0] == "rx":
                rx.append(node)
                rx_ch.append(act[1])
            elif act[0] != "idle":
                raise ValueError(f"unknown action {act!r}")
        a = lambda v: np.asarray(v, dtype=np.int64)
        return cls(a(tx), a(tx_ch), a(rx), a(rx_ch), pl)

    def validate(self, n: int) -> None:
        both = np.intersect1d(self.tx, self.rx)
        if len(both):
            raise ValueError(f"nodes {both.tolist()} both transmit and listen")
        if len(np.unique(self.tx)) != len(self.tx) or len(np.unique(self.rx)) != len(self.rx):
            raise ValueError("a node appears twice in one slot")
        for arr in (self.tx, self.rx):
            if len(arr) and (arr.min() < 0 or arr.max() >= n):
                raise ValueError("node index out of range")
        if self.payload is not None and len(self.payload) != len(self.tx):
            raise ValueError("payload list must align with transmitters")


@dataclass(frozen=True)
class Reception:
    receiver: int
    sender: int
    payload: Any
    sinr: float
    sender_signal: float
    total_power_sensed: float


@dataclass
class SlotResult:
    """Per-listener outcome, aligned with ``frame.rx``.

    ``sender`` holds the position in ``frame.tx`` of the decoded transmitter,
    or -1.  ``sensed`` is noise plus all same-channel received power.
    """

    frame: SlotFrame
    sender: np.ndarray
    signal: np.ndarray
    sinr: np.ndarray
    sensed: np.ndarray
    ids: np.ndarray | None = field(default=None, repr=False)

    @property
    def got(self) -> np.ndarray:
        return self.sender >= 0

    def sender_node(self) -> np.ndarray:
        out = np.full(len(self.sender), -1, dtype=np.int64)
        ok = self.sender >= 0
        out[ok] = self.frame.tx[self.sender[ok]]
        return out

    def payload_of(self, k: int) -> Any:
        """Payload decoded by the ``k``-th listener (None if nothing decoded)."""
        s = self.sender[k]
        if s < 0 or self.frame.payload is None:
            return None
        return self.frame.payload[s]

    def receptions(self) -> list[Reception]:
        ids = self.ids
        out = []
        for k in np.flatnonzero(self.sender >= 0):
            s = self.sender[k]
            recv, send = int(self.frame.rx[k]), int(self.frame.tx[s])
            if ids is not None:
                recv, send = int(ids[recv]), int(ids[send])
            out.append(Reception(recv, send, self.payload_of(k), float(self.sinr[k]),
                                 float(self.signal[k]), float(self.sensed[k])))
        return out

    def sensed_by_node(self) -> dict[int, float]:
        return {int(v): float(s) for v, s in zip(self.frame.rx, self.sensed)}


def gain_matrix(topo: Topology, params: SinrParams) -> np.ndarray:
    d = topo.distances()
    with np.errstate(divide="ignore"):
        g = params.P / d**params.alpha
    np.fill_diagonal(g, 0.0)
    return g


class Medium:
    """A topology bound to physical parameters, with the pairwise gain cached."""

    def __init__(self, topo: Topology, params: SinrParams, sense_noise: float = 0.0,
                 noise_seed: int = 0):
        self.topo = topo
        self.params = params
        self.gain = gain_matrix(topo, params)
        self.sense_noise = sense_noise
        self._noise_rng = np.random.default_rng(noise_seed)

    @property
    def n(self) -> int:
        return self.topo.n

    def resolve(self, frame: SlotFrame) -> SlotResult:
        n_rx = len(frame.rx)
        sender = np.full(n_rx, -1, dtype=np.int64)
        signal = np.zeros(n_rx)
        sinr = np.zeros(n_rx)
        N, beta = self.params.N, self.params.beta
        if n_rx == 0 or len(frame.tx) == 0:
            return SlotResult(frame, sender, signal, sinr, np.full(n_rx, N), self.topo.ids)
        g = self.gain[np.ix_(frame.rx, frame.tx)]
        g = np.where(frame.rx_ch[:, None] == frame.tx_ch[None, :], g, 0.0)
        total = g.sum(axis=1)
        best = g.argmax(axis=1)
        strongest = g[np.arange(n_rx), best]
        # summing the others directly avoids cancellation in total - strongest
        others = g.copy()
        others[np.arange(n_rx), best] = 0.0
        ratio = np.zeros(n_rx)
        live = strongest > 0
        ratio[live] = strongest[live] / (N + others.sum(axis=1)[live])
        ok = live & (ratio >= beta)
        sender[ok] = best[ok]
        signal[ok] = strongest[ok]
        sinr[ok] = ratio[ok]
        sensed = N + total
        if self.sense_noise > 0:
            jitter = np.exp(self._noise_rng.normal(0.0, self.sense_noise, size=(2, n_rx)))
            sensed = sensed * jitter[0]
            signal = signal * jitter[1]
        return SlotResult(frame, sender, signal, sinr, sensed, self.topo.ids)


def resolve_slot(topo: Topology, params: SinrParams, frame: SlotFrame):
    """Resolve one slot.  Returns ``(receptions, sensed)`` keyed by node id."""
    frame.validate(topo.n)
    res = Medium(topo, params).resolve(frame)
    sensed = {int(topo.ids[v]): float(s) for v, s in zip(frame.rx, res.sensed)}
    return res.receptions(), sensed


def clear_reception(r: Reception, params: SinrParams, radius: float) -> bool:
    k = params.knowledge()
    near = bool(k.within(np.array([r.sender_signal]), radius)[0])
    residual = r.total_power_sensed - r.sender_signal - k.N_lo
    return near and residual <= k.clear_threshold(radius, scaled=False)


def clear_mask(result: SlotResult, know: Knowledge, radius: float,
               scaled: bool = True) -> np.ndarray:
    """Vectorized clear-reception test over all listeners of a slot."""
    got = result.sender >= 0
    out = np.zeros(len(got), dtype=bool)
    if got.any():
        sig = result.signal[got]
        residual = result.sensed[got] - sig - know.N_lo
        out[got] = know.within(sig, radius) & (residual <= know.clear_threshold(radius, scaled))
    return out


def near_mask(result: SlotResult, know: Knowledge, radius: float) -> np.ndarray:
    """Listeners that decoded a message from a sender inferred within ``radius``."""
    got = result.sender >= 0
    out = np.zeros(len(got), dtype=bool)
    if got.any():
        out[got] = know.within(result.signal[got], radius)
    return out
