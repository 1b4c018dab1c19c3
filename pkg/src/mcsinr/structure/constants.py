"""Protocol constants, presets and the derived geometry of clusters."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

from ..sinr import SinrParams


@dataclass(frozen=True)
class ProtocolConstants:
    preset: str = "practical"
    # Dominating-set density.  None means measure it from the phase-1 output.
    mu: float | None = None
    kappa: float = 0.25
    kappa1: float = 0.25
    lam: float = 0.5
    omega1: float = 2.0
    gamma1: float = 16.0
    c1: float = 4.0
    omega2: float = 0.5
    gamma2: float = 8.0
    # None means the formula 12*mu**2/kappa**2 with the measured mu.
    gamma: float | None = None
    gamma3: float = 2.0
    # Exponent c of the small-estimate path is c_hat + 2.
    c_hat: int = 1
    # Dominating-set (decay) schedule: steps per probability level and the
    # per-step beacon probability of dominators.
    ds_len: int = 4
    ds_beacon: float = 0.25
    # Backbone transmission probability and construction budget factor.
    q_backbone: float = 0.25
    c_backbone: float = 20.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and v is not None and v <= 0:
                raise ValueError(f"constant {k} must be positive")
        if not self.lam <= 0.5:
            raise ValueError("lambda must be at most 1/2")

    @classmethod
    def practical(cls, **overrides) -> "ProtocolConstants":
        return cls(preset="practical", **overrides)

    @classmethod
    def theory(cls, kappa: float = 0.25, kappa1: float = 0.25, **overrides) -> "ProtocolConstants":
        lam = overrides.pop("lam", 0.5)
        omega1 = 36.0
        omega2 = 96.0 / kappa1
        base = dict(preset="theory", kappa=kappa, kappa1=kappa1, lam=lam, omega1=omega1,
                    gamma1=4 * omega1 / (kappa * lam), c1=24.0, omega2=omega2,
                    gamma2=8 * omega2 / kappa1, gamma=None)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def preset_named(cls, name: str, **overrides) -> "ProtocolConstants":
        if name == "practical":
            return cls.practical(**overrides)
        if name == "theory":
            return cls.theory(**overrides)
        raise ValueError(f"unknown preset {name!r}")

    def with_(self, **changes) -> "ProtocolConstants":
        return replace(self, **changes)

    def ruling_gamma(self, mu: float) -> float:
        if self.gamma is not None:
            return self.gamma
        return 12.0 * mu**2 / self.kappa**2

    @property
    def c_small(self) -> int:
        return self.c_hat + 2

    def as_dict(self) -> dict:
        return asdict(self)


def t_factor(params: SinrParams) -> float:
    a, b = params.alpha, params.beta
    return ((a - 2) / (48 * b * (a - 1))) ** (1.0 / a)


def cluster_radius(params: SinrParams) -> float:
    t = t_factor(params)
    return min(t / (2 * t + 2) * params.r_half_eps, params.epsilon * params.r_t / 4)


def phi_bound(mu: float, r_half_eps: float, r_c: float) -> int:
    return math.ceil(4 * mu * (r_half_eps + r_c / 2) ** 2 / r_c**2)


def channel_count(size_estimate: int, ln_n: float, c1: float, F: int, trivial: bool = False) -> int:
    """Channels used inside a cluster.  Trivial (memberless) clusters use none."""
    if trivial:
        return 0
    return max(1, min(math.ceil(size_estimate / (c1 * ln_n)), F))
