"""Execution configuration and the quantities derived from it."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from ..core import ProtocolConfig


class Strategy(str, enum.Enum):
    ALL_HONEST = "all_honest"
    SELFISH_MINING = "selfish_mining"
    PRIVATE_CHAIN = "private_chain"


@dataclass(frozen=True)
class SimConfig:
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    rounds: int = 1000
    seed: int = 0
    strategy: Strategy = Strategy.ALL_HONEST
    party_queries: tuple[int, ...] | None = None  # per-party query budget, overrides n and q
    tx_per_round: int = 1
    release_lead: int = 3  # private-chain attack: publish once this many blocks ahead
    give_up: int = 2  # private-chain attack: abandon once this many blocks behind
    growth_window: int | None = None
    fairness_window: int | None = None
    delta_target: float = 0.1
    slack: float = 0.15
    lam: float = 1.01
    waive_compliance: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.party_queries is not None:
            pq = tuple(int(x) for x in self.party_queries)
            if not pq or min(pq) < 1:
                raise ValueError("party_queries must be a nonempty list of positive counts")
            object.__setattr__(self, "party_queries", pq)
        if not 0 < self.delta_target < 1:
            raise ValueError("delta_target must lie in (0, 1)")
        if self.slack < 0:
            raise ValueError("slack must be >= 0")
        if self.lam <= 1:
            raise ValueError("lam must exceed 1")
        if self.release_lead < 1 or self.give_up < 0 or self.tx_per_round < 0:
            raise ValueError("release_lead >= 1, give_up >= 0 and tx_per_round >= 0 required")

    @property
    def queries(self) -> tuple[int, ...]:
        if self.party_queries is not None:
            return self.party_queries
        return (self.protocol.q,) * self.protocol.n

    @property
    def n_parties(self) -> int:
        return len(self.queries)

    @property
    def coalition(self) -> tuple[int, ...]:
        """Parties in the adversarial coalition: the last ``round(rho * n)`` ids."""
        m = int(round(self.protocol.rho * self.n_parties))
        return tuple(range(self.n_parties - m, self.n_parties))

    @property
    def honest(self) -> tuple[int, ...]:
        if self.strategy is Strategy.ALL_HONEST:
            return tuple(range(self.n_parties))
        return tuple(range(self.n_parties - len(self.coalition)))


@dataclass(frozen=True)
class DerivedParams:
    alpha: float  # probability that some honest party finds a block in a round
    beta: float  # expected adversarial blocks per round
    gamma: float  # discounted honest success rate under delay
    wait: float
    q_ratio: float
    kappa_f: float
    T0: float
    honest_queries: int
    adversary_queries: int

    @classmethod
    def of(cls, cfg: SimConfig) -> "DerivedParams":
        pc = cfg.protocol
        p = pc.p
        q = cfg.queries
        coalition = set(cfg.coalition)
        adv = sum(q[i] for i in coalition)
        hon = sum(q) - adv
        alpha = 1.0 - (1.0 - p) ** hon
        beta = adv * p
        gamma = alpha / (1.0 + pc.delta * alpha)
        wait = 2 * pc.delta + 2 * pc.safety / gamma if gamma > 0 else math.inf
        q_ratio = pc.p_f / p
        kappa_f = 2 * q_ratio * pc.recency * pc.safety
        T0 = 5 * kappa_f / cfg.delta_target
        return cls(alpha, beta, gamma, wait, q_ratio, kappa_f, T0, hon, adv)

    def growth_rates(self, cfg: SimConfig) -> tuple[float, float]:
        """Workshare growth per round, lower and upper."""
        d = cfg.delta_target
        pf = cfg.protocol.p_f
        return (1 - d) * self.honest_queries * pf, (1 + d) * (self.honest_queries + self.adversary_queries) * pf


def compliance_check(n: int, rho: float, delta: int, p: float, lam: float = 1.01, q: int = 1) -> bool:
    """``alpha * (1 - 2 * (delta + 1) * alpha) >= lam * beta`` for the given population."""
    if lam <= 1:
        raise ValueError("lam must exceed 1")
    alpha = 1.0 - (1.0 - p) ** ((1.0 - rho) * n * q)
    beta = rho * n * q * p
    return alpha * (1.0 - 2.0 * (delta + 1) * alpha) >= lam * beta


def config_compliant(cfg: SimConfig) -> bool:
    pc = cfg.protocol
    d = DerivedParams.of(cfg)
    return d.alpha * (1.0 - 2.0 * (pc.delta + 1) * d.alpha) >= cfg.lam * d.beta
