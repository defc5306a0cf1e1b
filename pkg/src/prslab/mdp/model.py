"""State space and transition model of the selfish-mining MDP.

Every transition carries exactly one mining event: the attacker finds the
next block with probability ``alpha``, the honest network with ``1 - alpha``.
Actions are applied first and the mining event follows, so the number of
elapsed time units per step is always one.

An object that points to a fork block deeper than ``wfork`` earns nothing.
The attacker's own blocks are held to the same rule when a publication
reorganises the public chain, which makes deep forks costly.

Rewards are settled lazily.  A main-chain height whose adversarial block still
has an eligible honest competitor waiting to be referenced is kept as a ``1``
bit in ``history``; it is settled as a split once an honest block enters the
main chain, or credited to the attacker in full once it falls out of the
object eligibility window.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple


class Mechanism(str, enum.Enum):
    BITCOIN = "bitcoin"
    FRUITCHAINS = "fruitchains"
    RS = "rs"
    PRS = "prs"


class Fork(enum.IntEnum):
    ALAST = 0  # latest block mined by the attacker, Match infeasible
    CLAST = 1  # latest block mined by honest miners
    ACTIVE = 2  # honest miners split between two equal-length branches


class Action(NamedTuple):
    kind: str
    k: int = 0

    def __str__(self):
        return f"override{self.k}" if self.kind == "override" else self.kind


ADOPT = Action("adopt")
WAIT = Action("wait")
MATCH = Action("match")


def override(k: int) -> Action:
    return Action("override", k)


class MdpState(NamedTuple):
    la: int
    lc: int
    fork: Fork
    history: int = 0

    @property
    def history_bits(self) -> str:
        """Bitstring view of ``history``; the first character is the tip."""
        if not self.history:
            return ""
        return format(self.history, "b")[::-1]


INITIAL_STATE = MdpState(0, 0, Fork.ALAST, 0)


class TransitionEntry(NamedTuple):
    probability: float
    next_state: MdpState
    reward_a: float
    reward_h: float
    elapsed: float
    orphaned: int  # honest main-chain blocks reverted by this transition


class InfeasibleAction(ValueError):
    """Raised by :func:`step` for an action not in ``feasible_actions``."""


@dataclass(frozen=True)
class MdpConfig:
    alpha: float
    gamma: float = 0.5
    mechanism: Mechanism = Mechanism.PRS
    omega: int = 6
    wfork: int = 6
    max_fork: int = 12
    v_ds: float = 3.0
    conf: int = 6
    fruit_ratio: int = 1
    ds_per_block: bool = True  # double-spend bonus v_ds per orphaned block, else v_ds per success
    split: float | None = None  # attacker share at contested heights, overrides the mechanism default

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError(f"alpha must lie in [0, 0.5), got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.omega < 1 or self.wfork < 1:
            raise ValueError("eligibility windows must be >= 1")
        if self.max_fork < 1:
            raise ValueError("max_fork must be >= 1")
        if self.conf < 1:
            raise ValueError("conf must be >= 1")
        if self.split is not None and not 0.0 <= self.split <= 1.0:
            raise ValueError("split must lie in [0, 1]")
        if self.mechanism is Mechanism.FRUITCHAINS:
            if self.gamma not in (0.0, 1.0):
                raise ValueError("the FruitChains model supports gamma in {0, 1} only")
            if self.fruit_ratio != 1:
                raise ValueError("the FruitChains model supports fruit_ratio=1 only")

    def fork_eligible(self, position: int) -> bool:
        """Whether the ``position``-th block of a fork (1-based) earns rewards.

        It points to the fork block at depth ``position - 1``.
        """
        return position - 1 <= self.wfork

    def double_spend_bonus(self, orphaned: int) -> float:
        if orphaned < self.conf:
            return 0.0
        return self.v_ds * orphaned if self.ds_per_block else self.v_ds

    @property
    def history_cap(self) -> int:
        return max(self.omega, self.wfork)

    @property
    def attacker_split(self) -> float:
        """Fraction of a contested height paid to the attacker."""
        if self.split is not None:
            return self.split
        if self.mechanism is Mechanism.RS:
            return 0.5
        if self.mechanism is Mechanism.PRS:
            return self.alpha
        return 0.0


def feasible_actions(s: MdpState, cfg: MdpConfig) -> list[Action]:
    """Actions available in ``s``; Wait and Match vanish at the truncation bound."""
    la, lc, fork, _ = s
    room = la < cfg.max_fork and lc < cfg.max_fork
    actions = [ADOPT]
    if room:
        actions.append(WAIT)
    if room and fork == Fork.CLAST and la >= lc >= 1 and cfg.gamma > 0:
        actions.append(MATCH)
    actions.extend(override(k) for k in range(1, la - lc + 1))
    return actions


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _settle_adopt(s: MdpState, cfg: MdpConfig) -> tuple[float, float, int]:
    """Rewards released when the public branch becomes the main chain."""
    la, lc, _, hist = s
    if lc == 0:
        return 0.0, 0.0, hist
    if cfg.mechanism is Mechanism.BITCOIN:
        return 0.0, float(lc), 0
    if cfg.mechanism is Mechanism.FRUITCHAINS:
        # the first public block carries every pending honest fruit
        return 0.0, float(lc + _popcount(hist)), 0
    share = cfg.attacker_split
    pending = _popcount(hist)
    r_a = pending * share
    r_h = pending * (1.0 - share)
    for depth in range(1, lc + 1):
        # attacker uncles are referenced by the next main-chain block
        contested = (
            depth <= la
            and cfg.fork_eligible(depth)
            and lc + 1 - depth <= cfg.omega
        )
        if contested:
            r_a += share
            r_h += 1.0 - share
        else:
            r_h += 1.0
    return r_a, r_h, 0


def _settle_publish(s: MdpState, published: int, cfg: MdpConfig) -> tuple[float, float, int]:
    """The attacker's first ``published`` private blocks join the main chain.

    The public branch (``lc`` honest blocks) is orphaned.  Returns the
    attacker reward released now, the honest reward released now, and the
    history relative to the new main-chain tip.
    """
    _, lc, _, hist = s
    if cfg.mechanism is Mechanism.BITCOIN:
        return float(published), 0.0, 0
    if cfg.mechanism is Mechanism.FRUITCHAINS:
        new_bits = 0
        for depth in range(1, lc + 1):
            # fruit of the honest block at `depth` hangs off its parent
            if cfg.fork_eligible(depth):
                new_bits |= 1 << (published - depth + 1)
        hist = (hist << published) | new_bits
        hist &= (1 << cfg.omega) - 1  # fruits beyond the window are lost
        return 0.0, 0.0, hist
    new_bits = 0
    r_a = 0.0
    for position in range(1, published + 1):
        if lc and not cfg.fork_eligible(position):
            break
        if position <= lc:
            new_bits |= 1 << (published - position)
        else:
            r_a += 1.0
    hist = (hist << published) | new_bits
    r_a += _popcount(hist >> cfg.omega)
    hist &= (1 << cfg.omega) - 1
    return r_a, 0.0, hist


def step(s: MdpState, a: Action, cfg: MdpConfig) -> list[TransitionEntry]:
    """Outgoing transitions of ``(s, a)``.

    Raises :class:`InfeasibleAction` if ``a`` is not available in ``s``.
    """
    if a not in feasible_actions(s, cfg):
        raise InfeasibleAction(f"{a} is not feasible in {s}")
    alpha, gamma = cfg.alpha, cfg.gamma
    la, lc, fork, hist = s
    fruit = cfg.mechanism is Mechanism.FRUITCHAINS
    adv_mined = 1.0 if fruit else 0.0  # attacker fruits are always included
    out: list[TransitionEntry] = []

    def emit(p, nxt, r_a, r_h, orphaned=0):
        if p > 0.0:
            out.append(TransitionEntry(p, nxt, r_a, r_h, 1.0, orphaned))

    if a.kind == "adopt":
        r_a, r_h, h2 = _settle_adopt(s, cfg)
        emit(alpha, MdpState(1, 0, Fork.ALAST, h2), r_a + adv_mined, r_h)
        emit(1 - alpha, MdpState(0, 1, Fork.CLAST, h2), r_a, r_h)
    elif a.kind == "override":
        published = lc + a.k
        r_a, r_h, h2 = _settle_publish(s, published, cfg)
        rest = la - published
        emit(alpha, MdpState(rest + 1, 0, Fork.ALAST, h2), r_a + adv_mined, r_h, lc)
        emit(1 - alpha, MdpState(rest, 1, Fork.CLAST, h2), r_a, r_h, lc)
    elif a.kind == "wait" and fork != Fork.ACTIVE:
        emit(alpha, MdpState(la + 1, lc, Fork.ALAST, hist), adv_mined, 0.0)
        emit(1 - alpha, MdpState(la, lc + 1, Fork.CLAST, hist), 0.0, 0.0)
    else:
        # Match, or Wait while a match is active
        emit(alpha, MdpState(la + 1, lc, Fork.ACTIVE, hist), adv_mined, 0.0)
        r_a, r_h, h2 = _settle_publish(s, lc, cfg)
        emit(gamma * (1 - alpha), MdpState(la - lc, 1, Fork.CLAST, h2), r_a, r_h, lc)
        emit((1 - gamma) * (1 - alpha), MdpState(la, lc + 1, Fork.CLAST, hist), 0.0, 0.0)
    return out
