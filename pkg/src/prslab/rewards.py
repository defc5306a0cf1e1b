"""Proportional reward splitting over a finalised chain.

The reward of height ``h`` goes to every eligible object of that height (the
canonical block, uncles and workshares) in proportion to intrinsic work.  A
workshare's height is one more than the height of the block it references;
an uncle's height is its own.  Height ``h`` is final once the chain tip is
``h + recency`` high, after which nothing of height ``h`` can be included.

The module also carries the older fixed-formula share calculator
(``legacy_*``), which is a plain formula evaluator and plays no part in fork
choice.
"""
from __future__ import annotations

import csv
import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .core import ProtocolConfig
from .protocol import BlockNode, Chain, ProtocolContext


class ObjectKind(str, enum.Enum):
    BLOCK = "block"
    UNCLE = "uncle"
    WORKSHARE = "workshare"


class DegenerateHeight(ValueError):
    """No eligible object exists at a height."""


class NotFinalized(ValueError):
    """The chain is not yet long enough to settle a height."""


@dataclass(frozen=True)
class EligibleObject:
    kind: ObjectKind
    height: int
    work: int
    owner: int
    published_at: int
    hash: int


@dataclass
class RewardAllocation:
    per_party: dict[int, float] = field(default_factory=dict)
    per_height: dict[int, dict[int, float]] = field(default_factory=dict)
    objects: dict[int, list[tuple[EligibleObject, float]]] = field(default_factory=dict)

    def total(self):
        return sum(self.per_party.values())

    def fractions(self) -> dict[int, float]:
        tot = float(self.total())
        return {p: float(v) / tot for p, v in self.per_party.items()} if tot else {}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["height", "party", "kind", "work", "payout"])
            for h in sorted(self.objects):
                for obj, pay in self.objects[h]:
                    w.writerow([h, obj.owner, obj.kind.value, obj.work, f"{float(pay):.12g}"])


def _fork_depth(node: BlockNode, canonical: set[int], limit: int) -> int:
    hops = 0
    while node.hash not in canonical and hops <= limit:
        hops += 1
        node = node.parent
    return hops


def _eligible_entries(block: BlockNode, canonical: set[int], ctx: ProtocolContext
                      ) -> Iterable[EligibleObject]:
    """Eligible objects carried in ``block``'s share list."""
    cfg = ctx.cfg
    H = block.height
    for o in block.obj.share_list:
        ref = ctx.resolve(o.parent)
        if ref is None:
            continue
        if o.work > cfg.t_block:
            kind = ObjectKind.UNCLE
            in_window = 1 <= H - o.height <= cfg.recency
        else:
            kind = ObjectKind.WORKSHARE
            in_window = 1 <= H - ref.height <= cfg.recency
        if in_window and _fork_depth(ref, canonical, cfg.wfork) <= cfg.wfork:
            yield EligibleObject(kind, ref.height + 1, o.work, o.miner, H, o.hash)


def finalized_heights(chain: Chain, cfg: ProtocolConfig) -> range:
    return range(1, chain.height - cfg.recency + 1)


def eligible_by_height(chain: Chain, ctx: ProtocolContext, heights: range | None = None
                       ) -> dict[int, list[EligibleObject]]:
    cfg = ctx.cfg
    if heights is None:
        heights = finalized_heights(chain, cfg)
    out: dict[int, list[EligibleObject]] = {h: [] for h in heights}
    if not heights:
        return out
    lo, hi = heights.start, heights.stop - 1
    nodes = chain.nodes()
    canonical = {n.hash for n in nodes}
    for node in nodes[lo:min(hi + cfg.recency, chain.height) + 1]:
        if lo <= node.height <= hi:
            o = node.obj
            out[node.height].append(
                EligibleObject(ObjectKind.BLOCK, node.height, o.work, o.miner, node.height, o.hash))
        for e in _eligible_entries(node, canonical, ctx):
            if lo <= e.height <= hi:
                out[e.height].append(e)
    return out


def split_height(objects: list[EligibleObject], reward_total, *, exact: bool = False
                 ) -> list[tuple[EligibleObject, float]]:
    if not objects:
        raise DegenerateHeight("no eligible object at this height")
    total = sum(o.work for o in objects)
    if exact:
        pot = Fraction(reward_total)
        return [(o, pot * o.work / total) for o in objects]
    return [(o, reward_total * o.work / total) for o in objects]


def allocate_height(chain: Chain, h: int, reward_total: float, ctx: ProtocolContext, *,
                    exact: bool = False) -> dict[int, float]:
    """Payout per party for height ``h`` of a chain that has finalised it."""
    cfg = ctx.cfg
    if reward_total <= 0:
        raise ValueError("reward_total must be positive")
    if not 1 <= h <= chain.height - cfg.recency:
        raise NotFinalized(f"height {h} is not final at chain height {chain.height}")
    objs = eligible_by_height(chain, ctx, range(h, h + 1))[h]
    out: dict[int, float] = defaultdict(lambda: Fraction(0) if exact else 0.0)
    for o, pay in split_height(objs, reward_total, exact=exact):
        out[o.owner] += pay
    return dict(out)


def allocate_all(chain: Chain, ctx: ProtocolContext, per_height_reward: float | None = None, *,
                 exact: bool = False) -> RewardAllocation:
    """Allocate every finalised height of ``chain``."""
    reward = ctx.cfg.per_height_reward if per_height_reward is None else per_height_reward
    if reward <= 0:
        raise ValueError("per-height reward must be positive")
    alloc = RewardAllocation()
    zero = Fraction(0) if exact else 0.0
    per_party: dict[int, float] = defaultdict(lambda: zero)
    for h, objs in eligible_by_height(chain, ctx).items():
        paid = split_height(objs, reward, exact=exact)
        row: dict[int, float] = defaultdict(lambda: zero)
        for o, pay in paid:
            row[o.owner] += pay
            per_party[o.owner] += pay
        alloc.per_height[h] = dict(row)
        alloc.objects[h] = paid
    alloc.per_party = dict(per_party)
    return alloc


def legacy_share_bits(target: float, pow_hash: float) -> float:
    """Bits of work of a share whose hash is ``pow_hash`` against block target ``target``."""
    if target <= 0 or pow_hash <= 0:
        raise ValueError("target and hash must be positive")
    return -math.log2(target / pow_hash)


def legacy_share_weight(bits: float, distance: int) -> float:
    """Weight of a share with ``bits`` of work referencing a block ``distance`` back."""
    if bits < 0 or distance < 0:
        raise ValueError("bits and distance must be non-negative")
    return 2.0 ** (-bits) * 2.0 ** (-(distance + 1))


def legacy_block_weight(block_weight: float, share_weights: Iterable[float]) -> float:
    return block_weight + math.fsum(share_weights)


def legacy_share_reward(block_reward: float, share_weight: float, total_weight: float) -> float:
    if total_weight <= 0:
        raise ZeroDivisionError("total weight must be positive")
    return block_reward * share_weight / total_weight


def legacy_block_reward(k: float, difficulty: float) -> float:
    return k * difficulty
