"""Empirical checks of chain properties on an execution trace."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from ..protocol import BlockNode, common_ancestor
from ..rewards import RewardAllocation
from .config import DerivedParams, config_compliant
from .runner import ExecutionTrace


def consistency_depth(trace: ExecutionTrace) -> int:
    """Smallest ``T`` for which pruning ``T`` blocks from any honest chain yields a
    prefix of every honest chain at the same or a later round."""
    if not trace.tips:
        return 0
    worst = 0
    floor: BlockNode | None = None  # common ancestor of every tip from round r onwards
    for row in reversed(trace.tips):
        for tip in row:
            floor = tip if floor is None else common_ancestor(floor, tip)
        for tip in row:
            worst = max(worst, tip.height - floor.height)
    return worst


def measure_consistency(trace: ExecutionTrace, T: int) -> bool:
    if T < 0:
        raise ValueError("T must be >= 0")
    return consistency_depth(trace) <= T


def growth_increments(trace: ExecutionTrace, window: int, step: int | None = None) -> np.ndarray:
    """Record-count increase of each honest chain over every ``window``-round span."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > trace.rounds:
        return np.empty(0)
    records = np.array([[n.records for n in row] for row in trace.tips], dtype=np.int64)
    step = step or max(1, window // 4)
    starts = np.arange(0, trace.rounds - window + 1, step)
    return (records[starts + window] - records[starts]).ravel()


def measure_growth(trace: ExecutionTrace, window: int) -> tuple[int, int]:
    inc = growth_increments(trace, window)
    if inc.size == 0:
        raise ValueError("window longer than the execution")
    return int(inc.min()), int(inc.max())


def growth_bounds(trace: ExecutionTrace, window: int) -> tuple[float, float]:
    """Expected growth band for ``window`` rounds widened by the configured slack."""
    cfg = trace.config
    lo, hi = DerivedParams.of(cfg).growth_rates(cfg)
    return lo * window * (1 - cfg.slack), hi * window * (1 + cfg.slack)


def _included_deep(ctx, share_hash: int, tip: BlockNode, safety: int) -> bool:
    for node in ctx.containers.get(share_hash, ()):
        if node.height <= tip.height - safety and tip.has_ancestor(node):
            return True
    return False


def measure_freshness(trace: ExecutionTrace, wait: float | None = None, safety: int | None = None,
                      max_checks: int = 2000) -> int:
    """Honest workshares missing from some honest chain ``wait`` rounds after mining.

    A share counts as present when a block at least ``safety`` deep carries it.
    At most ``max_checks`` shares, evenly spaced in mining order, are examined.
    """
    cfg = trace.config
    if wait is None:
        wait = DerivedParams.of(cfg).wait
    if safety is None:
        safety = cfg.protocol.safety
    lag = math.ceil(wait)
    shares = [e for e in trace.honest_shares() if e.round + lag <= trace.rounds]
    if len(shares) > max_checks:
        idx = np.linspace(0, len(shares) - 1, max_checks).astype(int)
        shares = [shares[i] for i in idx]
    misses = 0
    for e in shares:
        row = trace.tips[e.round + lag]
        if not all(_included_deep(trace.ctx, e.hash, tip, safety) for tip in row):
            misses += 1
    return misses


def chain_record_owners(tip: BlockNode) -> np.ndarray:
    """Owner of every record on the chain in order: each block, then what it carries."""
    owners: list[int] = []
    nodes = []
    node = tip
    while node.parent is not None:
        nodes.append(node)
        node = node.parent
    for node in reversed(nodes):
        owners.append(node.obj.miner)
        owners.extend(o.miner for o in node.obj.share_list)
    return np.asarray(owners, dtype=np.int64)


def window_fractions(owners: np.ndarray, subset: Iterable[int], window: int) -> np.ndarray:
    """Fraction of records owned by ``subset`` in every ``window``-record span."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if owners.size < window:
        return np.empty(0)
    hit = np.isin(owners, list(subset)).astype(np.int64)
    csum = np.concatenate(([0], np.cumsum(hit)))
    return (csum[window:] - csum[:-window]) / window


def measure_fairness(trace: ExecutionTrace, subset: Iterable[int], window: int | None = None,
                     party: int | None = None) -> float:
    """Worst-window share of ``subset`` relative to its share of the query budget."""
    cfg = trace.config
    subset = set(subset)
    if window is None:
        window = cfg.fairness_window or math.ceil(DerivedParams.of(cfg).T0)
    party = trace.honest[0] if party is None else party
    phi = sum(cfg.queries[i] for i in subset) / sum(cfg.queries)
    if phi == 0:
        raise ValueError("subset holds no mining power")
    fr = window_fractions(chain_record_owners(trace.chain_of(party).tip), subset, window)
    if fr.size == 0:
        raise ValueError("chain shorter than the fairness window")
    return float(fr.min() / phi)


def ic_bound_check(allocation: RewardAllocation, coalition: Iterable[int], rho: float, delta: float,
                   *, honest_run: bool = False) -> bool:
    """Coalition payout within ``(1 + delta) * rho`` of the total, and at least
    ``(1 - delta) * rho`` of it when the coalition behaved honestly."""
    if not 0 < delta < 0.3:
        raise ValueError("delta must lie in (0, 0.3)")
    total = float(allocation.total())
    if total <= 0:
        raise ValueError("empty allocation")
    got = sum(float(allocation.per_party.get(p, 0.0)) for p in coalition) / total
    if got > (1 + delta) * rho:
        return False
    return not honest_run or got >= (1 - delta) * rho


@dataclass
class PropertyReport:
    rounds: int
    final_heights: list[int]
    consistency_depth: int
    consistency_T: int
    consistency_ok: bool
    growth_window: int
    growth_min: int
    growth_max: int
    growth_lower: float
    growth_upper: float
    growth_ok: bool
    freshness_wait: float
    freshness_misses: int
    fairness_window: int
    fairness: dict[str, float] = field(default_factory=dict)
    compliant: bool = True
    reward_fractions: dict[str, float] = field(default_factory=dict)

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), **kw)


def property_report(trace: ExecutionTrace, allocation: RewardAllocation | None = None) -> PropertyReport:
    cfg = trace.config
    derived = DerivedParams.of(cfg)
    depth = consistency_depth(trace)
    T = cfg.protocol.safety
    gw = cfg.growth_window or max(1, math.ceil(derived.wait))
    gw = min(gw, max(trace.rounds, 1))
    if trace.rounds >= gw:
        gmin, gmax = measure_growth(trace, gw)
    else:
        gmin = gmax = 0
    lo, hi = growth_bounds(trace, gw)
    fw = cfg.fairness_window or math.ceil(derived.T0)
    owners = chain_record_owners(trace.chain_of(trace.honest[0]).tip)
    fairness = {}
    total_q = sum(cfg.queries)
    for p in range(cfg.n_parties):
        fr = window_fractions(owners, {p}, fw)
        if fr.size:
            fairness[str(p)] = float(fr.min() / (cfg.queries[p] / total_q))
    fractions = {}
    if allocation is not None and allocation.per_party:
        fractions = {str(k): v for k, v in sorted(allocation.fractions().items())}
    return PropertyReport(
        rounds=trace.rounds,
        final_heights=[n.height for n in trace.tips[-1]],
        consistency_depth=depth,
        consistency_T=T,
        consistency_ok=depth <= T,
        growth_window=gw,
        growth_min=gmin,
        growth_max=gmax,
        growth_lower=lo,
        growth_upper=hi,
        growth_ok=trace.rounds < gw or (lo <= gmin and gmax <= hi),
        freshness_wait=derived.wait,
        freshness_misses=measure_freshness(trace, derived.wait),
        fairness_window=fw,
        fairness=fairness,
        compliant=config_compliant(cfg),
        reward_fractions=fractions,
    )
