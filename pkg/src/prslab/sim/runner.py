"""Round-by-round execution of the protocol under a bounded-delay network."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from ..protocol import BlockNode, Chain, Message, PartyState, ProtocolContext, execute_round
from .adversary import Adversary, PrivateChain, SelfishMining
from .config import DerivedParams, SimConfig, Strategy, config_compliant


class ComplianceError(ValueError):
    """The configuration violates the honest-majority or waiting-time requirement."""


@dataclass(frozen=True)
class MinedEvent:
    round: int
    party: int
    kind: str  # "block" or "share"
    hash: int


@dataclass
class ExecutionTrace:
    config: SimConfig
    ctx: ProtocolContext
    honest: tuple[int, ...]
    tips: list[tuple[BlockNode, ...]] = field(default_factory=list)  # index = round, 0 before round 1
    events: list[MinedEvent] = field(default_factory=list)
    messages: int = 0

    @property
    def rounds(self) -> int:
        return len(self.tips) - 1

    def final_chains(self) -> dict[int, Chain]:
        return {p: Chain(t) for p, t in zip(self.honest, self.tips[-1])}

    def chain_of(self, party: int, rnd: int | None = None) -> Chain:
        row = self.tips[-1 if rnd is None else rnd]
        return Chain(row[self.honest.index(party)])

    def honest_shares(self) -> list[MinedEvent]:
        hs = set(self.honest)
        return [e for e in self.events if e.kind == "share" and e.party in hs]

    def to_jsonl(self, path: str | Path) -> None:
        """One JSON object per mined object, then one per round with honest tips."""
        with open(path, "w") as fh:
            for e in self.events:
                fh.write(json.dumps({"type": "mined", "round": e.round, "party": e.party,
                                     "kind": e.kind, "hash": f"{e.hash:x}"}) + "\n")
            for r, row in enumerate(self.tips):
                fh.write(json.dumps({"type": "tips", "round": r,
                                     "heights": [n.height for n in row],
                                     "tips": [f"{n.hash:x}" for n in row]}) + "\n")


def _dedup(msgs: list[Message]) -> list[Message]:
    """Collapse messages announcing the same tip; shares are kept."""
    seen: set[int] = set()
    out = []
    for m in msgs:
        if m.chain is not None:
            if m.chain.tip.hash in seen:
                m = Message(m.sender, m.round, None, m.objects)
            else:
                seen.add(m.chain.tip.hash)
        if m.chain is not None or m.objects:
            out.append(m)
    return out


def _make_adversary(cfg: SimConfig, ctx: ProtocolContext) -> Adversary | None:
    coalition = cfg.coalition
    if cfg.strategy is Strategy.ALL_HONEST or not coalition:
        return None
    queries = sum(cfg.queries[i] for i in coalition)
    if cfg.strategy is Strategy.SELFISH_MINING:
        return SelfishMining(ctx, coalition[0], queries)
    return PrivateChain(ctx, coalition[0], queries, cfg.release_lead, cfg.give_up)


def check_config(cfg: SimConfig) -> DerivedParams:
    derived = DerivedParams.of(cfg)
    if not cfg.waive_compliance:
        if not config_compliant(cfg):
            raise ComplianceError("honest-majority condition fails; set waive_compliance to run anyway")
        if cfg.rounds < derived.wait:
            raise ComplianceError(f"rounds={cfg.rounds} is below the waiting time {derived.wait:.1f}")
    return derived


def run_execution(cfg: SimConfig) -> ExecutionTrace:
    """Run ``cfg.rounds`` rounds.

    Honest messages reach every honest party exactly ``delta`` rounds later,
    the worst delay the network allows.  The adversary is rushing: it reads the
    honest messages of a round before acting, and its own messages arrive in
    the next round.
    """
    check_config(cfg)
    ctx = ProtocolContext(cfg.protocol, cfg.seed)
    honest = cfg.honest
    states = [PartyState(p, ctx.genesis_chain(), cfg.queries[p]) for p in honest]
    adversary = _make_adversary(cfg, ctx)
    trace = ExecutionTrace(cfg, ctx, honest)
    trace.tips.append(tuple(s.chain.tip for s in states))
    pending: dict[int, list[Message]] = defaultdict(list)
    delta = cfg.protocol.delta
    for rnd in range(1, cfg.rounds + 1):
        inbox = _dedup(pending.pop(rnd, []))
        new_txs = [f"tx{rnd}.{i}" for i in range(cfg.tx_per_round)]
        sent = []
        for st in states:
            msg = execute_round(st, inbox, ctx, rnd, new_txs)
            if msg is not None:
                sent.append(msg)
                if msg.chain is not None:  # newest block only when several land in one round
                    trace.events.append(MinedEvent(rnd, st.party, "block", msg.chain.tip.hash))
                trace.events.extend(MinedEvent(rnd, st.party, "share", s.hash) for s in msg.objects)
        if adversary is not None:
            released = adversary.act(rnd, sent)
            out = adversary.last
            trace.events.extend(MinedEvent(rnd, adversary.party, "block", b.hash) for b in out.blocks)
            trace.events.extend(MinedEvent(rnd, adversary.party, "share", s.hash) for s in out.shares)
            pending[rnd + 1].extend(released)
            trace.messages += len(released)
        pending[rnd + delta].extend(sent)
        trace.messages += len(sent)
        trace.tips.append(tuple(s.chain.tip for s in states))
    return trace
