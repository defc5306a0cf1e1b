"""Adversary strategies.  The coalition acts as one entity with the summed query budget."""
from __future__ import annotations

from typing import Sequence

from ..core import WorkObject
from ..protocol import (
    Chain,
    Message,
    PartyState,
    ProtocolContext,
    _admit,
    _switch_chain,
    maxvalid,
    mine,
    sanitize,
)


class Adversary:
    """Rushing adversary: it sees the honest messages of a round before acting.

    Mined blocks and workshares are withheld until the strategy releases them.
    """

    def __init__(self, ctx: ProtocolContext, party: int, queries: int):
        self.ctx = ctx
        self.party = party
        self.queries = queries
        self.public = ctx.genesis_chain()
        self.private = PartyState(party, ctx.genesis_chain(), queries)
        self.withheld: list[WorkObject] = []
        self.published = self.public.tip  # newest private block already broadcast
        self.last = None  # MiningOutcome of the latest round

    def _observe(self, honest: Sequence[Message]) -> bool:
        before = self.public
        chains = [m.chain for m in honest if m.chain is not None]
        self.public = maxvalid(chains, self.public, self.ctx)
        for m in honest:
            for obj in m.objects:
                _admit(self.private, obj, self.ctx)
        return self.public != before

    def _adopt_public(self, rnd: int) -> list[Message]:
        """Abandon the private fork; hand out withheld shares that still count."""
        _switch_chain(self.private, self.public, self.ctx)
        self.published = self.public.tip
        floor = self.public.height + 1 - self.ctx.cfg.recency
        usable = []
        for s in self.withheld:
            ref = self.ctx.resolve(s.parent)
            if ref is not None and self.public.contains(ref) and ref.height >= floor:
                usable.append(s)
        self.withheld = []
        return [Message(self.party, rnd, None, tuple(usable))] if usable else []

    def _mine(self, rnd: int) -> None:
        txs, shares = sanitize(self.private, self.ctx)
        out = mine(self.ctx, self.party, rnd, self.private.chain.tip, txs, shares, self.queries)
        self.last = out
        if out.blocks:
            _switch_chain(self.private, Chain(out.tip), self.ctx)
        for s in out.shares:
            if s.hash not in self.ctx.containers:
                _admit(self.private, s, self.ctx)
            self.withheld.append(s)

    def _release_to(self, height: int, rnd: int) -> list[Message]:
        """Publish the private chain up to ``height`` with the shares it unlocks.

        A withheld share is unlocked when the block it references lies strictly
        below the newly published block.
        """
        tip = self.private.chain.tip
        node = tip.ancestor_at(min(height, tip.height))
        if node is None or node is self.published or node.height <= self.published.height:
            return []
        self.published = node
        unlocked, kept = [], []
        for s in self.withheld:
            ref = self.ctx.resolve(s.parent)
            (unlocked if ref is not None and ref is not node and node.has_ancestor(ref)
             else kept).append(s)
        self.withheld = kept
        # honest parties adopt the release if it is heavier
        self.public = maxvalid([Chain(node)], self.public, self.ctx)
        return [Message(self.party, rnd, Chain(node), tuple(unlocked))]

    def act(self, rnd: int, honest: Sequence[Message]) -> list[Message]:
        raise NotImplementedError


class SelfishMining(Adversary):
    """Withhold blocks and shares; publish in reaction to public blocks.

    Behind: adopt.  Ahead by one or two when a public block appears: release
    everything.  Ahead by more: release the next two private blocks.
    """

    def act(self, rnd: int, honest: Sequence[Message]) -> list[Message]:
        prev_public = self.public.height
        out: list[Message] = []
        if self._observe(honest):
            priv = self.private.chain
            lead_before = priv.height - prev_public
            if priv.height < self.public.height or self.public.contains(priv.tip):
                out += self._adopt_public(rnd)
            elif lead_before in (1, 2):
                out += self._release_to(priv.height, rnd)
            elif lead_before > 2:
                out += self._release_to(self.published.height + 2, rnd)
        self._mine(rnd)
        return out


class PrivateChain(Adversary):
    """Mine a private fork and publish it once it leads by ``release_lead`` blocks."""

    def __init__(self, ctx: ProtocolContext, party: int, queries: int, release_lead: int, give_up: int):
        super().__init__(ctx, party, queries)
        self.release_lead = release_lead
        self.give_up = give_up

    def act(self, rnd: int, honest: Sequence[Message]) -> list[Message]:
        self._observe(honest)
        out: list[Message] = []
        priv = self.private.chain
        if self.public.height - priv.height > self.give_up or (
                self.public.contains(priv.tip) and self.public != priv):
            out += self._adopt_public(rnd)
        self._mine(rnd)
        priv = self.private.chain
        if priv.height - self.public.height >= self.release_lead:
            out += self._release_to(priv.height, rnd)
        return out
