"""Validity rules, heaviest-chain selection and the per-round mining loop.

Blocks are stored once per execution as :class:`BlockNode` objects linked to
their parents, so a :class:`Chain` is just a tip and chains of different
parties share their common prefix.  Validation verdicts depend only on a
block and its ancestry, so they are memoised per block hash.
"""
from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import (
    ProtocolConfig,
    RandomOracle,
    WorkObject,
    WorkObjectHeader,
    _U64,
    digest,
    intrinsic_work,
    make_genesis,
    share_digest,
    tx_digest,
)


class Violation(str, enum.Enum):
    DUPLICATE_OBJECT = "DUPLICATE_OBJECT"
    INSUFFICIENT_WORK = "INSUFFICIENT_WORK"
    FORK_TOO_DEEP = "FORK_TOO_DEEP"
    STALE = "STALE"
    DANGLING_REF = "DANGLING_REF"
    INVALID_REF = "INVALID_REF"
    BAD_DIGEST = "BAD_DIGEST"
    BAD_HASH = "BAD_HASH"
    BAD_HEIGHT = "BAD_HEIGHT"
    INVALID_TX = "INVALID_TX"
    INVALID_SHARE = "INVALID_SHARE"


@dataclass(frozen=True)
class Finding:
    code: Violation
    obj: int
    detail: str = ""


class BlockNode:
    __slots__ = ("obj", "parent", "height", "total_work", "records")

    def __init__(self, obj: WorkObject, parent: "BlockNode | None"):
        self.obj = obj
        self.parent = parent
        if parent is None:
            self.height = 0
            self.total_work = 0
            self.records = 0
        else:
            self.height = parent.height + 1
            self.total_work = parent.total_work + obj.work
            # the block itself plus every workshare/uncle it carries
            self.records = parent.records + 1 + len(obj.share_list)

    @property
    def hash(self) -> int:
        return self.obj.hash

    def ancestor_at(self, height: int) -> "BlockNode | None":
        if height < 0 or height > self.height:
            return None
        node = self
        while node.height > height:
            node = node.parent
        return node

    def has_ancestor(self, other: "BlockNode") -> bool:
        """True if ``other`` lies on the path from genesis to this node (inclusive)."""
        return self.ancestor_at(other.height) is other

    def __repr__(self):
        return f"BlockNode(height={self.height}, h={self.obj.hash:#x})"


class Chain:
    """Immutable view of the chain ending at ``tip``."""

    __slots__ = ("tip",)

    def __init__(self, tip: BlockNode):
        self.tip = tip

    @property
    def height(self) -> int:
        return self.tip.height

    @property
    def total_work(self) -> int:
        return self.tip.total_work

    def __len__(self):
        return self.tip.height + 1

    def __eq__(self, other):
        return isinstance(other, Chain) and other.tip is self.tip

    def __hash__(self):
        return self.tip.obj.hash

    def __repr__(self):
        return f"Chain(len={len(self)}, work={self.total_work})"

    def contains(self, node: BlockNode) -> bool:
        return self.tip.has_ancestor(node)

    def block_at(self, height: int) -> BlockNode | None:
        return self.tip.ancestor_at(height)

    def nodes(self) -> list[BlockNode]:
        out = []
        node = self.tip
        while node is not None:
            out.append(node)
            node = node.parent
        out.reverse()
        return out

    @property
    def blocks(self) -> list[WorkObject]:
        return [n.obj for n in self.nodes()]

    def prefix(self, height: int) -> "Chain":
        return Chain(self.tip.ancestor_at(height))


def common_ancestor(a: BlockNode, b: BlockNode) -> BlockNode:
    while a.height > b.height:
        a = a.parent
    while b.height > a.height:
        b = b.parent
    while a is not b:
        a, b = a.parent, b.parent
    return a


def fork_diff(old: BlockNode, new: BlockNode) -> tuple[list[BlockNode], list[BlockNode]]:
    """Blocks leaving and joining the chain when switching from ``old`` to ``new``."""
    base = common_ancestor(old, new)
    detached, attached = [], []
    while old is not base:
        detached.append(old)
        old = old.parent
    while new is not base:
        attached.append(new)
        new = new.parent
    attached.reverse()
    return detached, attached


class ProtocolContext:
    """Per-execution block store, oracle and memoised validation verdicts."""

    def __init__(self, cfg: ProtocolConfig, seed: int = 0):
        self.cfg = cfg
        self.oracle = RandomOracle(seed, cfg.kappa)
        self.genesis = BlockNode(make_genesis(cfg.kappa), None)
        self.nodes: dict[int, BlockNode] = {self.genesis.hash: self.genesis}
        self.containers: dict[int, list[BlockNode]] = {}
        self.tx_containers: dict[str, list[BlockNode]] = {}
        self.verdicts: dict[int, tuple[Finding, ...]] = {self.genesis.hash: ()}

    def genesis_chain(self) -> Chain:
        return Chain(self.genesis)

    def resolve(self, h: int) -> BlockNode | None:
        return self.nodes.get(h)

    def add_block(self, obj: WorkObject) -> BlockNode:
        """Insert a block under its parent; validation happens separately."""
        node = self.nodes.get(obj.hash)
        if node is not None:
            return node
        parent = self.nodes.get(obj.parent)
        if parent is None:
            raise KeyError(f"parent {obj.parent:#x} unknown")
        node = BlockNode(obj, parent)
        self.nodes[obj.hash] = node
        for s in obj.share_list:
            self.containers.setdefault(s.hash, []).append(node)
        for t in obj.tx_list:
            self.tx_containers.setdefault(t, []).append(node)
        return node

    def verdict(self, node: BlockNode) -> tuple[Finding, ...]:
        """Findings of ``node`` against its own ancestry, memoised."""
        got = self.verdicts.get(node.hash)
        if got is not None:
            return got
        # validate the unvalidated suffix iteratively, oldest first
        pending = []
        x = node
        while x.hash not in self.verdicts:
            pending.append(x)
            x = x.parent
        bad_parent = bool(self.verdicts[x.hash])
        for x in reversed(pending):
            if bad_parent:
                res = (Finding(Violation.INVALID_REF, x.hash, "parent invalid"),)
            else:
                res = tuple(validate_block(x.obj, Chain(x.parent), self))
            self.verdicts[x.hash] = res
            bad_parent = bool(res)
        return self.verdicts[node.hash]

    def is_valid(self, node: BlockNode) -> bool:
        return not self.verdict(node)

    def valid_chain(self, chain: Chain) -> bool:
        return self.is_valid(chain.tip)


def _included_in(ctx: ProtocolContext, obj_hash: int, base: BlockNode, exclude: int | None = None) -> bool:
    for c in ctx.containers.get(obj_hash, ()):
        if c.hash != exclude and base.has_ancestor(c):
            return True
    return False


def validate_workshare(ws: WorkObject, chain: Chain, containing_height: int,
                       ctx: ProtocolContext, *, exclude: int | None = None) -> list[Finding]:
    """Findings for ``ws`` placed in a block at ``containing_height`` on top of ``chain``."""
    cfg = ctx.cfg
    out = []
    if ctx.oracle.query(ws.header) != ws.hash:
        out.append(Finding(Violation.BAD_HASH, ws.hash))
    if ws.work != intrinsic_work(ws.hash, cfg.kappa) or ws.work <= cfg.t_share:
        out.append(Finding(Violation.INSUFFICIENT_WORK, ws.hash))
    ref = ctx.resolve(ws.parent)
    if ref is None:
        out.append(Finding(Violation.DANGLING_REF, ws.hash))
    else:
        if not ctx.is_valid(ref):
            out.append(Finding(Violation.INVALID_REF, ws.hash))
        if not containing_height - cfg.recency <= ref.height <= containing_height - 1:
            out.append(Finding(Violation.STALE, ws.hash, f"ref height {ref.height}"))
        if ws.height != ref.height + 1:
            out.append(Finding(Violation.BAD_HEIGHT, ws.hash))
    if _included_in(ctx, ws.hash, chain.tip, exclude):
        out.append(Finding(Violation.DUPLICATE_OBJECT, ws.hash))
    return out


def fork_depth(node: BlockNode, chain: Chain, limit: int) -> int:
    """Hops from ``node`` to the first block of ``chain``, capped at ``limit + 1``."""
    hops = 0
    while not chain.contains(node):
        hops += 1
        if hops > limit:
            break
        node = node.parent
    return hops


def validate_uncle(u: WorkObject, chain: Chain, containing_height: int,
                   ctx: ProtocolContext, *, exclude: int | None = None) -> list[Finding]:
    """Findings for block ``u`` referenced as an uncle at ``containing_height``."""
    cfg = ctx.cfg
    out = []
    if ctx.oracle.query(u.header) != u.hash:
        out.append(Finding(Violation.BAD_HASH, u.hash))
    if u.work != intrinsic_work(u.hash, cfg.kappa) or u.work <= cfg.t_block:
        out.append(Finding(Violation.INSUFFICIENT_WORK, u.hash))
    node = ctx.resolve(u.hash)
    parent = ctx.resolve(u.parent)
    if parent is None:
        out.append(Finding(Violation.DANGLING_REF, u.hash))
        return out
    if u.height != parent.height + 1:
        out.append(Finding(Violation.BAD_HEIGHT, u.hash))
    if node is not None and chain.contains(node):
        out.append(Finding(Violation.DUPLICATE_OBJECT, u.hash, "uncle is a canonical block"))
        return out
    if not ctx.is_valid(parent):
        out.append(Finding(Violation.INVALID_REF, u.hash))
    if not containing_height - cfg.recency <= u.height <= containing_height - 1:
        out.append(Finding(Violation.STALE, u.hash, f"uncle height {u.height}"))
    # fork depth is read at the referenced parent, as for workshares
    depth = fork_depth(parent, chain, cfg.wfork)
    if depth > cfg.wfork:
        out.append(Finding(Violation.FORK_TOO_DEEP, u.hash, f"depth {depth}"))
    if _included_in(ctx, u.hash, chain.tip, exclude):
        out.append(Finding(Violation.DUPLICATE_OBJECT, u.hash))
    return out


def validate_included(obj: WorkObject, chain: Chain, containing_height: int,
                      ctx: ProtocolContext, *, exclude: int | None = None) -> list[Finding]:
    """Validate a shareList entry as an uncle or a workshare depending on its work."""
    if obj.work > ctx.cfg.t_block:
        return validate_uncle(obj, chain, containing_height, ctx, exclude=exclude)
    return validate_workshare(obj, chain, containing_height, ctx, exclude=exclude)


def validate_block(b: WorkObject, chain: Chain, ctx: ProtocolContext) -> list[Finding]:
    """Findings for block ``b`` whose parent must be a block of ``chain``.

    An empty list means the block is valid.
    """
    cfg = ctx.cfg
    out = []
    parent = ctx.resolve(b.parent)
    if parent is None or not chain.contains(parent):
        return [Finding(Violation.DANGLING_REF, b.hash, "parent not in chain")]
    base = Chain(parent)
    if ctx.oracle.query(b.header) != b.hash:
        out.append(Finding(Violation.BAD_HASH, b.hash))
    if b.work != intrinsic_work(b.hash, cfg.kappa) or b.work <= cfg.t_block:
        out.append(Finding(Violation.INSUFFICIENT_WORK, b.hash))
    if b.height != parent.height + 1:
        out.append(Finding(Violation.BAD_HEIGHT, b.hash))
    if b.header.tx_digest != tx_digest(b.tx_list, kappa=cfg.kappa):
        out.append(Finding(Violation.BAD_DIGEST, b.hash, "txList"))
    if b.header.share_digest != share_digest(b.share_list, kappa=cfg.kappa):
        out.append(Finding(Violation.BAD_DIGEST, b.hash, "shareList"))
    if len(set(b.tx_list)) != len(b.tx_list):
        out.append(Finding(Violation.INVALID_TX, b.hash, "repeated transaction"))
    for t in b.tx_list:
        if any(c.hash != b.hash and parent.has_ancestor(c) for c in ctx.tx_containers.get(t, ())):
            out.append(Finding(Violation.INVALID_TX, b.hash, f"{t} already in chain"))
    seen = set()
    for s in b.share_list:
        if s.hash in seen or s.hash == b.hash:
            out.append(Finding(Violation.DUPLICATE_OBJECT, s.hash, "repeated in shareList"))
            continue
        seen.add(s.hash)
        for f in validate_included(s, base, b.height, ctx, exclude=b.hash):
            out.append(f)
    return out


def maxvalid(candidates: Iterable[Chain], current: Chain, ctx: ProtocolContext) -> Chain:
    """Heaviest valid chain; the current chain wins ties, then the earliest candidate."""
    best = current
    for c in candidates:
        if c.total_work > best.total_work and ctx.valid_chain(c):
            best = c
    return best


def extract_ledger(chain: Chain, safety: int) -> list[str]:
    """Transactions of every block except the last ``safety`` ones, in order."""
    keep = len(chain) - safety
    if keep <= 0:
        return []
    out = []
    for obj in chain.blocks[:keep]:
        out.extend(obj.tx_list)
    return out


class ShareList:
    """Ordered share selection with its canonical digest kept up to date."""

    __slots__ = ("items", "_sorted", "_kappa", "_digest")

    def __init__(self, kappa: int, items: Sequence[WorkObject] = ()):
        self.items = list(items)
        self._sorted = sorted(_U64.pack(s.hash) for s in self.items)
        self._kappa = kappa
        self._digest = None

    def append(self, obj: WorkObject) -> None:
        self.items.append(obj)
        bisect.insort(self._sorted, _U64.pack(obj.hash))
        self._digest = None

    @property
    def digest(self) -> int:
        if self._digest is None:
            self._digest = digest(self._sorted, kappa=self._kappa)
        return self._digest

    def __len__(self):
        return len(self.items)


@dataclass
class Message:
    sender: int
    round: int
    chain: Chain | None
    objects: tuple[WorkObject, ...] = ()


@dataclass
class PartyState:
    """Local view of one party: adopted chain and sanitised mempools."""

    party: int
    chain: Chain
    queries: int
    mempool_tx: dict[str, None] = field(default_factory=dict)
    mempool_shares: dict[int, WorkObject] = field(default_factory=dict)
    round: int = 0
    _clean: list[WorkObject] | None = None
    _clean_tip: int | None = None


def _switch_chain(state: PartyState, new: Chain, ctx: ProtocolContext) -> None:
    detached, attached = fork_diff(state.chain.tip, new.tip)
    for node in detached:
        for t in node.obj.tx_list:
            state.mempool_tx[t] = None
        state.mempool_shares[node.hash] = node.obj  # candidate uncle
        for s in node.obj.share_list:
            state.mempool_shares[s.hash] = s
    for node in attached:
        for t in node.obj.tx_list:
            state.mempool_tx.pop(t, None)
        state.mempool_shares.pop(node.hash, None)
        for s in node.obj.share_list:
            state.mempool_shares.pop(s.hash, None)
    state.chain = new
    state._clean = None


def _collect_uncles(state: PartyState, other: Chain, ctx: ProtocolContext) -> None:
    """Keep recent blocks of a rejected chain as uncle candidates."""
    floor = state.chain.height - ctx.cfg.recency
    node = other.tip
    while node is not None and node.height > floor and not state.chain.contains(node):
        if node.hash not in state.mempool_shares:
            state.mempool_shares[node.hash] = node.obj
            state._clean = None
        node = node.parent


def sanitize(state: PartyState, ctx: ProtocolContext) -> tuple[list[str], list[WorkObject]]:
    """Transactions and shares that may go into the next block on the local tip.

    Stale or already-included shares are dropped from the mempool for good.
    """
    cfg = ctx.cfg
    chain = state.chain
    H = chain.height + 1
    if state._clean is not None and state._clean_tip == chain.tip.hash:
        shares = state._clean
    else:
        shares = []
        for h, obj in list(state.mempool_shares.items()):
            is_uncle = obj.work > cfg.t_block
            if is_uncle:
                node = ctx.resolve(h)
                if node is not None and chain.contains(node):
                    del state.mempool_shares[h]
                    continue
            if obj.height - (0 if is_uncle else 1) < H - cfg.recency:
                del state.mempool_shares[h]
                continue
            if _included_in(ctx, h, chain.tip):
                del state.mempool_shares[h]
                continue
            if not validate_included(obj, chain, H, ctx):
                shares.append(obj)
        state._clean = shares
        state._clean_tip = chain.tip.hash
    txs = [t for t in state.mempool_tx
           if not any(chain.tip.has_ancestor(c) for c in ctx.tx_containers.get(t, ()))]
    return txs, list(shares)


def _admit(state: PartyState, obj: WorkObject, ctx: ProtocolContext) -> None:
    """Add a received object to the mempool, keeping the sanitised list current."""
    if obj.hash in state.mempool_shares:
        return
    state.mempool_shares[obj.hash] = obj
    if state._clean is not None and state._clean_tip == state.chain.tip.hash:
        if not validate_included(obj, state.chain, state.chain.height + 1, ctx):
            state._clean.append(obj)


@dataclass
class MiningOutcome:
    tip: BlockNode
    shares: list[WorkObject]
    blocks: list[BlockNode]


def stable_ref(tip: BlockNode, safety: int) -> int:
    anc = tip.ancestor_at(tip.height - safety)
    return anc.hash if anc is not None else 0


def mine(ctx: ProtocolContext, party: int, rnd: int, tip: BlockNode, txs: list[str],
         shares: list[WorkObject], queries: int, *, first_nonce: int | None = None) -> MiningOutcome:
    """Spend ``queries`` oracle calls on top of ``tip``.

    Every workshare-grade result joins the share list at once; a block-grade
    result extends the chain and mining continues on the new tip.
    """
    cfg = ctx.cfg
    oracle = ctx.oracle
    kappa = cfg.kappa
    nonce = oracle.first_nonce(party, rnd) if first_nonce is None else first_nonce
    sl = ShareList(kappa, shares)
    txs = list(txs)
    txd = tx_digest(txs, kappa=kappa)
    stable = stable_ref(tip, cfg.safety)
    mined_shares: list[WorkObject] = []
    mined_blocks: list[BlockNode] = []
    for _ in range(queries):
        header = WorkObjectHeader(txd, sl.digest, tip.hash, stable, nonce)
        nonce += 1
        h = oracle.query(header)
        work = kappa - (h.bit_length() - 1) if h else kappa
        if work <= cfg.t_share:
            continue
        obj = WorkObject(header, h, work, tip.height + 1, tuple(txs), tuple(sl.items), party, rnd)
        if work > cfg.t_block:
            node = ctx.add_block(obj)
            mined_blocks.append(node)
            tip = node
            txs = []
            txd = tx_digest(txs, kappa=kappa)
            sl = ShareList(kappa)
            stable = stable_ref(tip, cfg.safety)
        else:
            # shares travel as headers; their lists are not needed to validate them
            share = WorkObject(header, h, work, tip.height + 1, (), (), party, rnd)
            sl.append(share)
            mined_shares.append(share)
    return MiningOutcome(tip, mined_shares, mined_blocks)


def execute_round(state: PartyState, inbox: Sequence[Message], ctx: ProtocolContext,
                  rnd: int, new_txs: Iterable[str] = ()) -> Message | None:
    """One honest round: adopt the heaviest valid chain, sanitise, mine, announce."""
    for t in new_txs:
        state.mempool_tx[t] = None
    chains = [m.chain for m in inbox if m.chain is not None]
    best = maxvalid(chains, state.chain, ctx)
    if best != state.chain:
        _switch_chain(state, best, ctx)
    for c in chains:
        if c != state.chain and ctx.valid_chain(c):
            _collect_uncles(state, c, ctx)
    for m in inbox:
        for obj in m.objects:
            _admit(state, obj, ctx)
    txs, shares = sanitize(state, ctx)
    out = mine(ctx, state.party, rnd, state.chain.tip, txs, shares, state.queries)
    state.round = rnd
    changed = bool(out.blocks)
    if changed:
        _switch_chain(state, Chain(out.tip), ctx)
    for s in out.shares:
        if s.hash not in ctx.containers:
            _admit(state, s, ctx)
    if changed or out.shares:
        return Message(state.party, rnd, state.chain if changed else None, tuple(out.shares))
    return None
