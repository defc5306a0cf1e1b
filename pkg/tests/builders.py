"""Hand-built blocks and workshares for protocol and reward tests."""
from __future__ import annotations

import itertools

from prslab.core import WorkObject, WorkObjectHeader, intrinsic_work, share_digest, tx_digest
from prslab.protocol import BlockNode, ProtocolContext, stable_ref

_nonces = itertools.count(1 << 40)


def grind(ctx: ProtocolContext, parent: BlockNode, accept, *, txs=(), shares=(), party=0, rnd=0,
          max_tries=1 << 16) -> WorkObject:
    """First object on ``parent`` whose work satisfies ``accept``."""
    cfg = ctx.cfg
    txd = tx_digest(list(txs), kappa=cfg.kappa)
    sd = share_digest(shares, kappa=cfg.kappa)
    stable = stable_ref(parent, cfg.safety)
    for _ in range(max_tries):
        header = WorkObjectHeader(txd, sd, parent.hash, stable, next(_nonces))
        h = ctx.oracle.query(header)
        work = intrinsic_work(h, cfg.kappa)
        if accept(work):
            return WorkObject(header, h, work, parent.height + 1, tuple(txs), tuple(shares), party, rnd)
    raise RuntimeError("no nonce found")


def block(ctx, parent, **kw) -> WorkObject:
    return grind(ctx, parent, lambda w: w > ctx.cfg.t_block, **kw)


def share(ctx, parent, **kw) -> WorkObject:
    """Workshare-only object (no lists, as shares travel as headers)."""
    return grind(ctx, parent, lambda w: ctx.cfg.t_share < w <= ctx.cfg.t_block, **kw)


def dud(ctx, parent, **kw) -> WorkObject:
    return grind(ctx, parent, lambda w: w <= ctx.cfg.t_share, **kw)


def exact_work(ctx, parent, work, **kw) -> WorkObject:
    return grind(ctx, parent, lambda w: w == work, **kw)


def extend(ctx, parent: BlockNode, **kw) -> BlockNode:
    return ctx.add_block(block(ctx, parent, **kw))


def build_chain(ctx, length: int, start: BlockNode | None = None, **kw) -> list[BlockNode]:
    """``length`` blocks on top of ``start`` (genesis by default)."""
    node = ctx.genesis if start is None else start
    out = []
    for i in range(length):
        node = extend(ctx, node, **kw)
        out.append(node)
    return out
