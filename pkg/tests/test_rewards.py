import csv
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import block, build_chain, share
from prslab.core import ProtocolConfig
from prslab.protocol import Chain, ProtocolContext
from prslab.rewards import (
    DegenerateHeight,
    EligibleObject,
    NotFinalized,
    ObjectKind,
    allocate_all,
    allocate_height,
    eligible_by_height,
    finalized_heights,
    legacy_block_reward,
    legacy_block_weight,
    legacy_share_bits,
    legacy_share_reward,
    legacy_share_weight,
    split_height,
)


def obj(work, owner=0, kind=ObjectKind.WORKSHARE, h=1):
    return EligibleObject(kind, 1, work, owner, 2, h)


@pytest.fixture
def ctx():
    return ProtocolContext(ProtocolConfig(recency=3, wfork=2), seed=8)


def test_lone_block_takes_everything(ctx):
    chain = Chain(build_chain(ctx, 4, party=5)[-1])  # height recency + 1
    alloc = allocate_all(chain, ctx)
    assert list(alloc.per_height) == [1]
    assert alloc.per_party == {5: 1.0}


def test_split_by_work():
    objs = [obj(3, 0, ObjectKind.BLOCK), obj(1, 1, ObjectKind.UNCLE), obj(4, 2)]
    paid = [p for _, p in split_height(objs, 8.0)]
    assert paid == [3.0, 1.0, 4.0]


def test_empty_height_is_degenerate():
    with pytest.raises(DegenerateHeight):
        split_height([], 1.0)


def test_height_not_yet_final(ctx):
    chain = Chain(build_chain(ctx, 4)[-1])
    with pytest.raises(NotFinalized):
        allocate_height(chain, 2, 1.0, ctx)
    assert allocate_height(chain, 1, 2.0, ctx)


def test_finalized_range(ctx):
    chain = Chain(build_chain(ctx, 10)[-1])
    assert finalized_heights(chain, ctx.cfg) == range(1, 8)


def _chain_with_extras(ctx):
    """Height-1 block by party 0 with a rival (party 1) and shares by party 2."""
    a1 = ctx.add_block(block(ctx, ctx.genesis, party=0))
    rival = ctx.add_block(block(ctx, ctx.genesis, party=1))
    shares = [share(ctx, ctx.genesis, party=2), share(ctx, ctx.genesis, party=2)]
    a2 = ctx.add_block(block(ctx, a1, shares=[rival.obj, *shares], party=0))
    tip = build_chain(ctx, 4, start=a2, party=3)[-1]
    return Chain(tip), a1, rival, shares


def test_height_pot_includes_uncle_and_shares(ctx):
    chain, a1, rival, shares = _chain_with_extras(ctx)
    assert ctx.valid_chain(chain)
    got = allocate_height(chain, 1, 1.0, ctx)
    total = a1.obj.work + rival.obj.work + sum(s.work for s in shares)
    assert got[0] == pytest.approx(a1.obj.work / total)
    assert got[1] == pytest.approx(rival.obj.work / total)
    assert got[2] == pytest.approx(sum(s.work for s in shares) / total)


def test_stale_share_gets_nothing(ctx):
    # recency = 3: a share on genesis included at height 5 is out of the window
    main = build_chain(ctx, 4, party=0)
    late = share(ctx, ctx.genesis, party=9)
    tip = ctx.add_block(block(ctx, main[-1], shares=[late], party=0))
    tip = build_chain(ctx, 3, start=tip)[-1]
    entries = eligible_by_height(Chain(tip), ctx)
    assert all(e.owner != 9 for objs in entries.values() for e in objs)
    assert 9 not in allocate_all(Chain(tip), ctx).per_party


def test_conservation_and_exact_mode(ctx):
    chain, *_ = _chain_with_extras(ctx)
    alloc = allocate_all(chain, ctx, 3.0)
    assert alloc.total() == pytest.approx(3.0 * len(alloc.per_height), rel=1e-9)
    exact = allocate_all(chain, ctx, 3, exact=True)
    assert exact.total() == Fraction(3 * len(exact.per_height))


def test_csv_columns(ctx, tmp_path):
    chain, *_ = _chain_with_extras(ctx)
    path = tmp_path / "alloc.csv"
    allocate_all(chain, ctx).write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["height", "party", "kind", "work", "payout"]
    assert {r[2] for r in rows[1:]} == {"block", "uncle", "workshare"}


works = st.lists(st.integers(1, 64), min_size=1, max_size=12)


@given(works, st.floats(0.1, 1e6))
def test_split_conserves(ws, reward):
    paid = split_height([obj(w, i) for i, w in enumerate(ws)], reward)
    assert sum(p for _, p in paid) == pytest.approx(reward, rel=1e-9)
    assert all(p >= 0 for _, p in paid)


@given(works, st.integers(2, 50))
def test_split_is_scale_invariant(ws, k):
    a = split_height([obj(w, i) for i, w in enumerate(ws)], 1, exact=True)
    b = split_height([obj(w * k, i) for i, w in enumerate(ws)], 1, exact=True)
    assert [p for _, p in a] == [p for _, p in b]


@given(works, st.integers(1, 64))
def test_extra_object_dilutes_everyone(ws, extra):
    before = split_height([obj(w, i) for i, w in enumerate(ws)], 1, exact=True)
    after = split_height([obj(w, i) for i, w in enumerate(ws)] + [obj(extra, 99)], 1, exact=True)
    assert all(p1 < p0 for (_, p0), (_, p1) in zip(before, after))


def test_legacy_formulas():
    assert legacy_share_bits(5.0, 5.0) == 0
    assert legacy_share_bits(1.0, 8.0) == pytest.approx(3)
    assert legacy_share_bits(1.0, 2.0) == pytest.approx(1)
    assert legacy_share_weight(0, 0) == 0.5
    assert legacy_share_weight(3, 3) == 1 / 128
    assert legacy_share_weight(1, 0) == 0.25
    assert legacy_block_weight(1.0, []) == 1.0
    assert legacy_share_reward(10.0, 1.0, legacy_block_weight(1.0, [1.0])) == 5.0
    assert legacy_block_reward(2, 5) == 10
    with pytest.raises(ValueError):
        legacy_share_bits(0, 1)
    with pytest.raises(ZeroDivisionError):
        legacy_share_reward(1.0, 1.0, 0.0)
