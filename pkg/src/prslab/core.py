"""Work objects, intrinsic work and the simulated random oracle."""
from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

DEFAULT_KAPPA = 64

_U64 = struct.Struct(">Q")
_HEADER = struct.Struct(">QQQQQ")


def intrinsic_work(value: int, kappa: int = DEFAULT_KAPPA) -> int:
    """Intrinsic work of a hash value: ``kappa - floor(log2(value))``.

    A zero hash has no logarithm; it is assigned the maximum work ``kappa``.
    """
    if not 0 <= value < (1 << kappa):
        raise ValueError(f"hash value {value} outside [0, 2^{kappa})")
    if value == 0:
        return kappa
    return kappa - (value.bit_length() - 1)


class Grade(enum.IntEnum):
    NONE = 0
    WORKSHARE = 1
    WORKSHARE_AND_BLOCK = 2


def classify(work: int, t_share: int, t_block: int) -> Grade:
    if work > t_block:
        return Grade.WORKSHARE_AND_BLOCK
    if work > t_share:
        return Grade.WORKSHARE
    return Grade.NONE


def _prf(key: bytes, data: bytes, kappa: int) -> int:
    h = hashlib.blake2b(data, digest_size=8, key=key).digest()
    return int.from_bytes(h, "big") >> (64 - kappa)


def digest(items: Iterable[bytes], *, kappa: int = DEFAULT_KAPPA) -> int:
    """Order-sensitive digest of a list of byte strings.

    Items are length-prefixed so that concatenation boundaries matter.
    """
    h = hashlib.blake2b(digest_size=8, person=b"prslab-digest")
    n = 0
    for item in items:
        h.update(_U64.pack(len(item)))
        h.update(item)
        n += 1
    h.update(_U64.pack(n))
    return int.from_bytes(h.digest(), "big") >> (64 - kappa)


EMPTY_DIGEST = digest([])  # sentinel for empty lists at the default width


def tx_digest(txs: Sequence[str], *, kappa: int = DEFAULT_KAPPA) -> int:
    return digest((t.encode() for t in txs), kappa=kappa)


def share_digest(shares: Iterable["WorkObject"], *, kappa: int = DEFAULT_KAPPA) -> int:
    """Digest of a share list, canonicalised by sorting on hash."""
    hashes = sorted(s.hash for s in shares)
    return digest((_U64.pack(h) for h in hashes), kappa=kappa)


class WorkObjectHeader(NamedTuple):
    tx_digest: int
    share_digest: int
    parent: int
    stable: int  # hash of the block kappa_safety deep, 0 when absent
    nonce: int

    def pack(self) -> bytes:
        return _HEADER.pack(*self)


@dataclass(frozen=True, eq=False)
class WorkObject:
    """A header plus the lists it commits to.

    Depending on its intrinsic work an object is a workshare, a block, or
    both; as a block that lost a fork it is referenced later as an uncle.
    ``height`` is one more than the height of the referenced block.
    """

    header: WorkObjectHeader
    hash: int
    work: int
    height: int
    tx_list: tuple[str, ...] = ()
    share_list: tuple["WorkObject", ...] = ()
    miner: int = -1
    mint_round: int = 0

    @property
    def parent(self) -> int:
        return self.header.parent

    def __hash__(self):
        return self.hash

    def __eq__(self, other):
        return isinstance(other, WorkObject) and other.hash == self.hash

    def __repr__(self):
        return f"WorkObject(h={self.hash:#x}, height={self.height}, work={self.work}, miner={self.miner})"


class RandomOracle:
    """Keyed hash standing in for the ideal random oracle.

    Outputs depend only on the execution seed and the queried header, so an
    execution replays bit-exactly.  Nonces are derived per (party, round) and
    increase by one per query.
    """

    def __init__(self, seed: int, kappa: int = DEFAULT_KAPPA):
        if not 1 <= kappa <= 64:
            raise ValueError("kappa must lie in [1, 64]")
        self.seed = seed
        self.kappa = kappa
        self._key = hashlib.blake2b(_U64.pack(seed & (2**64 - 1)), digest_size=32).digest()

    def query(self, header: WorkObjectHeader) -> int:
        return _prf(self._key, header.pack(), self.kappa)

    def first_nonce(self, party: int, rnd: int) -> int:
        # room for 2^20 queries per round without wrapping
        base = _prf(self._key, b"nonce" + _U64.pack(party) + _U64.pack(rnd), 64)
        return base & ~((1 << 20) - 1) & (2**64 - 1)


def make_genesis(kappa: int = DEFAULT_KAPPA) -> WorkObject:
    empty = digest([], kappa=kappa)
    header = WorkObjectHeader(empty, empty, 0, 0, 0)
    h = RandomOracle(0, kappa).query(header)
    return WorkObject(header, h, 0, 0, miner=-1, mint_round=0)


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol and execution-model parameters.

    Thresholds are work bits: an object is a block iff ``work > t_block`` and
    a workshare iff ``work > t_share``, so the per-query probabilities are
    ``2**-t_block`` and ``2**-t_share``.
    """

    t_block: int = 7
    t_share: int = 1
    recency: int = 17
    wfork: int = 6
    safety: int = 6
    n: int = 10
    rho: float = 0.0
    q: int = 1
    delta: int = 1
    kappa: int = DEFAULT_KAPPA
    per_height_reward: float = 1.0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0 <= self.t_share <= self.t_block < self.kappa:
            raise ValueError("need 0 <= t_share <= t_block < kappa")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        for name in ("recency", "wfork", "safety", "n", "q", "delta"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def p(self) -> float:
        """Probability that one query yields a block."""
        return 2.0 ** -self.t_block

    @property
    def p_f(self) -> float:
        """Probability that one query yields a workshare."""
        return 2.0 ** -self.t_share
