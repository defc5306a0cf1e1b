"""Proportional reward splitting for heaviest-chain proof-of-work: protocol
simulator, reward allocation, MDP security evaluation and sampling bounds."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree without installation
    __version__ = "0.1.0"

from .core import (
    Grade,
    ProtocolConfig,
    RandomOracle,
    WorkObject,
    WorkObjectHeader,
    classify,
    digest,
    intrinsic_work,
    make_genesis,
)
from .protocol import Chain, ProtocolContext, Violation, execute_round, extract_ledger, maxvalid
from .rewards import RewardAllocation, allocate_all, allocate_height

__all__ = [
    "__version__", "Grade", "ProtocolConfig", "RandomOracle", "WorkObject", "WorkObjectHeader",
    "classify", "digest", "intrinsic_work", "make_genesis", "Chain", "ProtocolContext",
    "Violation", "execute_round", "extract_ledger", "maxvalid", "RewardAllocation",
    "allocate_all", "allocate_height",
]
