"""Workshare count needed to estimate a party's mining power.

A party holding fraction ``p`` of the power contributes a Binomial(n, p)
number of the ``n`` sampled workshares.  The Chernoff tail
``eps = exp(-delta**2 * n * p / 2)`` links the sample count ``n``, the relative
accuracy ``delta`` and the error probability ``eps``; every function here is
one of its algebraic inversions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

BYTES_PER_SHARE = 80
KIB = 1024


def _check_unit(name: str, v: float, *, closed_top: bool = False) -> None:
    ok = 0.0 < v <= 1.0 if closed_top else 0.0 < v < 1.0
    if not ok or math.isnan(v):
        raise ValueError(f"{name} must lie in (0, 1{']' if closed_top else ')'}, got {v}")


def samples_real(eps: float, delta: float, p: float) -> float:
    """Sample count before rounding up."""
    _check_unit("eps", eps)
    _check_unit("delta", delta)
    _check_unit("p", p, closed_top=True)
    return -2.0 * math.log(eps) / (delta * delta * p)


def required_samples(eps: float, delta: float, p: float) -> int:
    return math.ceil(samples_real(eps, delta, p))


def achievable_inaccuracy(n: float, eps: float, p: float) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_unit("eps", eps)
    _check_unit("p", p, closed_top=True)
    return math.sqrt(-2.0 * math.log(eps) / (n * p))


def error_bound(n: float, delta: float, p: float) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_unit("delta", delta)
    _check_unit("p", p, closed_top=True)
    return math.exp(-delta * delta * n * p / 2.0)


def storage_overhead(n: int, bytes_per_share: int = BYTES_PER_SHARE) -> int:
    if n < 0 or bytes_per_share < 0:
        raise ValueError("n and bytes_per_share must be non-negative")
    return n * bytes_per_share


def kib(n_bytes: float) -> float:
    return n_bytes / KIB


def rounded_count(n: int) -> int:
    """Headline figure: nearest thousand from 1000 up, nearest hundred below."""
    step = 1000 if n >= 1000 else 100
    return int(round(n / step) * step)


def empirical_validation(n: int, p: float, delta: float, trials: int = 10_000, seed: int = 0,
                         *, tail: str = "two-sided") -> float:
    """Monte-Carlo rate at which the observed share fraction misses ``p`` by more than ``delta * p``."""
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_unit("p", p, closed_top=True)
    rng = np.random.default_rng(seed)
    frac = rng.binomial(n, p, size=trials) / n
    if tail == "two-sided":
        miss = np.abs(frac - p) > delta * p
    elif tail == "lower":
        miss = frac < (1.0 - delta) * p
    elif tail == "upper":
        miss = frac > (1.0 + delta) * p
    else:
        raise ValueError(f"unknown tail {tail!r}")
    return float(miss.mean())


@dataclass(frozen=True)
class SamplingRow:
    p: float
    delta: float
    eps: float
    n: int
    n_rounded: int
    bytes: int
    kb: float
    kb_rounded: float  # storage of the rounded headline count


def sampling_table(ps: Iterable[float], deltas: Iterable[float], eps: float = 0.1,
                   bytes_per_share: int = BYTES_PER_SHARE) -> list[SamplingRow]:
    rows = []
    deltas = list(deltas)
    for p in ps:
        for d in deltas:
            n = required_samples(eps, d, p)
            b = storage_overhead(n, bytes_per_share)
            nr = rounded_count(n)
            rows.append(SamplingRow(p, d, eps, n, nr, b, kib(b), kib(storage_overhead(nr, bytes_per_share))))
    return rows


def format_table(rows: Iterable[SamplingRow]) -> str:
    lines = [f"{'p':>6} {'delta':>7} {'eps':>6} {'n':>9} {'bytes':>11} {'KB':>10} {'n~':>9} {'KB~':>10}"]
    for r in rows:
        lines.append(f"{r.p:>6.3g} {r.delta:>7.4g} {r.eps:>6.3g} {r.n:>9d} {r.bytes:>11d} {r.kb:>10.2f} "
                     f"{r.n_rounded:>9d} {r.kb_rounded:>10.2f}")
    return "\n".join(lines)


class SamplingCalculator(TransformerMixin, BaseEstimator):
    """Map rows of ``(delta, p)`` to ``(n, bytes, KB)``.

    Stateless: ``fit`` only validates the parameters.
    """

    def __init__(self, eps=0.1, bytes_per_share=BYTES_PER_SHARE):
        self.eps = eps
        self.bytes_per_share = bytes_per_share

    def fit(self, X=None, y=None):
        _check_unit("eps", self.eps)
        if self.bytes_per_share < 0:
            raise ValueError("bytes_per_share must be non-negative")
        if X is not None:
            X = check_array(X)
            self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError("expected two columns: delta, p")
        out = np.empty((X.shape[0], 3))
        for i, (d, p) in enumerate(X):
            n = required_samples(self.eps, float(d), float(p))
            b = storage_overhead(n, self.bytes_per_share)
            out[i] = (n, b, kib(b))
        return out
