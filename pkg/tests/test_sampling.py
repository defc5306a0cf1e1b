import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from prslab.sampling import (
    SamplingCalculator,
    achievable_inaccuracy,
    empirical_validation,
    error_bound,
    format_table,
    kib,
    required_samples,
    rounded_count,
    samples_real,
    sampling_table,
    storage_overhead,
)

unit = st.floats(0.001, 0.999)


def test_reference_counts():
    assert required_samples(0.1, 0.03, 0.85) == 6020
    assert 7800 <= required_samples(0.1, 0.03, 0.65) <= 8000
    assert round(required_samples(0.1, 0.0736, 0.85), -2) == 1000


def test_storage():
    assert storage_overhead(6000, 80) == 480_000
    assert kib(storage_overhead(6000)) == 468.75
    assert kib(storage_overhead(8000)) == 625.0


def test_rounded_headline():
    assert rounded_count(6020) == 6000
    assert rounded_count(7873) == 8000
    assert rounded_count(120) == 100


@given(unit, unit, st.floats(0.01, 1.0))
def test_inversions_round_trip(eps, delta, p):
    n = samples_real(eps, delta, p)
    if n >= 1:
        assert achievable_inaccuracy(n, eps, p) == pytest.approx(delta, rel=1e-9)
        assert error_bound(n, delta, p) == pytest.approx(eps, rel=1e-9)


@given(unit, unit, st.floats(0.01, 0.99), st.floats(1.01, 2.0))
def test_count_decreases_in_each_argument(eps, delta, p, k):
    n = samples_real(eps, delta, p)
    if eps * k < 1:
        assert samples_real(eps * k, delta, p) < n
    if delta * k < 1:
        assert samples_real(eps, delta * k, p) < n
    if p * k <= 1:
        assert samples_real(eps, delta, p * k) < n


@pytest.mark.parametrize("args", [(0, 0.1, 0.5), (1, 0.1, 0.5), (0.1, 0, 0.5), (0.1, 1.2, 0.5), (0.1, 0.1, 0)])
def test_domain_errors(args):
    with pytest.raises(ValueError):
        required_samples(*args)


def test_empirical_rate_within_bound():
    rate = empirical_validation(6020, 0.85, 0.03, trials=10_000, seed=1)
    assert rate <= 0.1 + 3 * math.sqrt(0.1 * 0.9 / 10_000)
    assert empirical_validation(100, 1.0, 0.05) == 0.0


def test_more_samples_fewer_misses():
    a = empirical_validation(500, 0.3, 0.1, trials=20_000, seed=2)
    b = empirical_validation(1000, 0.3, 0.1, trials=20_000, seed=2)
    assert b < a


def test_validation_needs_trials():
    with pytest.raises(ValueError):
        empirical_validation(100, 0.5, 0.1, trials=10)


def test_table_has_reference_row():
    rows = sampling_table([0.85, 0.65], [0.03])
    r = rows[0]
    assert (r.p, r.delta, r.eps, r.n, r.n_rounded, r.kb_rounded) == (0.85, 0.03, 0.1, 6020, 6000, 468.75)
    assert "6020" in format_table(rows)


def test_calculator_estimator():
    calc = SamplingCalculator(eps=0.1).fit([[0.03, 0.85]])
    out = calc.transform(np.array([[0.03, 0.85], [0.03, 0.65]]))
    assert out[0].tolist() == [6020, 6020 * 80, 6020 * 80 / 1024]
    assert out[1, 0] == required_samples(0.1, 0.03, 0.65)
    assert clone(calc).get_params() == {"eps": 0.1, "bytes_per_share": 80}
    with pytest.raises(ValueError):
        SamplingCalculator(eps=2).fit()
    with pytest.raises(ValueError):
        calc.transform([[0.1, 0.2, 0.3]])
