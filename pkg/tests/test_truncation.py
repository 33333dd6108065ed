import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfmcmc.truncation import (
    EstimatorScheme,
    FidelityCapExceeded,
    Geometric,
    log_weight,
    pmf,
    sample,
    weight,
)


def oracle_pmf(g, k):
    return g * (1 - g) ** (k - 1)


@pytest.mark.parametrize("g,k,expected", [(0.1, 1, 0.1), (0.1, 2, 0.09), (0.5, 3, 0.125)])
def test_pmf_examples(g, k, expected):
    assert pmf(Geometric(g), k) == pytest.approx(expected, rel=1e-14)


def test_pmf_sums_to_one_and_survival():
    d = Geometric(0.1)
    ks = np.arange(1, 2000)
    assert sum(d.pmf(int(k)) for k in ks) == pytest.approx(1.0, abs=1e-12)
    assert d.survival(1) == 1.0
    surv = [d.survival(k) for k in range(1, 60)]
    assert all(a > b for a, b in zip(surv, surv[1:]))
    for k in range(1, 30):
        assert d.survival(k) == pytest.approx(1 - sum(d.pmf(j) for j in range(1, k)), abs=1e-14)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
def test_gamma_out_of_range(bad):
    with pytest.raises(ValueError):
        Geometric(bad)


def test_level_zero_rejected():
    with pytest.raises(ValueError):
        Geometric(0.3).pmf(0)


def test_degenerate_limit_returns_one():
    rng = np.random.default_rng(0)
    d = Geometric(1 - 1e-12)
    assert all(sample(d, rng) == 1 for _ in range(1000))


def test_sample_mean_and_first_mass():
    rng = np.random.default_rng(1)
    n = 100_000
    d = Geometric(0.1)
    draws = np.array([sample(d, rng) for _ in range(n)])
    assert draws.min() >= 1
    se = math.sqrt((1 - 0.1) / 0.1**2 / n)
    assert abs(draws.mean() - 10.0) <= 3 * se
    d = Geometric(0.25)
    ones = np.mean([sample(d, rng) == 1 for _ in range(n)])
    assert abs(ones - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / n)


def test_cap_aborts_runaway_sampling():
    d = Geometric(1e-4, k_max=5)
    with pytest.raises(FidelityCapExceeded):
        for _ in range(100):
            sample(d, np.random.default_rng(3))


def test_weight_examples():
    assert weight("rr", 1, 7, Geometric(0.3)) == 1.0
    assert weight("rr", 3, 3, Geometric(0.5)) == pytest.approx(4.0)
    assert weight("rr", 3, 9, Geometric(0.5)) == pytest.approx(4.0)
    assert weight("single-term", 3, 3, Geometric(0.5)) == pytest.approx(8.0)
    assert weight("single-term", 2, 3, Geometric(0.5)) == 0.0


def test_weight_rejects_k_above_K():
    with pytest.raises(ValueError):
        weight("rr", 4, 3, Geometric(0.5))


def test_scheme_parsing():
    assert EstimatorScheme.parse("RR") is EstimatorScheme.RUSSIAN_ROULETTE
    assert EstimatorScheme.parse("single_term") is EstimatorScheme.SINGLE_TERM
    with pytest.raises(ValueError):
        EstimatorScheme.parse("debiased")


def expected_estimate(scheme, g, d):
    """Exact E_K over K <= n plus the geometric tail beyond n (oracle pmf only)."""
    n = len(d)
    dist = Geometric(g)
    total = 0.0
    for K in range(1, n + 1):
        total += oracle_pmf(g, K) * sum(weight(scheme, k, K, dist) * d[k - 1] for k in range(1, K + 1))
    tail = (1 - g) ** n  # P(K > n)
    if scheme == "rr":
        # weights for k <= n do not depend on K once K >= k
        total += tail * sum(weight(scheme, k, n + 1, dist) * d[k - 1] for k in range(1, n + 1))
    return total


@pytest.mark.parametrize("scheme", ["rr", "single-term"])
@pytest.mark.parametrize("g", [0.1, 0.5])
@given(d=st.lists(st.floats(-100, 100), min_size=1, max_size=25))
def test_weights_are_unbiased(scheme, g, d):
    got = expected_estimate(scheme, g, d)
    assert got == pytest.approx(sum(d), rel=1e-9, abs=1e-9 * (1 + sum(abs(x) for x in d)))


@given(d=st.lists(st.floats(-10, 10), min_size=1, max_size=10), extra=st.integers(0, 40))
def test_rr_estimate_invariant_beyond_last_increment(d, extra):
    dist = Geometric(0.2)
    n = len(d)

    def est(K):
        return sum(weight("rr", k, K, dist) * (d[k - 1] if k <= n else 0.0) for k in range(1, K + 1))

    assert est(n + extra) == est(n)


def test_log_weight_single_term_off_diagonal():
    assert log_weight("single-term", 1, 2, Geometric(0.5)) == -math.inf
