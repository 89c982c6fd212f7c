import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chordmix.errors import ValidationError
from chordmix.gaps import (
    GAMMA3_DEFAULT,
    euler_phi,
    exclusion_cover,
    good_k_bruteforce,
    good_k_set,
    phi_ratio_sum,
    phi_sum_deviation,
    phi_table,
    scan_length,
    separation,
)

# first twenty totients, frozen from a table of arithmetic functions
PHI_1_TO_20 = [1, 1, 2, 2, 4, 2, 6, 4, 6, 4, 10, 4, 12, 6, 8, 8, 16, 6, 18, 8]


def test_phi_small_values():
    assert [euler_phi(m) for m in range(1, 21)] == PHI_1_TO_20
    assert phi_table(20)[1:].tolist() == PHI_1_TO_20


@given(st.integers(1, 5000))
def test_phi_routes_agree(m):
    assert euler_phi(m) == int(phi_table(m)[m])


@given(st.integers(1, 2000))
def test_phi_counts_coprime_residues(m):
    if m <= 300:
        assert euler_phi(m) == sum(1 for j in range(1, m + 1) if math.gcd(j, m) == 1)


@given(st.integers(1, 400), st.integers(1, 400))
def test_phi_multiplicative(a, b):
    if math.gcd(a, b) == 1:
        assert euler_phi(a * b) == euler_phi(a) * euler_phi(b)


def test_phi_rejects_zero():
    with pytest.raises(ValidationError):
        euler_phi(0)


def test_phi_ratio_sum_exact_small():
    from fractions import Fraction

    exact = sum(Fraction(euler_phi(m), m) for m in range(1, 51))
    assert phi_ratio_sum(50) == pytest.approx(float(exact), rel=1e-15)


def test_phi_deviation_stays_small():
    devs = [phi_sum_deviation(M) for M in (10**2, 10**3, 10**4, 10**5)]
    assert max(devs) < 0.1


@settings(max_examples=15)
@given(st.integers(10, 400), st.floats(0.52, 0.8))
def test_good_k_matches_bruteforce(n, gamma3):
    assert good_k_set(n, 1.0, gamma3).good_k == good_k_bruteforce(n, 1.0, gamma3)


@settings(max_examples=15)
@given(st.integers(10, 3000), st.floats(0.52, 0.8))
def test_interval_union_matches_residue_test(n, gamma3):
    assert exclusion_cover(n, 1.0, gamma3).good_k == good_k_set(n, 1.0, gamma3).good_k


@given(st.integers(10, 3000))
def test_good_k_symmetric(n):
    good = set(good_k_set(n).good_k)
    assert good == {n - k for k in good}


def test_coprime_union_has_same_measure():
    rep = exclusion_cover(5000)
    assert rep.measure == pytest.approx(rep.measure_coprime, rel=1e-12)


def test_parameters():
    assert scan_length(10_000, 1.0) == 10
    assert separation(10_000, 1.0, 0.6) == pytest.approx(600.0)


def test_gamma3_outside_range_warns():
    with pytest.warns(UserWarning):
        good_k_set(100, 1.0, 0.9)


def test_small_n_rejected():
    with pytest.raises(ValidationError):
        good_k_set(9)


def test_report_fields():
    rep = good_k_set(1000)
    assert rep.count == len(rep.good_k)
    assert rep.fraction_bound == pytest.approx(1 - 12 * GAMMA3_DEFAULT / math.pi**2)
    assert rep.fraction >= rep.fraction_bound - 0.05
