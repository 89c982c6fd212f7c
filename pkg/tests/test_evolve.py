import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chordmix.chain import ChainSpec, Variant, build_kernel
from chordmix.errors import MixingTimeError, ValidationError
from chordmix.evolve import (
    ExactAllStarts,
    HeuristicStartSet,
    clean,
    dbar,
    delta,
    distance_profile,
    heuristic_starts,
    law_rows,
    mixing_curve,
    mixing_time,
    propagate,
    resolve_policy,
    step,
    tv_distance,
    uniform,
)


def drift(n, k):
    return build_kernel(ChainSpec(Variant.DRIFT_CHORD, n, k))


def brute_mixing_time(kernel, eps):
    # oracle: step the full dense matrix one time unit at a time
    P = kernel.to_dense()
    M = np.eye(kernel.n)
    for t in range(1, 100_000):
        M = M @ P
        if 0.5 * np.abs(M - 1 / kernel.n).sum(axis=1).max() <= eps:
            return t
    raise AssertionError("oracle did not converge")


def test_small_chain_mixing_time():
    assert mixing_time(drift(5, 2), 0.25).t_mix == 4


@settings(max_examples=15)
@given(st.integers(6, 40), st.data(), st.sampled_from([0.05, 0.25, 0.5]))
def test_squaring_search_matches_stepwise_oracle(n, data, eps):
    k = data.draw(st.integers(2, n - 2))
    K = drift(n, k)
    assert mixing_time(K, eps, "exact").t_mix == brute_mixing_time(K, eps)


def test_reference_cycle_mixing_time_frozen():
    K = build_kernel(ChainSpec(Variant.LAZY_REVERSIBLE_CYCLE, 16))
    assert mixing_time(K, 0.25).t_mix == brute_mixing_time(K, 0.25)


def test_heuristic_is_lower_bound():
    K = drift(60, 17)
    exact = mixing_time(K, 0.25, "exact")
    heur = mixing_time(K, 0.25, "heuristic")
    assert heur.lower_bound and not exact.lower_bound
    assert heur.t_mix <= exact.t_mix


def test_heuristic_starts_contain_hubs():
    starts = heuristic_starts(drift(100, 30))
    assert {30, 100, 31, 1} <= set(starts)


@given(st.integers(6, 80), st.data(), st.integers(0, 300))
def test_propagation_preserves_mass_and_nonnegativity(n, data, t):
    K = drift(n, data.draw(st.integers(2, n - 2)))
    v = data.draw(st.integers(1, n))
    p = propagate(K, delta(n, v), t)
    assert abs(p.sum() - 1) < 1e-12
    assert p.min() >= -1e-15


@given(st.integers(6, 60), st.data())
def test_distance_non_increasing(n, data):
    K = drift(n, data.draw(st.integers(2, n - 2)))
    curve = mixing_curve(K, range(0, 4 * n, 3), "exact")
    assert curve.is_monotone()


@settings(max_examples=10)
@given(st.integers(8, 40), st.data())
def test_dbar_sandwich_and_submultiplicative(n, data):
    K = drift(n, data.draw(st.integers(2, n - 2)))
    s = data.draw(st.integers(0, 3 * n))
    t = data.draw(st.integers(0, 3 * n))
    d, db = distance_profile(K, s, "exact"), dbar(K, s, "exact")
    assert d <= db + 1e-12 and db <= 2 * d + 1e-12
    assert dbar(K, s + t, "exact") <= dbar(K, s, "exact") * dbar(K, t, "exact") + 1e-9


def test_tv_distance_basics():
    assert tv_distance(delta(4, 1), delta(4, 2)) == 1.0
    assert tv_distance(uniform(4), uniform(4)) == 0.0
    with pytest.raises(ValidationError):
        tv_distance(uniform(4), uniform(5))


def test_law_rows_agree_between_policies():
    K = drift(30, 7)
    exact = law_rows(K, 25, ExactAllStarts())
    heur = law_rows(K, 25, HeuristicStartSet((3, 30)))
    np.testing.assert_allclose(heur, exact[[2, 29]], atol=1e-14)


def test_step_matches_dense():
    K = drift(12, 5)
    p = delta(12, 5)
    np.testing.assert_allclose(step(K, p), p @ K.to_dense())


def test_clean_rejects_mass_loss():
    with pytest.raises(ValidationError):
        clean(np.array([0.5, 0.4]))
    out = clean(np.array([0.5 + 1e-14, 0.5, -1e-15]))
    assert out.min() >= 0 and abs(out.sum() - 1) < 1e-15


def test_mixing_time_validation():
    K = drift(20, 7)
    with pytest.raises(ValidationError):
        mixing_time(K, 0.0)
    with pytest.raises(ValidationError):
        mixing_time(K, 1.0)
    with pytest.raises(ValidationError):
        resolve_policy(K, "bogus")
    with pytest.raises(MixingTimeError) as err:
        mixing_time(K, 0.01, max_iter=3)
    assert err.value.bracket is not None


def test_delta_rejects_bad_vertex():
    with pytest.raises(ValidationError):
        delta(5, 0)


def test_curve_csv(tmp_path):
    curve = mixing_curve(drift(10, 4), [0, 1, 2], "exact")
    curve.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "t,d,policy" and len(lines) == 4
    assert lines[1].startswith("0,0.9")
