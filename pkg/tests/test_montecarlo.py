import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chordmix.chain import ChainSpec, Variant, build_kernel
from chordmix.errors import ValidationError
from chordmix.evolve import delta, propagate, tv_distance
from chordmix.grid import GridConfig, map_to_vertex
from chordmix.montecarlo import (
    coin_batch,
    coin_procedure,
    concentration_check,
    empirical_law,
    hit_bound_check,
    r2_exits,
    simulate_batch,
    simulate_trajectory,
    stirling_diagnostic,
)


def drift(n, k):
    return build_kernel(ChainSpec(Variant.DRIFT_CHORD, n, k))


def test_batch_law_matches_exact_evolution():
    K = drift(30, 11)
    ends = simulate_batch(K, 30, 50, 100_000, seed=3)
    exact = propagate(K, delta(30, 30), 50)
    # 30 cells, 1e5 samples: expected TV about 0.007
    assert tv_distance(empirical_law(ends, 30), exact) < 0.02


def test_cdf_route_matches_exact_evolution():
    K = build_kernel(ChainSpec(Variant.OPPOSITE_CHORDS_DRIFT, 20))
    ends = simulate_batch(K, 1, 40, 100_000, seed=5)
    exact = propagate(K, delta(20, 1), 40)
    assert tv_distance(empirical_law(ends, 20), exact) < 0.02


def test_batch_is_deterministic_and_prefix_stable():
    K = drift(40, 9)
    a = simulate_batch(K, 1, 60, 5000, seed=7)
    b = simulate_batch(K, 1, 60, 5000, seed=7)
    c = simulate_batch(K, 1, 60, 4200, seed=7)
    assert np.array_equal(a, b)
    assert np.array_equal(a[:4200], c)
    assert not np.array_equal(a, simulate_batch(K, 1, 60, 5000, seed=8))


def test_trajectory_visits_cover_every_time():
    K = build_kernel(ChainSpec(Variant.LAZY_REVERSIBLE_CYCLE, 10))
    res = simulate_trajectory(K, 1, 77, seed=1, visit_counts=True)
    # states at times 0..T inclusive
    assert res.visits.sum() == 78
    assert res.visits[0] >= 1
    assert 1 <= res.final_vertex <= 10


def test_zero_steps_stays_put():
    assert simulate_trajectory(drift(10, 4), 6, 0, seed=0).final_vertex == 6


def test_simulation_validation():
    K = drift(10, 4)
    with pytest.raises(ValidationError):
        simulate_batch(K, 0, 5, 10, 0)
    with pytest.raises(ValidationError):
        simulate_batch(K, 1, -1, 10, 0)


def small_config(n, k):
    # L = n gives a handful of exits and short tapes
    return GridConfig(n, k, 3 * n)


@settings(max_examples=10)
@given(st.integers(12, 60), st.data(), st.integers(0, 2**31))
def test_coin_bookkeeping(n, data, seed):
    cfg = small_config(n, data.draw(st.integers(2, n - 2)))
    batch = coin_batch(cfg, 2 * cfg.L, 300, seed)
    assert batch.bookkeeping_ok()
    assert np.all((1 <= batch.final_vertex) & (batch.final_vertex <= n))
    assert np.all((1 <= batch.vertex_at_T) & (batch.vertex_at_T <= n))


def test_python_record_matches_batch():
    cfg = small_config(40, 13)
    T = 2 * cfg.L
    batch = coin_batch(cfg, T, 4100, seed=11)
    for trial in (0, 1, 7, 4099):
        rec = coin_procedure(cfg, T, seed=11, trial=trial)
        assert rec.bookkeeping_ok()
        assert rec.tau == batch.tau[trial]
        assert rec.final_vertex == batch.final_vertex[trial]
        assert rec.vertex_at_T == batch.vertex_at_T[trial]
        assert rec.exit == batch.exits.points[batch.exit_index[trial]]
        assert int(rec.c0.sum()) == batch.sum_c0[trial]


def test_coin_record_track_reaches_exit():
    cfg = small_config(40, 13)
    rec = coin_procedure(cfg, 2 * cfg.L, seed=2)
    assert rec.track.count("A") + rec.track.count("B") == rec.exit.x_prime + rec.exit.y_prime + 1
    assert rec.track[-1] == rec.exit.h


def test_coin_vertex_at_T_has_chain_law():
    n, k = 50, 17
    cfg = GridConfig(n, k, 60)
    batch = coin_batch(cfg, 120, 100_000, seed=4)
    exact = propagate(drift(n, k), delta(n, n), 120)
    assert tv_distance(empirical_law(batch.vertex_at_T, n), exact) < 0.03


def test_coin_args_validated():
    cfg = GridConfig(40, 13, 100)
    with pytest.raises(ValidationError):
        coin_batch(cfg, 201, 10, 0)
    with pytest.raises(ValidationError):
        coin_batch(GridConfig(40, 13, 100, lam=0.5), 200, 10, 0)


def test_r2_exits_keep_margin():
    cfg = GridConfig.at_scale(1000, 107)
    for r in r2_exits(cfg, 300):
        v = map_to_vertex(r, cfg)
        assert min(abs(v - 107), 1000 - abs(v - 107)) > 300
        assert min(v, 1000 - v) > 300


def test_hit_bound_small():
    res = hit_bound_check(GridConfig.at_scale(512, 121))
    assert res.min_scaled > 0
    assert res.W_size > 0


def test_stirling_ratio_near_one():
    res = stirling_diagnostic(10_000, 5_030)
    assert res.in_regime
    assert res.ratio == pytest.approx(1.0, abs=1e-3)
    with pytest.warns(UserWarning):
        stirling_diagnostic(1000, 100)


def test_concentration_rate_zero_at_full_threshold():
    res = concentration_check(GridConfig.at_scale(200, 37), 2000, seed=0)
    assert res.rate == 0.0
