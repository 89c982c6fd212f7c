import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chordmix.chain import (
    ChainSpec,
    Kernel,
    Variant,
    build_kernel,
    kernel_from_json,
    kernel_to_json,
    verify_kernel,
    write_kernel_json,
)
from chordmix.errors import ValidationError


def drift(n, k):
    return build_kernel(ChainSpec(Variant.DRIFT_CHORD, n, k))


def test_hub_entries_n10_k4():
    K = drift(10, 4)
    assert K[4, 4] == K[4, 10] == K[10, 4] == K[10, 10] == 0.25
    assert K[4, 5] == 0.5
    assert K[10, 1] == 0.5


def test_plain_vertex_row():
    assert drift(10, 4).row(2) == {2: 0.5, 3: 0.5}


@st.composite
def drift_specs(draw, n_max=300):
    n = draw(st.integers(5, n_max))
    k = draw(st.integers(2, n - 2))
    return n, k


@given(drift_specs())
def test_drift_chord_matches_definition(nk):
    n, k = nk
    K = drift(n, k)
    hubs = {k, n}
    expected = {}
    for v in range(1, n + 1):
        expected[(v, v % n + 1)] = 0.5
        if v in hubs:
            expected[(v, v)] = 0.25
            expected[(v, (n if v == k else k))] = 0.25
        else:
            expected[(v, v)] = 0.5
    assert K.entries == expected
    assert K.matrix.nnz == 2 * n + 2


@given(st.integers(5, 200), st.sampled_from(list(Variant)), st.data())
def test_every_variant_is_doubly_stochastic(n, variant, data):
    if variant is Variant.OPPOSITE_CHORDS_DRIFT:
        n += n % 2
    if variant is Variant.DRIFT_CHORD:
        spec = ChainSpec(variant, n, data.draw(st.integers(2, n - 2)))
    elif variant is Variant.K_HUB:
        hubs = data.draw(st.lists(st.integers(1, n), min_size=2, max_size=5, unique=True))
        spec = ChainSpec(variant, n, hubs=tuple(sorted(hubs)))
    else:
        spec = ChainSpec(variant, n)
    K = build_kernel(spec)
    rep = verify_kernel(K)
    assert rep.passed
    assert rep.max_row_deviation < 1e-12 and rep.max_col_deviation < 1e-12
    limit = 4 if variant is not Variant.K_HUB else max(4, len(spec.hubs) + 1)
    assert rep.max_row_support <= limit
    assert 0.0 <= rep.min_entry and rep.max_entry <= 1.0


@given(drift_specs())
def test_uniform_is_fixed_point(nk):
    n, k = nk
    u = np.full(n, 1.0 / n)
    assert np.max(np.abs(drift(n, k).apply(u) - u)) < 1e-12


def test_verify_passes_n100_k37():
    assert verify_kernel(drift(100, 37), 1e-12).passed


def test_verify_locates_corruption():
    K = drift(100, 37)
    m = K.matrix.copy()
    m.data = m.data.copy()
    idx = m.indptr[41]  # first stored entry of vertex 42
    m.data[idx] += 1e-6
    bad = Kernel(K.spec, m)
    rep = verify_kernel(bad, 1e-12)
    assert not rep.passed
    assert rep.worst_row == 42
    assert rep.max_row_deviation == pytest.approx(1e-6, rel=1e-6)


def test_opposite_chord_rows():
    K = build_kernel(ChainSpec(Variant.OPPOSITE_CHORDS_DRIFT, 12))
    assert K.row(3) == {3: 0.5 - 1 / 12, 4: 0.5, 10: 1 / 12}


def test_reference_circulants():
    lazy = build_kernel(ChainSpec(Variant.LAZY_REVERSIBLE_CYCLE, 8))
    assert lazy.row(1) == {1: 0.5, 2: 0.25, 8: 0.25}
    plain = build_kernel(ChainSpec(Variant.DRIFT_NO_CHORD, 8))
    assert plain.row(8) == {8: 0.5, 1: 0.5}


def test_two_hub_khub_is_drift_chord():
    a = build_kernel(ChainSpec(Variant.K_HUB, 30, hubs=(11, 30)))
    b = drift(30, 11)
    assert a.entries == b.entries


def test_khub_rows_split_evenly():
    K = build_kernel(ChainSpec(Variant.K_HUB, 20, hubs=(3, 9, 15)))
    assert K.row(9) == {3: 1 / 6, 9: 1 / 6, 10: 0.5, 15: 1 / 6}


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(variant="drift-chord", n=4, k=2),
        dict(variant="drift-chord", n=10, k=1),
        dict(variant="drift-chord", n=10, k=9),
        dict(variant="drift-chord", n=10),
        dict(variant="opposite-chords", n=11),
        dict(variant="lazy-reversible", n=10, k=3),
        dict(variant="k-hub", n=10, hubs=(4,)),
        dict(variant="k-hub", n=10, hubs=(5, 4)),
        dict(variant="k-hub", n=10, hubs=(0, 4)),
        dict(variant="k-hub", n=10, hubs=(4, 11)),
        dict(variant="nonsense", n=10),
    ],
)
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(ValidationError):
        ChainSpec(**kwargs)


def test_variant_aliases():
    assert Variant.parse("DriftChord") is Variant.DRIFT_CHORD
    assert Variant.parse("lazy_reversible_cycle") is Variant.LAZY_REVERSIBLE_CYCLE
    assert Variant.parse("OppositeChordsDrift") is Variant.OPPOSITE_CHORDS_DRIFT
    assert Variant.parse("KHub") is Variant.K_HUB


def test_json_round_trip(tmp_path):
    K = drift(10, 4)
    payload = kernel_to_json(K)
    assert {"n", "k", "variant", "triplets"} <= payload.keys()
    probs = {t[2] for t in payload["triplets"]}
    assert probs == {"0.25", "0.5"}
    write_kernel_json(K, tmp_path / "k.json", meta={"seed": None})
    loaded = kernel_from_json(json.loads((tmp_path / "k.json").read_text()))
    assert loaded.entries == K.entries


def test_dense_storage_refused_above_limit():
    with pytest.raises(ValidationError):
        drift(10_001, 5).to_dense()


def test_kernel_data_read_only():
    K = drift(10, 4)
    with pytest.raises(ValueError):
        K.matrix.data[0] = 1.0
