"""Transition kernels on the n-cycle.

Vertices are labelled ``1..n`` on every public surface; the sparse matrix
inside :class:`Kernel` is 0-indexed.

Variants
--------
``drift-chord``
    The chain of interest: clockwise drift with a single chord between the
    hubs ``k`` and ``n``.
``lazy-reversible``
    Lazy simple random walk, ``P(i, i+-1) = 1/4``, ``P(i, i) = 1/2``.
``drift-no-chord``
    ``P(i, i+1) = P(i, i) = 1/2``.
``opposite-chords``
    Drift plus reflection chords ``i <-> n+1-i`` (the parallel chords of
    the drawn cycle), ``P(i, i+1) = 1/2``, ``P(i, n+1-i) = 1/n``,
    ``P(i, i) = 1/2 - 1/n``.  A reference chain for the linear-time regime.
``k-hub``
    ``K >= 2`` hubs with all-to-all jumps.  Exploratory; with hubs
    ``(k, n)`` it coincides with ``drift-chord``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from chordmix.errors import ValidationError

DENSE_LIMIT = 10_000


class Variant(str, Enum):
    DRIFT_CHORD = "drift-chord"
    LAZY_REVERSIBLE_CYCLE = "lazy-reversible"
    DRIFT_NO_CHORD = "drift-no-chord"
    OPPOSITE_CHORDS_DRIFT = "opposite-chords"
    K_HUB = "k-hub"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "driftchord": cls.DRIFT_CHORD,
            "lazyreversiblecycle": cls.LAZY_REVERSIBLE_CYCLE,
            "lazy-reversible-cycle": cls.LAZY_REVERSIBLE_CYCLE,
            "driftnochord": cls.DRIFT_NO_CHORD,
            "oppositechordsdrift": cls.OPPOSITE_CHORDS_DRIFT,
            "opposite-chords-drift": cls.OPPOSITE_CHORDS_DRIFT,
            "khub": cls.K_HUB,
        }
        for member in cls:
            if member.value == key:
                return member
        if key.replace("-", "") in aliases:
            return aliases[key.replace("-", "")]
        if key in aliases:
            return aliases[key]
        raise ValidationError(f"unknown variant {value!r}")


@dataclass(frozen=True)
class ChainSpec:
    variant: Variant
    n: int
    k: int | None = None
    hubs: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.hubs is not None:
            object.__setattr__(self, "hubs", tuple(int(h) for h in self.hubs))
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 5:
            raise ValidationError(f"n must be an integer >= 5, got {n!r}")
        v = self.variant
        if v is Variant.DRIFT_CHORD:
            if self.k is None or not 2 <= self.k <= n - 2:
                raise ValidationError(f"drift-chord needs 2 <= k <= n-2, got k={self.k!r} for n={n}")
        elif v is Variant.K_HUB:
            hubs = self.hubs
            if hubs is None or len(hubs) < 2:
                raise ValidationError("k-hub needs at least two hubs")
            if any(b <= a for a, b in zip(hubs, hubs[1:])):
                raise ValidationError(f"hubs must be strictly increasing, got {hubs}")
            if hubs[0] < 1 or hubs[-1] > n:
                raise ValidationError(f"hubs must lie in [1, {n}], got {hubs}")
        else:
            if self.k is not None:
                raise ValidationError(f"{v.value} takes no hub position k")
            if v is Variant.OPPOSITE_CHORDS_DRIFT and n % 2:
                raise ValidationError(f"opposite-chords needs even n, got {n}")

    @property
    def hub_vertices(self) -> tuple[int, ...]:
        """Hub labels; non-chord variants report vertex ``n`` only."""
        if self.variant is Variant.DRIFT_CHORD:
            return (self.k, self.n)
        if self.variant is Variant.K_HUB:
            return self.hubs
        return (self.n,)

    def label(self) -> str:
        if self.variant is Variant.K_HUB:
            return ";".join(map(str, self.hubs))
        return "" if self.k is None else str(self.k)


@dataclass(frozen=True)
class Kernel:
    """Sparse row-stochastic kernel.  Immutable once built."""

    spec: ChainSpec
    matrix: sp.csr_matrix = field(repr=False)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        m.data.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_transpose", m.T.tocsr())

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __getitem__(self, key) -> float:
        i, j = key
        return float(self.matrix[i - 1, j - 1])

    def row(self, i: int) -> dict[int, float]:
        start, stop = self.matrix.indptr[i - 1], self.matrix.indptr[i]
        cols = self.matrix.indices[start:stop]
        return {int(c) + 1: float(p) for c, p in zip(cols, self.matrix.data[start:stop])}

    @property
    def entries(self) -> dict[tuple[int, int], float]:
        coo = self.matrix.tocoo()
        return {(int(r) + 1, int(c) + 1): float(p) for r, c, p in zip(coo.row, coo.col, coo.data)}

    def triplets(self) -> list[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[i]) + 1, int(coo.col[i]) + 1, float(coo.data[i])) for i in order]

    def apply(self, dist: np.ndarray) -> np.ndarray:
        """Row-vector product ``dist @ P``; ``dist`` may be a (m, n) stack."""
        if dist.ndim == 1:
            return self._transpose @ dist
        return (self._transpose @ dist.T).T

    def to_dense(self) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise ValidationError(f"dense storage refused for n={self.n} > {DENSE_LIMIT}")
        return self.matrix.toarray()


def _drift_chord(n: int, k: int):
    return _k_hub(n, (k, n))


def _k_hub(n: int, hubs: tuple[int, ...]):
    K = len(hubs)
    v = np.arange(1, n + 1)
    is_hub = np.zeros(n + 1, dtype=bool)
    is_hub[list(hubs)] = True
    plain = v[~is_hub[1:]]
    hub_arr = np.asarray(hubs)
    rows = [v, plain, np.repeat(hub_arr, K)]
    cols = [v % n + 1, plain, np.tile(hub_arr, K)]
    vals = [np.full(n, 0.5), np.full(len(plain), 0.5), np.full(K * K, 1.0 / (2 * K))]
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _circulant(n: int, offsets: dict[int, float]):
    v = np.arange(1, n + 1)
    rows = np.concatenate([v] * len(offsets))
    cols = np.concatenate([(v - 1 + off) % n + 1 for off in offsets])
    vals = np.concatenate([np.full(n, p) for p in offsets.values()])
    return rows, cols, vals


def _opposite(n: int):
    v = np.arange(1, n + 1)
    flip = 1.0 / n
    rows = np.concatenate([v, v, v])
    cols = np.concatenate([v % n + 1, v, n + 1 - v])
    vals = np.concatenate([np.full(n, 0.5), np.full(n, 0.5 - flip), np.full(n, flip)])
    return rows, cols, vals


def build_kernel(spec: ChainSpec) -> Kernel:
    """Build the sparse kernel for ``spec``.

    Examples
    --------
    >>> K = build_kernel(ChainSpec(Variant.DRIFT_CHORD, 10, 4))
    >>> K[4, 4], K[4, 5], K[4, 10], K[10, 1]
    (0.25, 0.5, 0.25, 0.5)
    """
    n = spec.n
    v = spec.variant
    if v is Variant.DRIFT_CHORD:
        rows, cols, vals = _drift_chord(n, spec.k)
    elif v is Variant.K_HUB:
        rows, cols, vals = _k_hub(n, spec.hubs)
    elif v is Variant.LAZY_REVERSIBLE_CYCLE:
        rows, cols, vals = _circulant(n, {-1: 0.25, 0: 0.5, 1: 0.25})
    elif v is Variant.DRIFT_NO_CHORD:
        rows, cols, vals = _circulant(n, {0: 0.5, 1: 0.5})
    else:
        rows, cols, vals = _opposite(n)
    m = sp.csr_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows) - 1, np.asarray(cols) - 1)),
        shape=(n, n),
    )
    return Kernel(spec, m)


@dataclass(frozen=True)
class KernelReport:
    max_row_deviation: float
    max_col_deviation: float
    support_size: int
    max_row_support: int
    worst_row: int
    worst_col: int
    min_entry: float
    max_entry: float
    passed: bool


def verify_kernel(kernel: Kernel, tol: float = 1e-12) -> KernelReport:
    m = kernel.matrix
    row_dev = np.abs(np.asarray(m.sum(axis=1)).ravel() - 1.0)
    col_dev = np.abs(np.asarray(m.sum(axis=0)).ravel() - 1.0)
    per_row = np.diff(m.indptr)
    lo = float(m.data.min()) if m.nnz else 0.0
    hi = float(m.data.max()) if m.nnz else 0.0
    passed = bool(row_dev.max() < tol and col_dev.max() < tol and lo >= 0.0 and hi <= 1.0)
    return KernelReport(
        max_row_deviation=float(row_dev.max()),
        max_col_deviation=float(col_dev.max()),
        support_size=int(m.nnz),
        max_row_support=int(per_row.max()),
        worst_row=int(row_dev.argmax()) + 1,
        worst_col=int(col_dev.argmax()) + 1,
        min_entry=lo,
        max_entry=hi,
        passed=passed,
    )


def kernel_to_json(kernel: Kernel) -> dict:
    spec = kernel.spec
    out = {
        "n": spec.n,
        "k": spec.k,
        "variant": spec.variant.value,
        "triplets": [[r, c, repr(p)] for r, c, p in kernel.triplets()],
    }
    if spec.hubs is not None:
        out["hubs"] = list(spec.hubs)
    return out


def write_kernel_json(kernel: Kernel, path, meta: dict | None = None) -> None:
    payload = kernel_to_json(kernel)
    if meta is not None:
        payload = {"meta": meta, **payload}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def kernel_from_json(payload: dict) -> Kernel:
    hubs = payload.get("hubs")
    spec = ChainSpec(payload["variant"], payload["n"], payload.get("k"), tuple(hubs) if hubs else None)
    trip = payload["triplets"]
    rows = np.array([t[0] for t in trip]) - 1
    cols = np.array([t[1] for t in trip]) - 1
    vals = np.array([float(t[2]) for t in trip])
    return Kernel(spec, sp.csr_matrix((vals, (rows, cols)), shape=(spec.n, spec.n)))
