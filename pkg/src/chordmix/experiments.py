"""Scaling runs, exponent fits and the time-shift probes.

Records are plain dataclasses; :func:`emit` writes them as CSV (with a
``.meta.json`` sidecar) or JSONL (first line is the metadata object).  No
timestamps are written, so identical inputs give identical files.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from chordmix import __version__
from chordmix.chain import ChainSpec, Variant, build_kernel
from chordmix.errors import MixingTimeError, ValidationError
from chordmix.evolve import mixing_time
from chordmix.gaps import GAMMA3_DEFAULT, good_k_set
from chordmix.grid import A, ExitPoint, GridConfig, central_exits, cycle_distance, map_to_vertex

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_COLUMNS = ("variant", "n", "k", "eps", "t_mix", "policy", "seed", "wall_time_ms")


@dataclass(frozen=True)
class ExperimentRecord:
    variant: str
    n: int
    k: int | str | None
    eps: float
    t_mix: int | None
    policy: str
    seed: int | None = None
    wall_time_ms: float | None = None

    def __post_init__(self):
        if self.t_mix is not None and self.t_mix < 0:
            raise ValidationError("t_mix must be non-negative")


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residual_rms: float
    n_range: tuple[int, int]
    points: int


def thread_count() -> int:
    env = os.environ.get("CHORDMIX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError(f"CHORDMIX_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _run_pool(fn, tasks):
    workers = min(thread_count(), len(tasks))
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _k_label(spec: ChainSpec):
    if spec.variant is Variant.K_HUB:
        return spec.label()
    return spec.k


def measure(spec: ChainSpec, eps: float, policy=None, seed: int | None = None, timing: bool = False, max_iter=None) -> ExperimentRecord:
    """One mixing-time record; an iteration-cap failure yields ``t_mix=None``."""
    kernel = build_kernel(spec)
    t0 = time.perf_counter()
    try:
        res = mixing_time(kernel, eps, policy, max_iter)
        t_mix, tag = res.t_mix, res.policy
    except MixingTimeError as exc:
        log.warning("n=%d k=%s: %s", spec.n, _k_label(spec), exc)
        t_mix, tag = None, "exact" if policy in (None, "auto", "exact") and spec.n <= 2048 else str(policy)
    wall = round((time.perf_counter() - t0) * 1000, 3) if timing else None
    return ExperimentRecord(spec.variant.value, spec.n, _k_label(spec), eps, t_mix, tag, seed, wall)


def _measure_task(args):
    spec, eps, policy, seed, timing = args
    return measure(spec, eps, policy, seed, timing)


def choose_k(n: int, k_policy: str, seed: int, gamma3: float = GAMMA3_DEFAULT) -> int:
    """Hub position for ``k_policy`` in ``good``, ``half``, ``fixed:K``."""
    if k_policy == "half":
        if n % 2:
            raise ValidationError("k policy 'half' needs even n")
        return n // 2
    if k_policy.startswith("fixed:"):
        return int(k_policy.split(":", 1)[1])
    if k_policy == "good":
        good = good_k_set(n, 1.0, gamma3).good_k
        if not good:
            raise ValidationError(f"no good k for n={n}")
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
        return int(good[rng.integers(len(good))])
    raise ValidationError(f"unknown k policy {k_policy!r}")


def scaling_run(
    variant,
    n_grid,
    eps: float = 0.25,
    k_policy: str = "good",
    seeds=(0,),
    policy=None,
    timing: bool = False,
) -> list[ExperimentRecord]:
    """Mixing times over ``n_grid`` for one variant.

    Parameters
    ----------
    variant : Variant or str
        Chain family; ``k_policy`` only matters for ``drift-chord``.
    n_grid : sequence of int
        Strictly increasing sizes.
    eps : float
        Target distance in ``(0, 1/2)``.
    k_policy : str
        ``good`` draws ``k`` uniformly from the good set of each ``n``
        (seeded), ``half`` uses ``n/2``, ``fixed:K`` uses ``K``.
    seeds : sequence of int
        One record per seed and ``n``; seeds only affect the ``k`` draw.
    policy : str or policy object, optional
        Start policy handed to the mixing-time search.

    Returns
    -------
    list of ExperimentRecord
        Sorted by ``(n, seed)``.  Points that hit the iteration cap carry
        ``t_mix=None``.
    """
    variant = Variant.parse(variant)
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValidationError("n_grid must be strictly increasing")
    if not 0 < eps < 0.5:
        raise ValidationError("eps must lie in (0, 1/2)")
    tasks = []
    for n in n_grid:
        for seed in seeds:
            if variant is Variant.DRIFT_CHORD:
                spec = ChainSpec(variant, n, choose_k(n, k_policy, seed))
            elif variant is Variant.K_HUB:
                raise ValidationError("use khub_probe for k-hub chains")
            else:
                spec = ChainSpec(variant, n)
            tasks.append((spec, eps, policy, seed, timing))
    records = _run_pool(_measure_task, tasks)
    return sorted(records, key=lambda r: (r.n, -1 if r.seed is None else r.seed))


def fit_points(ns, ts) -> FitResult:
    ns = np.asarray(ns, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if len(set(ns.tolist())) < 3:
        raise ValidationError("need at least 3 distinct n for a fit")
    if np.any(ts <= 0):
        raise ValidationError("t_mix values must be positive to take logs")
    x, y = np.log(ns), np.log(ts)
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (slope * x + intercept)
    return FitResult(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))), (int(ns.min()), int(ns.max())), len(ns))


def fit_exponent(records) -> FitResult:
    """Least-squares slope of ``log t_mix`` against ``log n``."""
    pts = [(r.n, r.t_mix) for r in records if r.t_mix is not None]
    return fit_points([p[0] for p in pts], [p[1] for p in pts])


# --------------------------------------------------------------- lower bound


@dataclass(frozen=True)
class LowerBoundResult:
    eps_star: float
    scaled: dict[int, dict[int, float]]
    min_scaled: dict[int, float]

    @property
    def ratio(self) -> float:
        vals = list(self.min_scaled.values())
        return max(vals) / min(vals)


def sample_k(n: int, count: int, seed: int, include_half: bool = True) -> list[int]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
    pool = np.arange(2, n - 1)
    ks = set()
    if include_half and n % 2 == 0:
        ks.add(n // 2)
    extra = rng.permutation(pool)
    for k in extra:
        if len(ks) >= count:
            break
        ks.add(int(k))
    return sorted(ks)


def lower_bound_probe(n_grid, eps_star: float = 0.05, k_sample: int = 20, seed: int = 0, policy="exact") -> LowerBoundResult:
    """``min_k t_mix(eps_star) / n^{3/2}`` over ``k_sample`` hub positions per ``n`` (``n/2`` included)."""
    tasks = []
    for n in n_grid:
        for k in sample_k(n, k_sample, seed):
            tasks.append((ChainSpec(Variant.DRIFT_CHORD, n, k), eps_star, policy, seed, False))
    records = _run_pool(_measure_task, tasks)
    scaled: dict[int, dict[int, float]] = {}
    for rec in records:
        if rec.t_mix is None:
            raise MixingTimeError(f"no mixing time for n={rec.n}, k={rec.k}", (None, None))
        scaled.setdefault(rec.n, {})[rec.k] = rec.t_mix / rec.n**1.5
    return LowerBoundResult(eps_star, scaled, {n: min(v.values()) for n, v in scaled.items()})


# ------------------------------------------------------------------- zigzag


def zigzag_point(r: ExitPoint, config: GridConfig, i: int) -> ExitPoint:
    """Position of ``r`` after the track distance grows by ``i`` (``0 <= i < n``).

    The point runs forward along its segment, turns at the next grid point,
    crosses the other arc, turns again and stops short of ``(x+1, y+1, h)``.
    """
    n, k = config.n, config.k
    if not 0 <= i < n:
        raise ValidationError("shift must lie in [0, n)")
    own, other = (k, n - k) if r.h == A else (n - k, k)
    along = r.x if r.h == A else r.y
    grid = (r.x_prime if r.h == A else r.y_prime) + 1
    first = own * (grid - along)
    s = Fraction(i)
    if s <= first:
        new_along, cross, h = along + s / own, Fraction(0), r.h
    elif s <= first + other:
        new_along, cross, h = Fraction(grid), (s - first) / other, ("B" if r.h == A else A)
    else:
        new_along, cross, h = Fraction(grid) + (s - first - other) / own, Fraction(1), r.h
    base_other = r.y if r.h == A else r.x
    if r.h == A:
        x, y = new_along, base_other + cross
    else:
        x, y = base_other + cross, new_along
    return ExitPoint.make(x, y, h)


@dataclass(frozen=True)
class ZigzagResult:
    n: int
    k: int
    hits: tuple[int, ...]
    r1_sizes: tuple[int, ...]
    I_size: int
    total: int
    selected: int
    threshold: float
    hub_margin: float


def zigzag_scan(config: GridConfig, hub_margin: float | None = None) -> ZigzagResult:
    """Hits ``sum_{r in R1^i} 1_I(g(r))`` for the shifted lengths ``L + i``, ``i < n``.

    ``hub_margin`` (default ``n/10``) defines ``I``; the returned
    ``selected`` is the first ``i`` with at least ``|R1|/2`` hits.
    """
    n, k = config.n, config.k
    margin = n / 10 if hub_margin is None else float(hub_margin)
    verts = np.arange(1, n + 1)
    in_I = (cycle_distance(verts, k, n) > margin) & (cycle_distance(verts, n, n) > margin)
    hits, sizes = [], []
    for i in range(n):
        cfg = GridConfig(n, k, config.L + i, config.rho, config.lam)
        _, R1 = central_exits(cfg)
        sizes.append(len(R1))
        hits.append(sum(bool(in_I[map_to_vertex(r, cfg) - 1]) for r in R1))
    r1 = sizes[0]
    threshold = r1 / 2
    selected = next((i for i, h in enumerate(hits) if h >= threshold), None)
    if selected is None:
        raise RuntimeError("no shift reaches |R1|/2 hits in I; the averaging argument says one must")
    return ZigzagResult(n, k, tuple(hits), tuple(sizes), int(in_I.sum()), int(sum(hits)), selected, threshold, margin)


# -------------------------------------------------------------------- k hubs


@dataclass(frozen=True)
class KHubResult:
    K: int
    fit: FitResult
    predicted: float
    records: tuple[ExperimentRecord, ...]


def random_hubs(n: int, K: int, seed: int) -> tuple[int, ...]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n, K)))
    return tuple(sorted(int(h) for h in rng.choice(np.arange(1, n + 1), size=K, replace=False)))


def khub_probe(K: int, n_grid, eps: float = 0.25, seeds=(0,), policy=None, hubs_for=None) -> KHubResult:
    """Exponent of ``t_mix`` for chains with ``K`` random all-to-all hubs.

    Exploratory: the value is reported next to ``1 + 1/K`` without a
    verdict.  ``hubs_for(n, seed)`` overrides the random hub draw.
    """
    if K < 2:
        raise ValidationError("need K >= 2 hubs (K = 2 is the single-chord chain)")
    tasks = []
    for n in n_grid:
        for seed in seeds:
            hubs = hubs_for(n, seed) if hubs_for else random_hubs(n, K, seed)
            tasks.append((ChainSpec(Variant.K_HUB, n, hubs=hubs), eps, policy, seed, False))
    records = tuple(_run_pool(_measure_task, tasks))
    return KHubResult(K, fit_exponent(records), 1 + 1 / K, records)


# ------------------------------------------------------------- good-k aggregate


@dataclass(frozen=True)
class AggregateResult:
    constant: float
    fraction: dict[int, float]
    good_fraction: dict[int, float]


def upper_bound_aggregate(n_grid, eps: float = 0.25, k_sample: int = 10, seed: int = 0, policy="exact") -> AggregateResult:
    """Fraction of sampled good ``k`` with ``t_mix <= C n^{3/2} log(1/eps)``.

    ``C`` is the largest ratio seen at the smallest ``n`` and is then frozen.
    """
    per_n: dict[int, list[float]] = {}
    good_frac = {}
    for n in n_grid:
        rep = good_k_set(n)
        good_frac[n] = rep.fraction
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
        ks = rng.choice(rep.good_k, size=min(k_sample, len(rep.good_k)), replace=False)
        recs = _run_pool(_measure_task, [(ChainSpec(Variant.DRIFT_CHORD, n, int(k)), eps, policy, seed, False) for k in ks])
        per_n[n] = [r.t_mix / (n**1.5 * math.log(1 / eps)) for r in recs if r.t_mix is not None]
    C = max(per_n[n_grid[0]])
    return AggregateResult(C, {n: float(np.mean(np.array(v) <= C)) for n, v in per_n.items()}, good_frac)


# ------------------------------------------------------------------ persistence


def run_meta(config: dict | None = None, seed=None, **extra) -> dict:
    meta = {"schema": SCHEMA_VERSION, "package": "chordmix", "version": __version__, "seed": seed, "config": config or {}}
    meta.update(extra)
    return meta


def _record_row(rec: ExperimentRecord) -> list[str]:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    return [cell(getattr(rec, c)) for c in CSV_COLUMNS]


def emit(records, fmt: str, path, meta: dict | None = None) -> Path:
    """Write records as ``csv`` or ``jsonl`` with a fixed column order."""
    records = list(records)
    if not records:
        raise ValidationError("no records to emit")
    path = Path(path)
    meta = run_meta() if meta is None else meta
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for rec in records:
                w.writerow(_record_row(rec))
        Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    elif fmt == "jsonl":
        with path.open("w") as fh:
            fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
            for rec in records:
                fh.write(json.dumps({c: getattr(rec, c) for c in CSV_COLUMNS}) + "\n")
    else:
        raise ValidationError(f"unknown format {fmt!r}")
    return path


def _parse_k(v):
    if v in ("", None):
        return None
    if isinstance(v, int):
        return v
    return int(v) if ";" not in str(v) else str(v)


def load(path) -> list[ExperimentRecord]:
    path = Path(path)
    text = path.read_text()
    out = []
    if path.suffix == ".csv" or text.startswith(",".join(CSV_COLUMNS)):
        for row in csv.DictReader(text.splitlines()):
            out.append(
                ExperimentRecord(
                    row["variant"],
                    int(row["n"]),
                    _parse_k(row["k"]),
                    float(row["eps"]),
                    int(row["t_mix"]) if row["t_mix"] else None,
                    row["policy"],
                    int(row["seed"]) if row["seed"] else None,
                    float(row["wall_time_ms"]) if row["wall_time_ms"] else None,
                )
            )
        return out
    for line in text.splitlines():
        obj = json.loads(line)
        if "meta" in obj:
            continue
        obj["k"] = _parse_k(obj["k"])
        out.append(ExperimentRecord(**obj))
    return out


def records_to_dicts(records) -> list[dict]:
    return [asdict(r) for r in records]
