"""Exact distribution propagation and mixing-time search.

Distributions are plain 1-D float64 arrays of length ``n`` (index ``v-1``
holds the mass of vertex ``v``).  The worst-start distance

    d(t) = max_v || P^t(v, .) - 1/n ||_TV

is computed either over every start (:class:`ExactAllStarts`, via dense
matrix powers) or over a short list of starts (:class:`HeuristicStartSet`,
via sparse propagation), in which case it is only a lower bound.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from chordmix.chain import Kernel
from chordmix.errors import MixingTimeError, ValidationError

log = logging.getLogger(__name__)

EXACT_DEFAULT_LIMIT = 2048
EXACT_HARD_LIMIT = 8192
DBAR_EXACT_LIMIT = 512
RENORMALIZE_EVERY = 10_000


@dataclass(frozen=True)
class ExactAllStarts:
    tag: str = field(default="exact", init=False)


@dataclass(frozen=True)
class HeuristicStartSet:
    starts: tuple[int, ...]
    tag: str = field(default="heuristic", init=False)


Policy = ExactAllStarts | HeuristicStartSet


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def delta(n: int, v: int) -> np.ndarray:
    if not 1 <= v <= n:
        raise ValidationError(f"vertex {v} outside 1..{n}")
    out = np.zeros(n)
    out[v - 1] = 1.0
    return out


def clean(dist: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Clamp round-off negatives and renormalise; reject real mass loss."""
    dist = np.where(dist < 0.0, np.where(dist >= -1e-15, 0.0, dist), dist)
    if np.any(dist < 0.0):
        raise ValidationError(f"negative weight {dist.min():.3e} in distribution")
    total = dist.sum(axis=-1, keepdims=True)
    if np.any(np.abs(total - 1.0) > tol):
        raise ValidationError(f"distribution mass drifted to {total.ravel()[0]!r}")
    return dist / total


def step(kernel: Kernel, dist: np.ndarray) -> np.ndarray:
    """One step ``dist @ P``; accepts a single vector or a stack of rows."""
    dist = np.asarray(dist, dtype=float)
    if dist.shape[-1] != kernel.n:
        raise ValidationError(f"distribution has length {dist.shape[-1]}, kernel has n={kernel.n}")
    return kernel.apply(dist)


def propagate(kernel: Kernel, dist: np.ndarray, t: int, renormalize_every: int = RENORMALIZE_EVERY) -> np.ndarray:
    if t < 0:
        raise ValidationError("t must be non-negative")
    dist = np.asarray(dist, dtype=float)
    if dist.shape[-1] != kernel.n:
        raise ValidationError(f"distribution has length {dist.shape[-1]}, kernel has n={kernel.n}")
    for s in range(1, t + 1):
        dist = kernel.apply(dist)
        if s % renormalize_every == 0:
            dist = clean(dist)
    return dist


def tv_distance(mu: np.ndarray, sigma: np.ndarray) -> float:
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.shape != sigma.shape:
        raise ValidationError(f"shape mismatch {mu.shape} vs {sigma.shape}")
    return float(0.5 * np.abs(mu - sigma).sum())


def _row_distances(rows: np.ndarray) -> np.ndarray:
    n = rows.shape[-1]
    return 0.5 * np.abs(rows - 1.0 / n).sum(axis=-1)


def heuristic_starts(kernel: Kernel) -> tuple[int, ...]:
    """Hubs, first vertex after each hub, arc midpoints and hub antipodes."""
    n = kernel.n
    hubs = sorted(set(kernel.spec.hub_vertices))
    picks = set(hubs)
    for i, h in enumerate(hubs):
        nxt = hubs[(i + 1) % len(hubs)]
        picks.add(h % n + 1)
        arc = (nxt - h) % n or n
        picks.add((h + arc // 2 - 1) % n + 1)
        picks.add((h + n // 2 - 1) % n + 1)
    return tuple(sorted(picks))


def default_policy(kernel: Kernel) -> Policy:
    if kernel.n <= EXACT_DEFAULT_LIMIT:
        return ExactAllStarts()
    return HeuristicStartSet(heuristic_starts(kernel))


def resolve_policy(kernel: Kernel, policy) -> Policy:
    if policy is None or policy == "auto":
        return default_policy(kernel)
    if policy == "exact":
        return ExactAllStarts()
    if policy == "heuristic":
        return HeuristicStartSet(heuristic_starts(kernel))
    if isinstance(policy, (ExactAllStarts, HeuristicStartSet)):
        return policy
    raise ValidationError(f"unknown policy {policy!r}")


def _dense(kernel: Kernel) -> np.ndarray:
    if kernel.n > EXACT_HARD_LIMIT:
        raise ValidationError(f"exact all-starts policy refused for n={kernel.n} > {EXACT_HARD_LIMIT}")
    return kernel.to_dense()


def _start_rows(kernel: Kernel, starts) -> np.ndarray:
    rows = np.zeros((len(starts), kernel.n))
    for i, v in enumerate(starts):
        rows[i, v - 1] = 1.0
    return rows


def law_rows(kernel: Kernel, t: int, policy: Policy) -> np.ndarray:
    """Rows ``P^t(v, .)`` for every start covered by ``policy``."""
    if t < 0:
        raise ValidationError("t must be non-negative")
    if isinstance(policy, ExactAllStarts):
        return np.linalg.matrix_power(_dense(kernel), t)
    return propagate(kernel, _start_rows(kernel, policy.starts), t)


def distance_profile(kernel: Kernel, t: int, policy=None) -> float:
    """d(t); a lower bound on the true value under a heuristic policy."""
    policy = resolve_policy(kernel, policy)
    return float(_row_distances(law_rows(kernel, t, policy)).max())


def _max_pairwise_tv(rows: np.ndarray) -> float:
    best = 0.0
    for i in range(len(rows) - 1):
        diff = 0.5 * np.abs(rows[i + 1 :] - rows[i]).sum(axis=1)
        best = max(best, float(diff.max()))
    return best


def dbar(kernel: Kernel, t: int, policy=None) -> float:
    """Worst TV distance between laws launched from two different starts."""
    policy = resolve_policy(kernel, policy)
    if isinstance(policy, ExactAllStarts) and kernel.n > DBAR_EXACT_LIMIT:
        policy = HeuristicStartSet(heuristic_starts(kernel))
    return _max_pairwise_tv(law_rows(kernel, t, policy))


@dataclass(frozen=True)
class MixingResult:
    t_mix: int
    eps: float
    policy: str
    lower_bound: bool
    evaluations: int


def _mixing_exact(P: np.ndarray, eps: float, cap: int) -> tuple[int, int]:
    def d(M):
        return float(_row_distances(M).max())

    evals = 1
    if d(P) <= eps:
        return 1, evals
    powers = [P]
    t = 1
    while True:
        if 2 * t > cap:
            raise MixingTimeError(f"no t <= {cap} with d(t) <= {eps}", (t, None))
        nxt = powers[-1] @ powers[-1]
        evals += 1
        t *= 2
        powers.append(nxt)
        if d(nxt) <= eps:
            break
    J = len(powers) - 1
    low_t, low_M = t // 2, powers[J - 1]
    powers[J] = None
    for j in range(J - 2, -1, -1):
        cand = low_M @ powers[j]
        evals += 1
        if d(cand) > eps:
            low_M, low_t = cand, low_t + 2**j
        powers[j + 1] = None
    return low_t + 1, evals


def _mixing_scan(kernel: Kernel, starts, eps: float, cap: int) -> tuple[int, int]:
    rows = _start_rows(kernel, starts)
    for t in range(1, cap + 1):
        rows = kernel.apply(rows)
        if t % RENORMALIZE_EVERY == 0:
            rows = clean(rows)
        if _row_distances(rows).max() <= eps:
            return t, t
    raise MixingTimeError(f"no t <= {cap} with d(t) <= {eps} over the start set", (cap, None))


def mixing_time(kernel: Kernel, eps: float, policy=None, max_iter: int | None = None) -> MixingResult:
    """Smallest ``t`` with ``d(t) <= eps``.

    Exact policy: repeated squaring ``P, P^2, P^4, ...`` until ``d <= eps``,
    then a binary descent over the stored powers (``d`` is non-increasing).
    Heuristic policy: sparse propagation of the start set, checking every
    step; the result is a lower bound on the true mixing time.

    Raises
    ------
    MixingTimeError
        If no qualifying ``t <= max_iter`` (default ``64 n^2``) exists.
    """
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    n = kernel.n
    policy = resolve_policy(kernel, policy)
    cap = 64 * n * n if max_iter is None else int(max_iter)
    if eps >= 1.0 - 1.0 / n:
        return MixingResult(0, eps, policy.tag, isinstance(policy, HeuristicStartSet), 0)
    if isinstance(policy, ExactAllStarts):
        t, evals = _mixing_exact(_dense(kernel), eps, cap)
        return MixingResult(t, eps, policy.tag, False, evals)
    t, evals = _mixing_scan(kernel, policy.starts, eps, cap)
    return MixingResult(t, eps, policy.tag, True, evals)


@dataclass(frozen=True)
class MixingCurve:
    times: tuple[int, ...]
    distances: tuple[float, ...]
    policy: str

    def is_monotone(self, slack: float = 1e-12) -> bool:
        d = np.asarray(self.distances)
        return bool(np.all(np.diff(d) <= slack))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "d", "policy"])
            for t, d in zip(self.times, self.distances):
                w.writerow([t, repr(float(d)), self.policy])


def mixing_curve(kernel: Kernel, times, policy=None) -> MixingCurve:
    """d(t) at each requested time, computed incrementally."""
    policy = resolve_policy(kernel, policy)
    times = sorted(set(int(t) for t in times))
    if times and times[0] < 0:
        raise ValidationError("times must be non-negative")
    dist = []
    if isinstance(policy, ExactAllStarts):
        P = _dense(kernel)
        M = np.eye(kernel.n)
        cur = 0
        for t in times:
            M = M @ np.linalg.matrix_power(P, t - cur)
            cur = t
            dist.append(float(_row_distances(M).max()))
    else:
        rows = _start_rows(kernel, policy.starts)
        cur = 0
        for t in times:
            rows = propagate(kernel, rows, t - cur)
            cur = t
            dist.append(float(_row_distances(rows).max()))
    return MixingCurve(tuple(times), tuple(dist), policy.tag)
