"""Chord positions whose scan images stay spread out on the cycle.

For ``M = floor(sqrt(rho) n^{1/4})`` and ``theta = (gamma3 / sqrt(rho)) n^{3/4}``,
a hub position ``k`` is *good* when ``|m k mod+- n| >= theta`` for every
``1 <= m <= M - 1``.  Two independent routes compute the good set: a
per-``k`` residue test and the complement of a merged union of exclusion
intervals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from chordmix.errors import ValidationError

GAMMA3_DEFAULT = 0.6
GAMMA3_MAX = math.pi**2 / 12
SIX_OVER_PI2 = 6 / math.pi**2


def euler_phi(m: int) -> int:
    """Euler's totient by trial-division factorisation."""
    if m < 1:
        raise ValidationError(f"euler_phi needs m >= 1, got {m}")
    result, rest, p = m, m, 2
    while p * p <= rest:
        if rest % p == 0:
            while rest % p == 0:
                rest //= p
            result -= result // p
        p += 1
    if rest > 1:
        result -= result // rest
    return result


def phi_table(M: int) -> np.ndarray:
    """``phi[0..M]`` by sieve (``phi[0] = 0``)."""
    phi = np.arange(M + 1, dtype=np.int64)
    for p in range(2, M + 1):
        if phi[p] == p:
            phi[p::p] -= phi[p::p] // p
    return phi


def phi_ratio_sum(M: int) -> float:
    """``S(M) = sum_{m=1}^{M} phi(m)/m``, accumulated with ``math.fsum``."""
    if M < 1:
        raise ValidationError(f"M must be >= 1, got {M}")
    phi = phi_table(M)
    return math.fsum((phi[1:] / np.arange(1, M + 1)).tolist())


def phi_sum_deviation(M: int) -> float:
    """``|S(M) - (6/pi^2) M| / log M``; stays bounded as ``M`` grows."""
    if M < 2:
        raise ValidationError("need M >= 2 for the log-scaled deviation")
    return abs(phi_ratio_sum(M) - SIX_OVER_PI2 * M) / math.log(M)


def scan_length(n: int, rho: float) -> int:
    return math.floor(math.sqrt(rho) * n**0.25)


def separation(n: int, rho: float, gamma3: float) -> float:
    return gamma3 / math.sqrt(rho) * n**0.75


def _int_threshold(theta: float) -> int:
    # an integer residue r satisfies |r| >= theta iff |r| >= ceil(theta)
    return math.ceil(theta)


def check_gamma3(gamma3: float) -> None:
    if not 0.5 < gamma3 < GAMMA3_MAX:
        warnings.warn(
            f"gamma3={gamma3} outside (1/2, pi^2/12); the good-k lower bound is vacuous or the overlap argument fails",
            stacklevel=3,
        )


def signed_residue(x, n: int):
    r = np.mod(x, n)
    return np.minimum(r, n - r)


@dataclass(frozen=True)
class GapReport:
    n: int
    rho: float
    gamma3: float
    good_k: tuple[int, ...]
    fraction: float
    fraction_full_range: float
    fraction_bound: float
    phi_sum_bound: float

    @property
    def count(self) -> int:
        return len(self.good_k)


def _good_mask(n: int, rho: float, gamma3: float) -> np.ndarray:
    ks = np.arange(1, n + 1, dtype=np.int64)
    need = _int_threshold(separation(n, rho, gamma3))
    good = np.ones(n, dtype=bool)
    for m in range(1, scan_length(n, rho)):
        good &= signed_residue(m * ks, n) >= need
    return good


def good_k_set(n: int, rho: float = 1.0, gamma3: float = GAMMA3_DEFAULT) -> GapReport:
    """Exhaustive good-``k`` enumeration over ``[2, n-2]``.

    Parameters
    ----------
    n : int
        Cycle length, ``n >= 10``.
    rho : float
        Time-scale parameter; sets the scan length and the separation.
    gamma3 : float
        Separation constant.  Values outside ``(1/2, pi^2/12)`` warn.

    Returns
    -------
    GapReport
        ``fraction`` is over ``[2, n-2]``; ``fraction_full_range`` is over
        ``[1, n]``.  ``fraction_bound`` is ``1 - 12 gamma3 / pi^2`` and
        ``phi_sum_bound`` the interval-measure estimate
        ``(2 gamma3 / sqrt(rho)) n^{3/4} S(M-1)``.
    """
    if n < 10:
        raise ValidationError(f"good_k_set needs n >= 10, got {n}")
    if rho <= 0:
        raise ValidationError("rho must be positive")
    check_gamma3(gamma3)
    mask = _good_mask(n, rho, gamma3)
    ks = np.flatnonzero(mask) + 1
    inner = tuple(int(k) for k in ks if 2 <= k <= n - 2)
    M = scan_length(n, rho)
    phi_bound = 2 * separation(n, rho, gamma3) * phi_ratio_sum(M - 1) if M >= 2 else 0.0
    return GapReport(
        n=n,
        rho=rho,
        gamma3=gamma3,
        good_k=inner,
        fraction=len(inner) / (n - 3),
        fraction_full_range=len(ks) / n,
        fraction_bound=1 - 12 * gamma3 / math.pi**2,
        phi_sum_bound=phi_bound,
    )


def exclusion_intervals(n: int, rho: float, gamma3: float, coprime_only: bool = False):
    """Open intervals ``((i n - theta)/m, (i n + theta)/m)`` for ``1 <= m < M``, ``0 <= i <= m``."""
    theta = separation(n, rho, gamma3)
    out = []
    for m in range(1, scan_length(n, rho)):
        for i in range(m + 1):
            if coprime_only and math.gcd(i, m) != 1:
                continue
            out.append(((i * n - theta) / m, (i * n + theta) / m))
    return out


def merge_intervals(intervals):
    merged = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [tuple(iv) for iv in merged]


def _integer_exclusions(n: int, rho: float, gamma3: float, coprime_only: bool) -> set[int]:
    # exact version of the real intervals: integer k is excluded by (i, m)
    # iff |m k - i n| <= need - 1, i.e. k in [(i n - need + 1)/m, (i n + need - 1)/m]
    need = _int_threshold(separation(n, rho, gamma3))
    spans = []
    for m in range(1, scan_length(n, rho)):
        for i in range(m + 1):
            if coprime_only and math.gcd(i, m) != 1:
                continue
            lo = math.ceil(Fraction(i * n - need + 1, m))
            hi = math.floor(Fraction(i * n + need - 1, m))
            if lo <= hi:
                spans.append((lo, hi))
    bad = set()
    for lo, hi in merge_intervals(spans):
        bad.update(range(max(lo, 1), min(hi, n) + 1))
    return bad


@dataclass(frozen=True)
class CoverReport:
    n: int
    measure: float
    measure_coprime: float
    interval_count: int
    good_k: tuple[int, ...]
    predicted: float


def exclusion_cover(n: int, rho: float = 1.0, gamma3: float = GAMMA3_DEFAULT) -> CoverReport:
    """Measure of the merged exclusion intervals on ``[0, n]`` and their integer complement.

    ``measure_coprime`` repeats the union keeping only ``gcd(i, m) = 1``;
    the two measures coincide because a non-reduced interval sits inside
    the wider one of its reduced fraction.  ``good_k`` is the complement in
    ``[2, n-2]`` of the integer points of the union.
    """
    check_gamma3(gamma3)

    def measure(ivs):
        return sum(min(b, n) - max(a, 0) for a, b in merge_intervals(ivs) if min(b, n) > max(a, 0))

    full = exclusion_intervals(n, rho, gamma3)
    cop = exclusion_intervals(n, rho, gamma3, coprime_only=True)
    bad = _integer_exclusions(n, rho, gamma3, coprime_only=False)
    good = tuple(k for k in range(2, n - 1) if k not in bad)
    return CoverReport(
        n=n,
        measure=measure(full),
        measure_coprime=measure(cop),
        interval_count=len(full),
        good_k=good,
        predicted=2 * gamma3 * SIX_OVER_PI2 * n,
    )


def good_k_bruteforce(n: int, rho: float = 1.0, gamma3: float = GAMMA3_DEFAULT) -> tuple[int, ...]:
    """Pure-Python double loop over ``k`` and ``m``; test oracle."""
    theta = separation(n, rho, gamma3)
    M = scan_length(n, rho)
    out = []
    for k in range(2, n - 1):
        ok = True
        for m in range(1, M):
            r = (m * k) % n
            if min(r, n - r) < theta:
                ok = False
                break
        if ok:
            out.append(k)
    return tuple(out)
