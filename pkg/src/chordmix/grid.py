"""Lattice representation of chord-chain tracks.

A track point ``(x, y, h)`` records ``x`` traversals of arc A (length ``k``),
``y`` traversals of arc B (length ``n-k``) and the direction ``h`` of the
segment it sits on.  The exit set for track distance ``L`` is the set of
points on the line ``k x + (n-k) y = L`` lying on grid lines.  Coordinates
are exact :class:`fractions.Fraction` values.

At a hub the track turns with probability 3/4 and goes straight with
probability 1/4.  Three independent routes give the probability of reaching
an exit point:

* :func:`exit_probability` - Binomial-convolution closed form, log space;
* :func:`exit_probability_oracle` - forward dynamic programme on the lattice;
* :func:`exit_probability_exact` - path-count series in exact rationals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import signal, special, stats

from chordmix.errors import InvalidCaseError, ValidationError

log = logging.getLogger(__name__)

A, B = "A", "B"
TURN, STRAIGHT = 0.75, 0.25
_LOG_TURN, _LOG_STRAIGHT = math.log(0.75), math.log(0.25)


@dataclass(frozen=True)
class GridConfig:
    n: int
    k: int
    L: int
    rho: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if self.n < 5 or not 1 <= self.k <= self.n - 1:
            raise ValidationError(f"need n >= 5 and 1 <= k <= n-1, got n={self.n}, k={self.k}")
        if self.L < 1:
            raise ValidationError(f"L must be >= 1, got {self.L}")
        if not 0.0 <= self.lam < 1.0:
            raise ValidationError(f"lambda must lie in [0, 1), got {self.lam}")
        if self.rho <= 0:
            raise ValidationError(f"rho must be positive, got {self.rho}")

    @classmethod
    def at_scale(cls, n: int, k: int, rho: float = 1.0) -> "GridConfig":
        """Config with ``L = ceil(rho n^{3/2})``."""
        return cls(n, k, math.ceil(rho * n**1.5), rho)

    @property
    def r0_halfwidth(self) -> float:
        return math.sqrt(self.rho) * self.n**0.25

    @property
    def r1_size(self) -> int:
        return math.floor(self.r0_halfwidth)


@dataclass(frozen=True, order=False)
class ExitPoint:
    x: Fraction
    y: Fraction
    h: str
    x_prime: int
    y_prime: int

    @classmethod
    def make(cls, x, y, h: str) -> "ExitPoint":
        x, y = Fraction(x), Fraction(y)
        if h == A:
            if y.denominator != 1:
                raise ValidationError("an A point needs integer y")
            return cls(x, y, A, math.ceil(x) - 1, int(y))
        if h == B:
            if x.denominator != 1:
                raise ValidationError("a B point needs integer x")
            return cls(x, y, B, int(x), math.ceil(y) - 1)
        raise ValidationError(f"direction must be 'A' or 'B', got {h!r}")

    @property
    def reachable(self) -> bool:
        return self.x_prime >= 0 and self.y_prime >= 0

    @property
    def sort_key(self):
        return (self.x, 0 if self.h == A else 1)

    def as_floats(self) -> tuple[float, float, str]:
        return float(self.x), float(self.y), self.h

    def __repr__(self):
        return f"ExitPoint({self.x}, {self.y}, {self.h}; x'={self.x_prime}, y'={self.y_prime})"


def exit_set(config: GridConfig, window: tuple[int, int] | None = None) -> list[ExitPoint]:
    """All points of the line ``k x + (n-k) y = L`` on grid lines.

    A lattice point on the line yields two points, one per direction.  Points
    with a negative preceding grid coordinate (e.g. ``(3, 0, B)``) belong to
    the literal set but cannot be reached from the origin; see
    :func:`reachable_exits`.  ``window`` restricts the integer coordinate to
    ``[lo, hi]``, which keeps large-``n`` enumerations near the diagonal.
    """
    n, k, L = config.n, config.k, config.L
    a, b = k, n - k
    lo, hi = (0, L) if window is None else window
    pts = []
    for X in range(max(lo, 0), min(hi, L // a) + 1):
        pts.append(ExitPoint.make(X, Fraction(L - a * X, b), B))
    for Y in range(max(lo, 0), min(hi, L // b) + 1):
        pts.append(ExitPoint.make(Fraction(L - b * Y, a), Y, A))
    pts.sort(key=lambda r: r.sort_key)
    return pts


def reachable_exits(points) -> list[ExitPoint]:
    out = [r for r in points if r.reachable]
    dropped = len(points) - len(out)
    if dropped:
        log.info("excluded %d unreachable exit point(s): %s", dropped, [r for r in points if not r.reachable])
    return out


def _check_start(start_dir: str) -> None:
    if start_dir not in (A, B):
        raise ValidationError(f"start direction must be 'A' or 'B', got {start_dir!r}")


def binom_conv_logpmf_at(a: int, b: int, s: int) -> float:
    """``log [Binom(a, 3/4) * Binom(b, 1/4)](s)``, summed in log space."""
    if a < 0 or b < 0:
        raise InvalidCaseError(f"negative Binomial size ({a}, {b})")
    lo, hi = max(0, s - b), min(a, s)
    if lo > hi:
        return -math.inf
    j = np.arange(lo, hi + 1)
    terms = stats.binom.logpmf(j, a, 0.75) + stats.binom.logpmf(s - j, b, 0.25)
    return float(special.logsumexp(terms))


def binom_conv_pmf(a: int, b: int) -> np.ndarray:
    """Full pmf of ``Binom(a, 3/4) * Binom(b, 1/4)`` on ``0..a+b``."""
    if a < 0 or b < 0:
        raise InvalidCaseError(f"negative Binomial size ({a}, {b})")
    pa = stats.binom.pmf(np.arange(a + 1), a, 0.75)
    pb = stats.binom.pmf(np.arange(b + 1), b, 0.25)
    if a + b > 20_000:
        q = signal.fftconvolve(pa, pb)
        return np.clip(q, 0.0, None)
    return np.convolve(pa, pb)


def binom_conv_logpmf(a: int, b: int) -> np.ndarray:
    """Full log-pmf of the same convolution without underflow."""
    if a < 0 or b < 0:
        raise InvalidCaseError(f"negative Binomial size ({a}, {b})")
    la = stats.binom.logpmf(np.arange(a + 1), a, 0.75)
    lb = stats.binom.logpmf(np.arange(b + 1), b, 0.25)
    grid = la[:, None] + lb[None, :]
    out = np.full(a + b + 1, -np.inf)
    for s in range(a + b + 1):
        j = np.arange(max(0, s - b), min(a, s) + 1)
        out[s] = special.logsumexp(grid[j, s - j])
    return out


def _case(r: ExitPoint, start_dir: str) -> str:
    return start_dir + r.h


def log_exit_probability(r: ExitPoint, start_dir: str) -> float:
    """Closed-form ``log P(E_r)`` for a start on direction ``start_dir``.

    AB, BA: ``3/4 [Binom(x', 3/4) * Binom(y', 1/4)](y')``
    AA:     ``3/4 [Binom(x'+1, 3/4) * Binom(y'-1, 1/4)](y')``
    BB:     ``3/4 [Binom(x'-1, 3/4) * Binom(y'+1, 1/4)](y')``

    On the axes the shifted size becomes -1; there the only track is the
    straight one and the probability is ``(1/4)^(x'+y'+1)``.
    """
    _check_start(start_dir)
    xp, yp = r.x_prime, r.y_prime
    case = _case(r, start_dir)
    if xp < 0 or yp < 0:
        raise InvalidCaseError(f"case {case}: exit point {r} has a negative preceding grid coordinate")
    if case in ("AB", "BA"):
        a, b = xp, yp
    elif case == "AA":
        if yp == 0:
            return (xp + 1) * _LOG_STRAIGHT
        a, b = xp + 1, yp - 1
    else:
        if xp == 0:
            return (yp + 1) * _LOG_STRAIGHT
        a, b = xp - 1, yp + 1
    return _LOG_TURN + binom_conv_logpmf_at(a, b, yp)


def exit_probability(r: ExitPoint, start_dir: str) -> float:
    return math.exp(log_exit_probability(r, start_dir))


def conv_bound_term(r: ExitPoint) -> float:
    """``(1/4) [Binom(x', 3/4) * Binom(y', 1/4)](y')``, the direction-free bound."""
    if not r.reachable:
        raise InvalidCaseError(f"exit point {r} is unreachable")
    return 0.25 * math.exp(binom_conv_logpmf_at(r.x_prime, r.y_prime, r.y_prime))


@lru_cache(maxsize=64)
def _arrival_table(xmax: int, ymax: int, start_dir: str) -> np.ndarray:
    # arrive[x, y, d]: probability the track passes grid point (x, y) arriving along d
    arrive = np.zeros((xmax + 1, ymax + 1, 2))
    arrive[0, 0, 0 if start_dir == A else 1] = 1.0
    for x in range(xmax + 1):
        if x > 0:
            arrive[x, :, 0] = STRAIGHT * arrive[x - 1, :, 0] + TURN * arrive[x - 1, :, 1]
        col_a = arrive[x, :, 0]
        col_b = arrive[x, :, 1]
        for y in range(1, ymax + 1):
            col_b[y] = STRAIGHT * col_b[y - 1] + TURN * col_a[y - 1]
    arrive.setflags(write=False)
    return arrive


def exit_probability_oracle(r: ExitPoint, start_dir: str, table: np.ndarray | None = None) -> float:
    """``P(E_r)`` from a forward lattice dynamic programme (independent route)."""
    _check_start(start_dir)
    xp, yp = r.x_prime, r.y_prime
    if xp < 0 or yp < 0:
        raise InvalidCaseError(f"case {_case(r, start_dir)}: exit point {r} has a negative preceding grid coordinate")
    if table is None or table.shape[0] <= xp or table.shape[1] <= yp:
        table = _arrival_table(xp, yp, start_dir)
    arr_a, arr_b = table[xp, yp]
    if r.h == A:
        return float(STRAIGHT * arr_a + TURN * arr_b)
    return float(TURN * arr_a + STRAIGHT * arr_b)


def oracle_table(points, start_dir: str) -> np.ndarray:
    xs = [r.x_prime for r in points if r.reachable]
    ys = [r.y_prime for r in points if r.reachable]
    return _arrival_table(max(xs), max(ys), start_dir)


def exit_probability_exact(r: ExitPoint, start_dir: str) -> Fraction:
    """Path-count series in exact rationals; practical for ``x'+y' <~ 100``."""
    _check_start(start_dir)
    xp, yp = r.x_prime, r.y_prime
    case = _case(r, start_dir)
    if xp < 0 or yp < 0:
        raise InvalidCaseError(f"case {case}: exit point {r} has a negative preceding grid coordinate")
    t, s = Fraction(3, 4), Fraction(1, 4)
    total = Fraction(0)
    if case in ("AB", "BA"):
        for i in range(min(xp, yp) + 1):
            total += math.comb(xp, i) * math.comb(yp, i) * t ** (2 * i + 1) * s ** (xp + yp - 2 * i)
        return total
    same, other = (xp, yp) if case == "AA" else (yp, xp)
    # runs: the start direction contributes an extra (virtual) segment
    if other == 0:
        return s ** (same + 1)
    for i in range(1, other + 1):
        total += math.comb(same + 1, i) * math.comb(other - 1, i - 1) * t ** (2 * i) * s ** (xp + yp + 1 - 2 * i)
    return total


def r0_window(config: GridConfig) -> tuple[int, int]:
    c = config.L / config.n
    w = config.r0_halfwidth
    return max(0, math.floor(c - w) - 3), math.ceil(c + w) + 3


def restrict_R0(points, rho: float, n: int) -> list[ExitPoint]:
    half = math.sqrt(rho) * n**0.25
    out = [r for r in points if r.reachable and abs(r.x_prime - r.y_prime) <= half]
    if not out:
        raise ValidationError(f"R0 is empty for n={n}, rho={rho}")
    return sorted(out, key=lambda r: r.sort_key)


def select_R1(R0, rho: float, n: int) -> list[ExitPoint]:
    """The middle ``floor(sqrt(rho) n^{1/4})`` points of ``R0`` (x ascending, A before B)."""
    R0 = sorted(R0, key=lambda r: r.sort_key)
    size = math.floor(math.sqrt(rho) * n**0.25)
    if len(R0) <= size:
        return list(R0)
    start = (len(R0) - size) // 2
    return R0[start : start + size]


def central_exits(config: GridConfig) -> tuple[list[ExitPoint], list[ExitPoint]]:
    """``(R0, R1)`` for ``config`` using a diagonal window."""
    R0 = restrict_R0(exit_set(config, r0_window(config)), config.rho, config.n)
    return R0, select_R1(R0, config.rho, config.n)


def map_to_vertex(r: ExitPoint, config: GridConfig) -> int:
    """Vertex reached after ``L`` track moves along any track through ``r``."""
    if not r.reachable:
        raise ValidationError(f"exit point {r} is unreachable")
    n, k = config.n, config.k
    if k * r.x + (n - k) * r.y != config.L:
        raise ValidationError(f"{r} is not on the line for L={config.L}")
    if r.h == A:
        return int(k * (r.x - r.x_prime))
    return k + int((n - k) * (r.y - r.y_prime))


def canonical_track(r: ExitPoint, rng: np.random.Generator | None = None) -> list[str]:
    """A segment sequence reaching ``r``: x' A arcs and y' B arcs, then r.h."""
    segs = [A] * r.x_prime + [B] * r.y_prime
    if rng is not None:
        rng.shuffle(segs)
    return segs + [r.h]


def walk_track(config: GridConfig, segments) -> int:
    """Walk ``L`` unit moves from the hub pair along ``segments``."""
    n, k = config.n, config.k
    done = 0
    for seg in segments:
        length = k if seg == A else n - k
        for s in range(1, length + 1):
            done += 1
            if done == config.L:
                return s if seg == A else k + s
    raise ValidationError("track too short for L")


def relabeled(config: GridConfig) -> tuple[GridConfig, int]:
    """Rotate so the A arc is the shorter one; returns ``(config', shift)``.

    A vertex ``v'`` of the rotated chain is vertex ``(v' + shift - 1) % n + 1``
    of the original.
    """
    if 2 * config.k <= config.n:
        return config, 0
    rot = GridConfig(config.n, config.n - config.k, config.L, config.rho, config.lam)
    return rot, config.k


def v1_images(config: GridConfig) -> tuple[list[int], list[ExitPoint]]:
    """``V1`` in scan order together with ``R1`` (of the relabeled chain)."""
    cfg, shift = relabeled(config)
    _, R1 = central_exits(cfg)
    n = config.n
    return [(map_to_vertex(r, cfg) + shift - 1) % n + 1 for r in R1], R1


def cycle_distance(a, b, n: int):
    d = np.abs(np.asarray(a) - np.asarray(b)) % n
    return np.minimum(d, n - d)


def asymptotic_hub_margin(n: int, rho: float = 1.0) -> float:
    return 4.0 * math.sqrt(rho) * n**0.75 * math.sqrt(math.log(n))


@dataclass(frozen=True)
class VertexSelection:
    V1: tuple[int, ...]
    V2: tuple[int, ...]
    W: frozenset[int]
    I: frozenset[int]
    hub_margin: float
    w_radius: float


def build_selection(V1, config: GridConfig, gamma3: float, hub_margin: float | None = None) -> VertexSelection:
    """Hub-avoiding images ``V2``, their neighbourhoods ``W`` and the set ``I``.

    ``hub_margin`` defaults to ``4 sqrt(rho) n^{3/4} sqrt(log n)``, which exceeds
    ``n/2`` for every ``n`` below about ``10^6``; desk-scale checks pass a
    smaller margin explicitly.
    """
    n, k = config.n, config.k
    margin = asymptotic_hub_margin(n, config.rho) if hub_margin is None else float(hub_margin)
    verts = np.arange(1, n + 1)
    far = (cycle_distance(verts, k, n) > margin) & (cycle_distance(verts, n, n) > margin)
    I = frozenset(int(v) for v in verts[far])
    V2 = tuple(v for v in V1 if v in I)
    radius = gamma3 * math.sqrt(config.rho) * n**0.75 / 2
    near = np.zeros(n, dtype=bool)
    for v in V2:
        near |= cycle_distance(verts, v, n) < radius
    W = frozenset(int(v) for v in verts[near])
    return VertexSelection(tuple(V1), V2, W, I, margin, radius)


@dataclass(frozen=True)
class CLTResult:
    x_prime: int
    y_prime: int
    sup_distance: float
    scaled: float


def clt_diagnostic(x_prime: int, y_prime: int) -> CLTResult:
    """Sup CDF gap between ``Binom(x',3/4) * Binom(y',1/4)`` and its Gaussian."""
    N = x_prime + y_prime
    if N < 1:
        raise ValidationError("need x' + y' >= 1")
    q = binom_conv_pmf(x_prime, y_prime)
    F = np.cumsum(q)
    F_left = np.concatenate([[0.0], F[:-1]])
    mean = (3 * x_prime + y_prime) / 4
    sd = math.sqrt(3 * N / 16)
    G = stats.norm.cdf(np.arange(N + 1), mean, sd)
    sup = float(max(np.abs(F - G).max(), np.abs(F_left - G).max()))
    return CLTResult(x_prime, y_prime, sup, sup * math.sqrt(N))


def log_concavity_violations(logq: np.ndarray, tol: float = 1e-10) -> list[int]:
    """Interior indices where ``q_i^2 < q_{i-1} q_{i+1}`` beyond ``tol`` (log scale)."""
    bad = []
    for i in range(1, len(logq) - 1):
        lhs = 2 * logq[i]
        rhs = logq[i - 1] + logq[i + 1]
        if np.isneginf(rhs):
            continue
        if lhs < rhs - tol * max(1.0, abs(rhs)):
            bad.append(i)
    return bad
