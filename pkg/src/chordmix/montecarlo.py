"""Trajectory sampling and the coin-tape re-generation of the chord chain.

Randomness
----------
Trial ``i`` belongs to block ``i // BLOCK``.  Each block owns independent
PCG64 streams seeded by ``SeedSequence(seed, spawn_key=(block, stream))``;
trials inside a block run in index order.  A ``(seed, trial)`` pair therefore
reproduces bit-for-bit no matter how many trials are requested or how blocks
are scheduled.  Fair bits are taken 52 at a time from ``Generator.random``.

Coin procedure
--------------
The chain starts at hub ``n`` as if it had just arrived along arc B.  Every
step reads one symbol: ``1`` moves (along an arc, or off a hub), ``0`` does
not.  At a hub a ``0`` re-draws the current hub uniformly, so the departure
direction is decided by the hub that finally reads a ``1``.  The procedure
picks an exit point with its exact probability, a track to it by backward
sampling on the forward arrival table, and a tape ``c0`` of fair bits; one
symbol is inserted at each hub reached (``c_h``).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import special

from chordmix.chain import ChainSpec, Kernel, Variant, build_kernel
from chordmix.errors import ValidationError
from chordmix.evolve import delta, propagate
from chordmix.grid import (
    A,
    B,
    ExitPoint,
    GridConfig,
    _arrival_table,
    build_selection,
    central_exits,
    exit_set,
    log_exit_probability,
    map_to_vertex,
    reachable_exits,
    v1_images,
)

log = logging.getLogger(__name__)

BLOCK = 4096
STREAM_EXIT, STREAM_TAPE, STREAM_CHOICE = 0, 1, 2
_TWO52 = 4503599627370496.0
GENERATOR_ID = f"numpy PCG64 via SeedSequence(seed, spawn_key=(block, stream)), block={BLOCK}"


def block_generators(seed: int, block: int, streams: int = 3) -> list[np.random.Generator]:
    if seed < 0:
        raise ValidationError("seed must be a non-negative integer")
    return [np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block, s)))) for s in range(streams)]


def _blocks(trials: int):
    """``(block, first, stop)`` covering ``range(trials)``."""
    for b in range((trials + BLOCK - 1) // BLOCK):
        yield b, b * BLOCK, min((b + 1) * BLOCK, trials)


# ----------------------------------------------------------------- trajectories


def _quarter_table(kernel: Kernel) -> np.ndarray | None:
    """``(n, 4)`` successor table when every entry is a multiple of 1/4."""
    m = kernel.matrix
    quarters = m.data * 4
    if not np.all(quarters == np.round(quarters)):
        return None
    table = np.empty((kernel.n, 4), dtype=np.int64)
    for v in range(kernel.n):
        a, b = m.indptr[v], m.indptr[v + 1]
        slots = np.repeat(m.indices[a:b], np.round(quarters[a:b]).astype(int))
        table[v] = slots
    return table


@njit(cache=True)
def _walk_quarter(table, start, T, g, out):
    for t in range(out.shape[0]):
        v = start
        bits = 0
        left = 0
        for _ in range(T):
            if left == 0:
                bits = np.int64(g.random() * _TWO52)
                left = 26
            v = table[v, bits & 3]
            bits >>= 2
            left -= 1
        out[t] = v


@njit(cache=True)
def _walk_cdf(indptr, indices, cum, start, T, g, out, counts):
    for t in range(out.shape[0]):
        v = start
        if counts.shape[0] > 0:
            counts[v] += 1
        for _ in range(T):
            u = g.random()
            j = indptr[v]
            last = indptr[v + 1] - 1
            while j < last and u >= cum[j]:
                j += 1
            v = indices[j]
            if counts.shape[0] > 0:
                counts[v] += 1
        out[t] = v


def _row_cdf(kernel: Kernel) -> np.ndarray:
    m = kernel.matrix
    cum = np.empty_like(m.data)
    for v in range(kernel.n):
        a, b = m.indptr[v], m.indptr[v + 1]
        cum[a:b] = np.cumsum(m.data[a:b])
        cum[b - 1] = 1.0
    return cum


@dataclass(frozen=True)
class TrajectoryResult:
    final_vertex: int
    visits: np.ndarray | None = field(default=None, repr=False)


def simulate_trajectory(kernel: Kernel, start: int, T: int, seed: int, visit_counts: bool = False) -> TrajectoryResult:
    """One trajectory of ``T`` steps from ``start`` (trial 0 of ``seed``).

    ``visit_counts`` tallies the states at times ``0..T``, so the counts sum
    to ``T + 1``.
    """
    if T < 0:
        raise ValidationError("T must be non-negative")
    if not 1 <= start <= kernel.n:
        raise ValidationError(f"start {start} outside 1..{kernel.n}")
    if not visit_counts:
        return TrajectoryResult(int(simulate_batch(kernel, start, T, 1, seed)[0]))
    g = block_generators(seed, 0, 1)[0]
    out = np.empty(1, dtype=np.int64)
    counts = np.zeros(kernel.n, dtype=np.int64)
    m = kernel.matrix
    _walk_cdf(m.indptr.astype(np.int64), m.indices.astype(np.int64), _row_cdf(kernel), start - 1, T, g, out, counts)
    return TrajectoryResult(int(out[0]) + 1, counts)


def simulate_batch(kernel: Kernel, start: int, T: int, trials: int, seed: int) -> np.ndarray:
    """Final vertices (1-indexed) of ``trials`` independent trajectories.

    Kernels whose entries are multiples of 1/4 use two fair bits per step;
    others invert the row CDF with one uniform per step.
    """
    if T < 0 or trials < 1:
        raise ValidationError("need T >= 0 and trials >= 1")
    if not 1 <= start <= kernel.n:
        raise ValidationError(f"start {start} outside 1..{kernel.n}")
    out = np.empty(trials, dtype=np.int64)
    table = _quarter_table(kernel)
    m = kernel.matrix
    if table is None:
        indptr, indices, cum = m.indptr.astype(np.int64), m.indices.astype(np.int64), _row_cdf(kernel)
    no_counts = np.zeros(0, dtype=np.int64)
    for b, lo, hi in _blocks(trials):
        g = block_generators(seed, b, 1)[0]
        if table is not None:
            _walk_quarter(table, start - 1, T, g, out[lo:hi])
        else:
            _walk_cdf(indptr, indices, cum, start - 1, T, g, out[lo:hi], no_counts)
    return out + 1


def empirical_law(vertices: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(np.asarray(vertices) - 1, minlength=n) / len(vertices)


# --------------------------------------------------------------- coin procedure


def _dir_code(h: str) -> int:
    return 0 if h == A else 1


@dataclass(frozen=True)
class ExitTable:
    """Reachable exit points with their selection CDF and the arrival table."""

    points: tuple[ExitPoint, ...]
    probs: np.ndarray
    cdf: np.ndarray
    xp: np.ndarray
    yp: np.ndarray
    h: np.ndarray
    arrival: np.ndarray


def exit_table(config: GridConfig, start_dir: str = B, subset=None) -> ExitTable:
    pts = reachable_exits(exit_set(config)) if subset is None else list(subset)
    if not pts:
        raise ValidationError("no exit points to sample from")
    logp = np.array([log_exit_probability(r, start_dir) for r in pts])
    p = np.exp(logp - logp.max())
    p /= p.sum()
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    xp = np.array([r.x_prime for r in pts], dtype=np.int64)
    yp = np.array([r.y_prime for r in pts], dtype=np.int64)
    h = np.array([_dir_code(r.h) for r in pts], dtype=np.int64)
    arrival = _arrival_table(int(xp.max()), int(yp.max()), start_dir)
    return ExitTable(tuple(pts), p, cdf, xp, yp, h, arrival)


@njit(cache=True)
def _popcount(x):
    x = x - ((x >> 1) & 0x5555555555555555)
    x = (x & 0x3333333333333333) + ((x >> 2) & 0x3333333333333333)
    x = (x + (x >> 4)) & 0x0F0F0F0F0F0F0F0F
    return ((x * 0x0101010101010101) >> 56) & 0xFF


@njit(cache=True)
def _sample_track(g0, cdf, rxp, ryp, rh, F, start_dir, path):
    u = g0.random()
    ri = np.searchsorted(cdf, u, side="right")
    if ri >= cdf.shape[0]:
        ri = cdf.shape[0] - 1
    x = rxp[ri]
    y = ryp[ri]
    npath = x + y + 1
    path[npath - 1] = rh[ri]
    nxt = rh[ri]
    while x + y > 0:
        # arrival direction at (x, y) given the departure nxt
        wa = F[x, y, 0] * (0.25 if nxt == 0 else 0.75)
        wb = F[x, y, 1] * (0.25 if nxt == 1 else 0.75)
        u = g0.random()
        d = 0 if u * (wa + wb) < wa else 1
        path[x + y - 1] = d
        if d == 0:
            x -= 1
        else:
            y -= 1
        nxt = d
    return ri, npath


@njit(cache=True)
def _coin_run(g1, g2, path, npath, n, k, T, start_dir, res):
    """Run one tape; ``res`` receives vertex, tau, |c_h|, sum(c0), vertex at T."""
    c0_len = T - npath
    c0_left = c0_len
    bits = 0
    left = 0
    j = 0
    prev = start_dir
    seg = 0
    pos = 0
    seg_len = 1
    waiting = False
    wait_dir = 0
    c1 = 0
    ch = 0
    sum_c0 = 0
    vT = -1
    pending = True  # a hub decision is due (the origin counts as one)
    tau = -1
    ch_tau = -1
    final = -1
    while True:
        if pending:
            pending = False
            if j < npath:
                d = path[j]
                if d != prev:
                    sym = 1 if g2.random() < 2.0 / 3.0 else 0
                else:
                    sym = 0
            else:
                u = g2.random()
                if u < 0.25:
                    d = prev
                    sym = 0
                elif u < 0.75:
                    d = 1 - prev
                    sym = 1
                else:
                    d = 1 - prev
                    sym = 0
            j += 1
            ch += 1
            c1 += 1
            prev = d
            if sym == 1:
                seg = d
                seg_len = k if d == 0 else n - k
                pos = 1
                waiting = False
            else:
                waiting = True
                wait_dir = d
        else:
            if c0_left == 0 and tau < 0:
                tau = c1
                ch_tau = ch
                final = _vertex(waiting, wait_dir, seg, pos, n, k, g2)
                if vT >= 0:
                    break
            if left == 0:
                bits = np.int64(g1.random() * _TWO52)
                left = 52
            in_tape = tau < 0
            # skip a run of arc moves that cannot reach a hub or cross T
            if (not waiting) and (not in_tape or left <= c0_left) and (vT >= 0 or c1 + left < T):
                pc = _popcount(bits)
                if pc < seg_len - pos:
                    pos += pc
                    c1 += left
                    if in_tape:
                        c0_left -= left
                        sum_c0 += pc
                    bits = 0
                    left = 0
                    continue
            b = bits & 1
            bits >>= 1
            left -= 1
            c1 += 1
            if in_tape:
                c0_left -= 1
                sum_c0 += b
            if b == 1:
                if waiting:
                    waiting = False
                    seg = wait_dir
                    seg_len = k if seg == 0 else n - k
                    pos = 1
                else:
                    pos += 1
                    if pos == seg_len:
                        pending = True
        if vT < 0 and c1 == T:
            # with a decision pending the chain sits on the hub it just reached
            vT = _vertex(waiting, wait_dir, seg, pos, n, k, g2)
            if tau >= 0:
                break
    res[0] = final
    res[1] = tau
    # insertions made while extending c1 out to T are not part of c_h
    res[2] = ch_tau
    res[3] = sum_c0
    res[4] = vT


@njit(cache=True)
def _vertex(waiting, wait_dir, seg, pos, n, k, g2):
    if waiting:
        # departing along A happens from hub n, along B from hub k
        home = n if wait_dir == 0 else k
        other = k if wait_dir == 0 else n
        return home if g2.random() < 0.75 else other
    return pos if seg == 0 else k + pos


@njit(cache=True)
def _coin_block(g0, g1, g2, cdf, rxp, ryp, rh, F, start_dir, n, k, T, out):
    path = np.empty(F.shape[0] + F.shape[1] + 1, dtype=np.int64)
    res = np.empty(5, dtype=np.int64)
    for t in range(out.shape[0]):
        ri, npath = _sample_track(g0, cdf, rxp, ryp, rh, F, start_dir, path)
        _coin_run(g1, g2, path, npath, n, k, T, start_dir, res)
        out[t, 0] = ri
        out[t, 1:] = res


@dataclass(frozen=True)
class CoinBatch:
    """Per-trial coin-procedure summaries, in trial-index order."""

    config: GridConfig
    T: int
    seed: int
    exits: ExitTable = field(repr=False)
    exit_index: np.ndarray = field(repr=False)
    final_vertex: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)
    inserted: np.ndarray = field(repr=False)
    sum_c0: np.ndarray = field(repr=False)
    vertex_at_T: np.ndarray = field(repr=False)

    @property
    def trials(self) -> int:
        return len(self.tau)

    @property
    def path_length(self) -> np.ndarray:
        return self.exits.xp[self.exit_index] + self.exits.yp[self.exit_index] + 1

    @property
    def c0_length(self) -> np.ndarray:
        return self.T - self.path_length

    def tau_equals_T(self) -> float:
        return float(np.mean(self.tau == self.T))

    def bookkeeping_ok(self) -> bool:
        return bool(np.all(self.tau == self.c0_length + self.inserted))


def _check_coin_args(config: GridConfig, T: int) -> None:
    if config.lam != 0.0:
        raise ValidationError("only lambda = 0 (start on a hub) is supported")
    if T % 2 or T != 2 * config.L:
        raise ValidationError(f"need T even and T = 2L; got T={T}, L={config.L}")


def coin_batch(config: GridConfig, T: int, trials: int, seed: int, exits=None) -> CoinBatch:
    """Run the coin procedure for trials ``0..trials-1``.

    ``exits`` optionally restricts exit-point selection to a subset (the
    probabilities are renormalised within it).
    """
    _check_coin_args(config, T)
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    table = exit_table(config, B, exits)
    if int((table.xp + table.yp).max()) + 1 > T:
        raise ValidationError("T shorter than the longest track")
    out = np.empty((trials, 6), dtype=np.int64)
    for b, lo, hi in _blocks(trials):
        g0, g1, g2 = block_generators(seed, b)
        _coin_block(g0, g1, g2, table.cdf, table.xp, table.yp, table.h, table.arrival, 1, config.n, config.k, T, out[lo:hi])
    return CoinBatch(config, T, seed, table, out[:, 0], out[:, 1], out[:, 2], out[:, 3], out[:, 4], out[:, 5])


@dataclass(frozen=True)
class CoinProcedureRecord:
    exit: ExitPoint
    track: tuple[str, ...]
    c0: np.ndarray = field(repr=False)
    inserted: tuple[tuple[int, int], ...]
    tau: int
    final_vertex: int
    vertex_at_T: int
    sum_c0: int

    @property
    def c1_length(self) -> int:
        return len(self.c0) + len(self.inserted)

    def bookkeeping_ok(self) -> bool:
        return self.tau == self.c1_length


def coin_procedure(config: GridConfig, T: int, seed: int, trial: int = 0, exits=None) -> CoinProcedureRecord:
    """Full record of one coin-procedure trial, tapes included.

    A plain-Python walk over the tape; the earlier trials of the block are
    replayed with the compiled batch so the result equals trial ``trial`` of
    :func:`coin_batch` with the same seed.
    """
    _check_coin_args(config, T)
    table = exit_table(config, B, exits)
    block, first = divmod(trial, BLOCK)
    g0, g1, g2 = block_generators(seed, block)
    if first:
        scratch = np.empty((first, 6), dtype=np.int64)
        _coin_block(g0, g1, g2, table.cdf, table.xp, table.yp, table.h, table.arrival, 1, config.n, config.k, T, scratch)
    n, k = config.n, config.k
    F = table.arrival

    u = g0.random()
    ri = min(int(np.searchsorted(table.cdf, u, side="right")), len(table.cdf) - 1)
    r = table.points[ri]
    x, y = r.x_prime, r.y_prime
    npath = x + y + 1
    path = [0] * npath
    path[-1] = nxt = _dir_code(r.h)
    while x + y > 0:
        wa = F[x, y, 0] * (0.25 if nxt == 0 else 0.75)
        wb = F[x, y, 1] * (0.25 if nxt == 1 else 0.75)
        d = 0 if g0.random() * (wa + wb) < wa else 1
        path[x + y - 1] = d
        x, y = (x - 1, y) if d == 0 else (x, y - 1)
        nxt = d

    c0_len = T - npath
    chunks = [int(g1.random() * _TWO52) for _ in range((c0_len + 51) // 52)]
    c0 = np.array([(c >> i) & 1 for c in chunks for i in range(52)][:c0_len], dtype=np.uint8)
    extra = []  # bits past the tape, needed only if tau < T

    def next_extra():
        if not extra:
            c = int(g1.random() * _TWO52)
            extra.extend((c >> i) & 1 for i in range(52))
        return extra.pop(0)

    # the compiled path consumes the rest of a partly used chunk first
    spill = [(chunks[-1] >> i) & 1 for i in range(c0_len - 52 * (len(chunks) - 1), 52)] if chunks else []
    extra.extend(spill)

    def vertex_now():
        if state["waiting"]:
            home, other = (n, k) if state["wait_dir"] == 0 else (k, n)
            return home if g2.random() < 0.75 else other
        return state["pos"] if state["seg"] == 0 else k + state["pos"]

    state = dict(j=0, prev=1, seg=0, pos=0, waiting=False, wait_dir=0)
    inserted = []
    c1 = 0
    vT = None

    def decide():
        nonlocal c1
        s = state
        if s["j"] < npath:
            d = path[s["j"]]
            sym = (1 if g2.random() < 2.0 / 3.0 else 0) if d != s["prev"] else 0
        else:
            u = g2.random()
            d, sym = (s["prev"], 0) if u < 0.25 else ((1 - s["prev"], 1) if u < 0.75 else (1 - s["prev"], 0))
        s["j"] += 1
        s["prev"] = d
        inserted.append((c1, sym))
        c1 += 1
        if sym:
            s.update(seg=d, pos=1, waiting=False)
        else:
            s.update(waiting=True, wait_dir=d)

    def read(bit):
        nonlocal c1
        s = state
        c1 += 1
        if bit:
            if s["waiting"]:
                s.update(waiting=False, seg=s["wait_dir"], pos=1)
            else:
                s["pos"] += 1
                if s["pos"] == (k if s["seg"] == 0 else n - k):
                    return True
        return False

    pending = True
    idx = 0
    tau = final = None
    while True:
        if pending:
            decide()
            pending = False
        else:
            if idx == c0_len and tau is None:
                tau, final = c1, vertex_now()
                n_inserted = len(inserted)
                if vT is not None:
                    break
            bit = int(c0[idx]) if tau is None else next_extra()
            if tau is None:
                idx += 1
            pending = read(bit)
        if vT is None and c1 == T:
            vT = vertex_now()
            if tau is not None:
                break
    track = tuple(A if d == 0 else B for d in path)
    return CoinProcedureRecord(r, track, c0, tuple(inserted[:n_inserted]), tau, final, vT, int(c0.sum()))


# ----------------------------------------------------------------- hit bound


@dataclass(frozen=True)
class HitBoundResult:
    n: int
    k: int
    T: int
    min_scaled: float
    argmin: int
    W_size: int
    V2: tuple[int, ...]
    hub_margin: float
    joint: dict | None = None


def hit_bound_check(
    config: GridConfig,
    gamma3: float = 0.6,
    hub_margin: float | None = None,
    joint_trials: int = 0,
    seed: int | None = None,
) -> HitBoundResult:
    """``min_{w in W} n P(X(T) = w)`` with ``T = 2L`` by exact evolution from hub ``n``.

    ``hub_margin`` defaults to the neighbourhood radius
    ``gamma3 sqrt(rho) n^{3/4} / 2`` so that ``W`` stays clear of the hubs at
    desk-scale ``n``.  With ``joint_trials > 0`` a coin-procedure batch also
    estimates ``P(E_r, X(tau) in W_r)`` for each ``r`` whose image lies in
    ``V2``, where ``W_r`` is the window around ``g(r)``.
    """
    n, k = config.n, config.k
    if n > 4096:
        raise ValidationError("hit_bound_check is capped at n = 4096")
    T = 2 * config.L
    radius = gamma3 * math.sqrt(config.rho) * n**0.75 / 2
    V1, R1 = v1_images(config)
    sel = build_selection(V1, config, gamma3, radius if hub_margin is None else hub_margin)
    if not sel.W:
        raise ValidationError("W is empty; choose a good k or a smaller hub margin")
    kernel = build_kernel(ChainSpec(Variant.DRIFT_CHORD, n, k))
    law = propagate(kernel, delta(n, n), T)
    W = np.array(sorted(sel.W))
    scaled = n * law[W - 1]
    i = int(scaled.argmin())
    joint = None
    if joint_trials:
        if seed is None:
            raise ValidationError("joint estimates need a seed")
        batch = coin_batch(config, T, joint_trials, seed)
        joint = {}
        verts = np.arange(1, n + 1)
        for idx, r in enumerate(batch.exits.points):
            if not (r.reachable and map_to_vertex(r, config) in sel.V2):
                continue
            v = map_to_vertex(r, config)
            near = set(verts[np.minimum(np.abs(verts - v) % n, n - np.abs(verts - v) % n) < radius].tolist())
            hit = (batch.exit_index == idx) & np.isin(batch.final_vertex, list(near))
            joint[r.as_floats()] = float(hit.mean())
    return HitBoundResult(n, k, T, float(scaled[i]), int(W[i]), len(W), sel.V2, sel.hub_margin, joint)


def r2_exits(config: GridConfig, hub_margin: float) -> list[ExitPoint]:
    """Points of ``R1`` whose image keeps ``hub_margin`` from both hubs."""
    _, R1 = central_exits(config)
    n, k = config.n, config.k
    out = []
    for r in R1:
        v = map_to_vertex(r, config)
        dk = min(abs(v - k), n - abs(v - k))
        dn = min(abs(v - n), n - abs(v - n))
        if dk > hub_margin and dn > hub_margin:
            out.append(r)
    return out


# ------------------------------------------------------------ diagnostics


@dataclass(frozen=True)
class StirlingResult:
    T_prime: int
    s: int
    exact: float
    asymptotic: float
    ratio: float
    in_regime: bool


def stirling_diagnostic(T_prime: int, s: int) -> StirlingResult:
    """Exact ``C(T', s) / 2^T'`` against its local Gaussian approximation."""
    if T_prime < 1 or not 0 <= s <= T_prime:
        raise ValidationError("need T' >= 1 and 0 <= s <= T'")
    log_exact = special.gammaln(T_prime + 1) - special.gammaln(s + 1) - special.gammaln(T_prime - s + 1) - T_prime * math.log(2)
    log_asym = -0.5 * math.log(T_prime * math.pi / 2) - (T_prime - 2 * s) ** 2 / (2 * T_prime)
    in_regime = abs(T_prime / 2 - s) <= T_prime ** (2 / 3)
    if not in_regime:
        warnings.warn(f"|T'/2 - s| = {abs(T_prime / 2 - s)} exceeds T'^(2/3); the approximation need not hold", stacklevel=2)
    return StirlingResult(T_prime, s, math.exp(log_exact), math.exp(log_asym), math.exp(log_exact - log_asym), in_regime)


@dataclass(frozen=True)
class ConcentrationResult:
    n: int
    trials: int
    threshold: float
    rate: float
    max_deviation: int


def concentration_threshold(config: GridConfig) -> float:
    n = config.n
    return 3 * math.sqrt(config.rho) * n**0.75 * math.sqrt(math.log(n))


def concentration_check(config: GridConfig, trials: int, seed: int, threshold_scale: float = 1.0) -> ConcentrationResult:
    """Empirical ``P(|sum(c0) - (L + lambda)| > scale * 3 sqrt(rho) n^{3/4} sqrt(log n))``."""
    T = 2 * config.L
    batch = coin_batch(config, T, trials, seed)
    dev = np.abs(batch.sum_c0 - (config.L + config.lam))
    thr = threshold_scale * concentration_threshold(config)
    return ConcentrationResult(config.n, trials, thr, float(np.mean(dev > thr)), int(dev.max()))
