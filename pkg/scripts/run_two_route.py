"""Compare the coin-procedure law of X(tau) with direct trajectory sampling.

Usage: python scripts/run_two_route.py [--n 512] [--trials 1000000]
"""

import argparse
import time

from chordmix.chain import ChainSpec, Variant, build_kernel
from chordmix.evolve import delta, propagate, tv_distance
from chordmix.experiments import choose_k
from chordmix.grid import GridConfig
from chordmix.montecarlo import coin_batch, empirical_law, simulate_batch


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--trials", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    n = args.n
    k = choose_k(n, "good", 0)
    cfg = GridConfig.at_scale(n, k)
    T = 2 * cfg.L
    t0 = time.perf_counter()
    coin = coin_batch(cfg, T, args.trials, args.seed)
    t1 = time.perf_counter()
    kernel = build_kernel(ChainSpec(Variant.DRIFT_CHORD, n, k))
    direct = simulate_batch(kernel, n, T, args.trials, args.seed + 1)
    t2 = time.perf_counter()
    exact = propagate(kernel, delta(n, n), T)
    law_tau = empirical_law(coin.final_vertex, n)
    law_T = empirical_law(coin.vertex_at_T, n)
    law_direct = empirical_law(direct, n)
    print(f"n={n} k={k} T={T} trials={args.trials}  coin {t1 - t0:.1f}s  direct {t2 - t1:.1f}s")
    print(f"{'tau = T fraction':26s}{coin.tau_equals_T():.4f}")
    print(f"{'bookkeeping holds':26s}{coin.bookkeeping_ok()}")
    print(f"{'TV(X(tau), direct)':26s}{tv_distance(law_tau, law_direct):.4f}")
    print(f"{'TV(X(tau), exact)':26s}{tv_distance(law_tau, exact):.4f}")
    print(f"{'TV(X(T) via coin, exact)':26s}{tv_distance(law_T, exact):.4f}")
    print(f"{'TV(direct, exact)':26s}{tv_distance(law_direct, exact):.4f}")


if __name__ == "__main__":
    main()
