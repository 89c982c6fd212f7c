"""Scaled hitting probabilities n P(X(T) = w) over the window W, for good k.

Usage: python scripts/run_hit_bound.py [--n-grid 512,1024,2048] [--seed 0]
"""

import argparse

from chordmix.experiments import choose_k
from chordmix.grid import GridConfig
from chordmix.montecarlo import hit_bound_check


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-grid", default="512,1024,2048")
    ap.add_argument("--seed", type=int, default=0, help="seed for the good-k draw")
    ap.add_argument("--gamma3", type=float, default=0.6)
    args = ap.parse_args()
    for n in (int(t) for t in args.n_grid.split(",")):
        k = choose_k(n, "good", args.seed)
        res = hit_bound_check(GridConfig.at_scale(n, k), args.gamma3)
        print(f"n={n:5d} k={k:5d} |W|={res.W_size:5d} min n*P={res.min_scaled:.4f} at w={res.argmin}")


if __name__ == "__main__":
    main()
