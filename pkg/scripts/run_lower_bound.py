"""Scaled mixing times t_mix(eps)/n^{3/2} over sampled hub positions.

Usage: python scripts/run_lower_bound.py [--n-grid 256,512,1024,2048]
"""

import argparse
import json
from pathlib import Path

from chordmix.experiments import lower_bound_probe, run_meta


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-grid", default="256,512,1024,2048")
    ap.add_argument("--eps-star", type=float, default=0.05)
    ap.add_argument("--k-sample", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/lower_bound.json")
    args = ap.parse_args()
    grid = [int(t) for t in args.n_grid.split(",")]
    res = lower_bound_probe(grid, args.eps_star, args.k_sample, args.seed)
    for n, v in res.min_scaled.items():
        print(f"n={n:5d} min scaled={v:.4f} at n/2={res.scaled[n].get(n // 2, float('nan')):.4f}")
    print(f"max/min ratio {res.ratio:.3f}")
    payload = {
        "meta": run_meta(vars(args), args.seed),
        "min_scaled": {str(n): v for n, v in res.min_scaled.items()},
        "scaled": {str(n): {str(k): v for k, v in d.items()} for n, d in res.scaled.items()},
        "ratio": res.ratio,
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


if __name__ == "__main__":
    main()
