"""Command-line entry point: ``chordmix <subcommand> ...``.

Exit status is 0 on success, 1 on invalid input (including unknown flags)
and 2 when a computation fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from chordmix import __version__
from chordmix.chain import ChainSpec, Variant, build_kernel, kernel_to_json
from chordmix.errors import ValidationError
from chordmix.evolve import mixing_curve, mixing_time
from chordmix.experiments import (
    emit,
    fit_exponent,
    khub_probe,
    load,
    lower_bound_probe,
    run_meta,
    scaling_run,
    zigzag_scan,
)
from chordmix.gaps import GAMMA3_DEFAULT, GAMMA3_MAX, good_k_set
from chordmix.grid import A, B, GridConfig, exit_probability, exit_probability_oracle, exit_set, map_to_vertex, oracle_table, reachable_exits
from chordmix.montecarlo import GENERATOR_ID, coin_batch, empirical_law, hit_bound_check, simulate_batch

log = logging.getLogger("chordmix")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _config_echo(args) -> dict:
    # the output location is not part of the run configuration
    skip = {"func", "log_level", "command", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _meta(args, **extra) -> dict:
    return run_meta(_config_echo(args), getattr(args, "seed", None), command=args.command, **extra)


def _write_json(obj: dict, out) -> None:
    text = json.dumps(obj, sort_keys=True, indent=1) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _spec(args) -> ChainSpec:
    variant = Variant.parse(args.variant)
    hubs = tuple(args.hubs) if getattr(args, "hubs", None) else None
    k = args.k if variant in (Variant.DRIFT_CHORD,) else None
    if variant is not Variant.DRIFT_CHORD and variant is not Variant.K_HUB and args.k is not None:
        raise ValidationError(f"{variant.value} takes no --k")
    return ChainSpec(variant, args.n, k, hubs)


def cmd_kernel(args) -> int:
    kernel = build_kernel(_spec(args))
    _write_json({"meta": _meta(args), **kernel_to_json(kernel)}, args.out)
    return 0


def cmd_mix(args) -> int:
    kernel = build_kernel(_spec(args))
    res = mixing_time(kernel, args.eps, args.policy, args.max_iter)
    payload = {
        "meta": _meta(args),
        "t_mix": res.t_mix,
        "eps": res.eps,
        "policy": res.policy,
        "lower_bound": res.lower_bound,
    }
    if args.out:
        top = max(2 * res.t_mix, 1)
        times = sorted(set(np.linspace(0, top, 65).astype(int).tolist()) | {max(res.t_mix - 1, 0), res.t_mix})
        curve = mixing_curve(kernel, times, args.policy)
        curve.to_csv(args.out)
        Path(str(args.out) + ".meta.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    _write_json(payload, None)
    return 0


def cmd_exitprobs(args) -> int:
    config = GridConfig(args.n, args.k, args.L)
    pts = reachable_exits(exit_set(config))
    table = oracle_table(pts, args.start_dir)
    rows = []
    for r in pts:
        rows.append(
            [
                repr(float(r.x)),
                repr(float(r.y)),
                r.h,
                r.x_prime,
                r.y_prime,
                repr(exit_probability(r, args.start_dir)),
                repr(exit_probability_oracle(r, args.start_dir, table)),
                map_to_vertex(r, config),
            ]
        )
    header = ["x", "y", "h", "x_prime", "y_prime", "p_closed", "p_oracle", "vertex"]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    if args.out:
        Path(str(args.out) + ".meta.json").write_text(json.dumps(_meta(args), sort_keys=True, indent=1) + "\n")
    return 0


def cmd_gaps(args) -> int:
    if args.gamma3 >= GAMMA3_MAX:
        raise ValidationError(f"gamma3 must be < pi^2/12 = {GAMMA3_MAX:.6f}, got {args.gamma3}")
    rep = good_k_set(args.n, args.rho, args.gamma3)
    _write_json(
        {
            "meta": _meta(args),
            "n": rep.n,
            "fraction": rep.fraction,
            "bound": rep.fraction_bound,
            "good_k_count": rep.count,
            "sample_good_k": list(rep.good_k[:20]),
        },
        args.out,
    )
    return 0


def cmd_mc(args) -> int:
    n, k = args.n, args.k
    rho = args.rho
    L = math.ceil(rho * n**1.5)
    T = args.T if args.T is not None else 2 * L
    payload = {"meta": _meta(args, generator=GENERATOR_ID), "mode": args.mode, "n": n, "k": k, "T": T}
    if args.mode in ("trajectory", "coin") and args.seed is None:
        raise ValidationError(f"mode {args.mode} needs an explicit --seed")
    if args.mode == "trajectory":
        kernel = build_kernel(ChainSpec(Variant.DRIFT_CHORD, n, k))
        verts = simulate_batch(kernel, n, T, args.trials, args.seed)
        payload.update(trials=args.trials, seed=args.seed, counts=np.bincount(verts - 1, minlength=n).tolist())
    elif args.mode == "coin":
        if T % 2:
            raise ValidationError("coin mode needs even T")
        config = GridConfig(n, k, T // 2, rho)
        batch = coin_batch(config, T, args.trials, args.seed)
        payload.update(
            trials=args.trials,
            seed=args.seed,
            tau_equals_T=batch.tau_equals_T(),
            bookkeeping_ok=batch.bookkeeping_ok(),
            mean_sum_c0=float(batch.sum_c0.mean()),
            counts=np.bincount(batch.final_vertex - 1, minlength=n).tolist(),
            counts_at_T=np.bincount(batch.vertex_at_T - 1, minlength=n).tolist(),
        )
    else:
        if T != 2 * L:
            raise ValidationError("hitbound uses T = 2 ceil(rho n^{3/2}); omit --T")
        res = hit_bound_check(GridConfig(n, k, L, rho), args.gamma3, args.hub_margin)
        payload.update(min_scaled=res.min_scaled, argmin=res.argmin, W_size=res.W_size, V2=list(res.V2), hub_margin=res.hub_margin)
    _write_json(payload, args.out)
    return 0


def _grid(args) -> list[int]:
    if args.factor <= 1:
        raise ValidationError("--factor must exceed 1")
    out, n = [], args.nmin
    while n <= args.nmax:
        out.append(n)
        n = int(round(n * args.factor))
    return out


def cmd_scaling(args) -> int:
    if args.kpolicy == "good" and args.seeds is None and Variant.parse(args.variant) is Variant.DRIFT_CHORD:
        raise ValidationError("k policy 'good' draws k at random; pass --seeds")
    seeds = args.seeds or [0]
    records = scaling_run(args.variant, _grid(args), args.eps, args.kpolicy, seeds, args.policy, args.timing)
    fmt = args.format or ("csv" if str(args.out).endswith(".csv") else "jsonl")
    emit(records, fmt, args.out, _meta(args))
    failed = [r for r in records if r.t_mix is None]
    return 2 if failed and len(failed) == len(records) else 0


def cmd_fit(args) -> int:
    records = load(args.input)
    if args.policy:
        records = [r for r in records if r.policy == args.policy]
    fit = fit_exponent(records)
    _write_json(
        {
            "meta": _meta(args),
            "slope": fit.slope,
            "intercept": fit.intercept,
            "residual_rms": fit.residual_rms,
            "n_range": list(fit.n_range),
            "points": fit.points,
        },
        args.out,
    )
    return 0


def cmd_lower(args) -> int:
    res = lower_bound_probe(args.n_grid, args.eps_star, args.k_sample, args.seed)
    _write_json(
        {
            "meta": _meta(args),
            "eps_star": res.eps_star,
            "min_scaled": {str(n): v for n, v in res.min_scaled.items()},
            "ratio": res.ratio,
            "scaled": {str(n): {str(k): v for k, v in d.items()} for n, d in res.scaled.items()},
        },
        args.out,
    )
    return 0


def cmd_zigzag(args) -> int:
    config = GridConfig(args.n, args.k, math.ceil(args.rho * args.n**1.5), args.rho)
    res = zigzag_scan(config, args.hub_margin)
    _write_json(
        {
            "meta": _meta(args),
            "selected": res.selected,
            "threshold": res.threshold,
            "total_hits": res.total,
            "I_size": res.I_size,
            "hub_margin": res.hub_margin,
            "hits": list(res.hits),
            "r1_sizes": list(res.r1_sizes),
        },
        args.out,
    )
    return 0


def cmd_khub(args) -> int:
    res = khub_probe(args.K, args.n_grid, args.eps, (args.seed,), args.policy)
    _write_json(
        {
            "meta": _meta(args),
            "K": res.K,
            "slope": res.fit.slope,
            "predicted": res.predicted,
            "records": [{"n": r.n, "hubs": r.k, "t_mix": r.t_mix, "policy": r.policy} for r in res.records],
        },
        args.out,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = _Parser(prog="chordmix", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"chordmix {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def chain_flags(sp, need_k=False):
        sp.add_argument("--variant", default="drift-chord")
        sp.add_argument("--n", type=int, required=True)
        sp.add_argument("--k", type=int, required=need_k)
        sp.add_argument("--hubs", type=_int_list, help="comma-separated hub list for k-hub")

    sp = sub.add_parser("kernel", parents=[common], help="export a transition kernel as JSON")
    chain_flags(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_kernel)

    sp = sub.add_parser("mix", parents=[common], help="mixing time and distance curve")
    chain_flags(sp)
    sp.add_argument("--eps", type=float, default=0.25)
    sp.add_argument("--policy", default="auto", choices=["auto", "exact", "heuristic"])
    sp.add_argument("--max-iter", type=int)
    sp.add_argument("--out", help="CSV file for the d(t) curve")
    sp.set_defaults(func=cmd_mix)

    sp = sub.add_parser("exitprobs", parents=[common], help="exit points with closed-form and oracle probabilities")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--L", type=int, required=True)
    sp.add_argument("--start-dir", default=B, choices=[A, B])
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_exitprobs)

    sp = sub.add_parser("gaps", parents=[common], help="good hub positions")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--gamma3", type=float, default=GAMMA3_DEFAULT)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gaps)

    sp = sub.add_parser("mc", parents=[common], help="trajectory sampling, coin procedure, hit bound")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--T", type=int)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mode", default="trajectory", choices=["trajectory", "coin", "hitbound"])
    sp.add_argument("--gamma3", type=float, default=GAMMA3_DEFAULT)
    sp.add_argument("--hub-margin", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("scaling", parents=[common], help="mixing times over a geometric n grid")
    sp.add_argument("--variant", default="drift-chord")
    sp.add_argument("--nmin", type=int, required=True)
    sp.add_argument("--nmax", type=int, required=True)
    sp.add_argument("--factor", type=float, default=2.0)
    sp.add_argument("--eps", type=float, default=0.25)
    sp.add_argument("--kpolicy", default="good")
    sp.add_argument("--seeds", type=_int_list)
    sp.add_argument("--policy", default="auto", choices=["auto", "exact", "heuristic"])
    sp.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical output)")
    sp.add_argument("--format", choices=["csv", "jsonl"])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_scaling)

    sp = sub.add_parser("fit", parents=[common], help="fit the log-log slope of a scaling run")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--policy", help="keep only records with this policy tag")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("lower", parents=[common], help="scaled mixing times over sampled k")
    sp.add_argument("--n-grid", type=_int_list, required=True)
    sp.add_argument("--eps-star", type=float, default=0.05)
    sp.add_argument("--k-sample", type=int, default=20)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_lower)

    sp = sub.add_parser("zigzag", parents=[common], help="hub-avoiding hits over time shifts")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--hub-margin", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_zigzag)

    sp = sub.add_parser("khub", parents=[common], help="mixing exponent with K random hubs")
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("--n-grid", type=_int_list, required=True)
    sp.add_argument("--eps", type=float, default=0.25)
    sp.add_argument("--policy", default="auto", choices=["auto", "exact", "heuristic"])
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_khub)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, ValueError, argparse.ArgumentTypeError) as exc:
        print(f"chordmix {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"chordmix {args.command}: cannot write output: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure code
        print(f"chordmix {args.command}: failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
