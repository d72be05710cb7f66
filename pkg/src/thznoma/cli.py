"""Command line entry point: ``thznoma <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .baselines import falpha_sweep
from .experiment import ExperimentSpec, emit_outputs, preset, run_experiment

TABLE1_REFERENCE = {1: 2.2805, 2: 4.04997, 4: 5.7922, 6: 6.9129, 8: 7.8640}
TABLE1_REFERENCE_200 = {1: 2.2791, 2: 3.8855, 4: 5.7205, 6: 6.8343, 8: 7.4128}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trials", type=int, help="trials per sweep point")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--parallel", type=int, help="worker processes")
    p.add_argument("--solvers", help="comma separated, e.g. bb:200,sca2,greedy")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thznoma", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment described by a JSON spec")
    run.add_argument("spec")
    _common(run)
    for name, text in [("table1", "BB with and without the iteration cap over M"),
                       ("fig1", "sum rate against the number of secondary users"),
                       ("fig2", "convergence traces of BB and SCA-II"),
                       ("fig3", "sum rate against the number of primary users"),
                       ("fig4", "sum rate against the number of antennas"),
                       ("fig5", "sum rate against the codebook size")]:
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--rs", type=float, help="secondary deployment square edge (m)")
        p.add_argument("--rbar", type=float, help="primary rate target (BPCU)")
    fa = sub.add_parser("falpha", help="two-user power-split property sweep")
    fa.add_argument("--out", help="output directory")
    fa.add_argument("--n-alpha", type=int, default=10001)
    return parser


def _overrides(args) -> dict:
    kw = {}
    for key in ("trials", "seed", "out", "parallel"):
        v = getattr(args, key, None)
        if v is not None:
            kw[key] = v
    if getattr(args, "solvers", None):
        kw["solvers"] = [s.strip() for s in args.solvers.split(",") if s.strip()]
    return kw


def _report(result) -> None:
    print(f"{'sweep':>8} {'solver':>10} {'mean':>9} {'se':>8} {'iters':>9}")
    for s in result.summary:
        print(f"{s.sweep!s:>8} {s.solver:>10} {s.mean:9.4f} {s.se:8.4f} {s.mean_iterations:9.1f}")


def _table1_report(result) -> None:
    print("\nM    reference(cap)  measured(cap)  reference(200)  measured(200)")
    for m in result.spec.sweep_values:
        cap = _maybe_mean(result, m, "bb:cap")
        lim = _maybe_mean(result, m, "bb:200")
        print(f"{m:<4} {TABLE1_REFERENCE.get(m, float('nan')):14.4f} {cap:14.4f} "
              f"{TABLE1_REFERENCE_200.get(m, float('nan')):15.4f} {lim:14.4f}")


def _maybe_mean(result, sweep, solver) -> float:
    try:
        return result.mean(sweep, solver)
    except StopIteration:
        return float("nan")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "falpha":
        rep = falpha_sweep(n_alpha=args.n_alpha)
        out = Path(args.out or "results/falpha")
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "falpha.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "beta", "argmax_alpha", "numerator", "slope_at_one"])
            for row in rep.rows():
                w.writerow([repr(v) for v in row])
        print(f"alpha = 1 maximises on every grid point: {rep.holds}")
        return 0 if rep.holds else 1
    try:
        if args.command == "run":
            spec = ExperimentSpec.from_json(args.spec)
            for k, v in _overrides(args).items():
                setattr(spec, k, v)
            spec.validate()
        else:
            kw = _overrides(args)
            kw.setdefault("out", f"results/{args.command}")
            spec = preset(args.command, r_S=args.rs, R_bar=args.rbar, **kw)
    except (ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = run_experiment(spec)
    files = emit_outputs(result)
    _report(result)
    if args.command == "table1":
        _table1_report(result)
    print(f"\nwrote {files['trials'].parent}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
