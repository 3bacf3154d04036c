"""Command line entry point: ``sim run | preset | verify``."""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import harness, verification
from ._jit import DEFAULT_BACKEND
from .algorithms import ConfigError, run
from .mixing import alpha_induced, example1_alpha, metropolis
from .objectives import generate_quadratic


VERIFY_CHECKS = ("theorem1", "lemma1", "mixing", "gt-form")


def _header(rec) -> str:
    m = rec.meta
    return (f"# {m['algorithm']:<6} {m['topology']:<10} zeta^2={m['zeta_sq']:g} sigma^2={m['sigma_sq']:g} "
            f"rep={m['rep']} p={m['p']:.4g} b={m['b']:.4g} b'={m['b_prime']:.4g} "
            f"eta'={m['eta_prime']:.4g} final={rec.final():.4e}")


def _execute(cfg, args) -> int:
    records = harness.run_experiment(cfg, jobs=args.jobs, backend=args.backend)
    for rec in records:
        print(_header(rec))
    print(harness.format_summary(harness.summarize(records)))
    if cfg.out:
        print(f"wrote {len(records)} records to {cfg.out}")
    return 0


def cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    cfg = harness.with_overrides(cfg, out=args.out, seed=args.seed, repetitions=args.reps)
    return _execute(cfg, args)


def cmd_preset(args) -> int:
    cfg = harness.preset(args.name, seed=args.seed or 0, repetitions=args.reps or 1,
                         rounds=args.rounds, out=args.out)
    return _execute(cfg, args)


def _reference_problem(seed, zeta_sq=10.0, sigma_sq=10.0):
    return generate_quadratic(50, 25, math.sqrt(zeta_sq), math.sqrt(sigma_sq), seed)


def _write_series(path, cols: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(cols))
        for row in zip(*cols.values()):
            wr.writerow([repr(float(v)) for v in row])


def cmd_verify(args) -> int:
    seed = args.seed or 0
    out = Path(args.out) if args.out else None
    rows = []
    tops = verification.regular_topologies(25)
    if args.check == "mixing":
        for r in verification.check_mixing(tops):
            rows.append((f"{r['topology']} eta={r['eta']:g}", r["max_violation"], r["passed"]))
    else:
        problem = _reference_problem(seed)
        for name, g in tops.items():
            a = example1_alpha(g, 1e3)
            if args.check == "theorem1":
                rep = verification.check_theorem1(problem, g, a, 0.5, args.rounds, seed, backend=args.backend)
                rows.append((name, rep.max_x_deviation, rep.passed))
                series = {"round": np.arange(rep.rounds + 1), "max_x_deviation": rep.per_round_deviation}
            elif args.check == "gt-form":
                rep = verification.check_gt_form(problem, g, a, 0.5, args.rounds, seed, backend=args.backend)
                rows.append((name, rep.max_residual, rep.passed))
                series = {"round": np.arange(rep.rounds), "residual": rep.per_round_residual,
                          "t_norm": rep.t_norm}
            else:
                w, eta_p = alpha_induced(g, a, 0.5)
                cases = {"ecl-weights": {"w": w, "eta_prime": eta_p, "alpha": a},
                         "metropolis": {"w": metropolis(g).w, "eta_prime": 1e-3}}
                series = {}
                for label, params in cases.items():
                    rec = run("gecl", problem, g, params, args.rounds, seed, backend=args.backend)
                    rep = verification.check_lemma1(rec)
                    rows.append((f"{name} {label}", max(rep.max_csum_norm, rep.max_avg_residual), rep.passed))
                    series["round"] = rec.rows["round"]
                    series[f"{label}_csum_norm"] = rec.rows["csum_norm"]
                    series[f"{label}_avg_residual"] = rec.rows["avg_residual"]
            if out:
                _write_series(out / f"verify_{args.check}_{name.replace(':', '-')}.csv", series)
    print(f"{'case':<22} {'max defect':>12}  result")
    for name, defect, ok in rows:
        print(f"{name:<22} {defect:>12.3e}  {'PASS' if ok else 'FAIL'}")
    return 0 if all(ok for _, _, ok in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sim", description="Decentralized SGD / ECL simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, rounds=True):
        p.add_argument("--out", help="output directory for CSV records")
        p.add_argument("--seed", type=int, help="master seed (u64)")
        p.add_argument("--reps", type=int, help="repetitions per sweep point")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--backend", choices=("numba", "numpy"), default=DEFAULT_BACKEND)
        if rounds:
            p.add_argument("--rounds", type=int, default=10_000)

    p = sub.add_parser("run", help="run a config file")
    p.add_argument("--config", required=True)
    common(p, rounds=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="reproduce a figure's parameter grid")
    p.add_argument("name", choices=sorted(harness.PRESETS))
    common(p)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("verify", help="machine-check a structural identity")
    p.add_argument("check", choices=VERIFY_CHECKS)
    common(p)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
