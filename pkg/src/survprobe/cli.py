"""Command line interface.

Subcommands:
  run              run an experiment sweep from a TOML config
  synth            generate a synthetic survival CSV
  verify-coverage  randomized checks of the budgeted-coverage machinery
  report           re-emit a saved results.json in another format
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .data import synth_generate
from .errors import ConfigurationError
from .experiment import (
    ExperimentConfig,
    ResultTable,
    emit_report,
    run_experiment,
)
from .selection import (
    CoverageInstance,
    brute_force_optimal,
    greedy_enumerated,
    greedy_ratio,
)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    for key in ("budgets", "methods", "seeds"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return ExperimentConfig(**raw)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    audit = None
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        audit = open(f"{args.out}/probes.jsonl", "w")

    def progress(cell):
        status = cell.error or (
            f"mae_po={cell.report.mae_po:.4f} spent={cell.spent:g}")
        print(f"[{cell.seed}] budget={cell.budget:g} "
              f"{cell.method}: {status}", flush=True)

    try:
        table = run_experiment(cfg, audit_log=audit, progress=progress)
    finally:
        if audit:
            audit.close()
    if args.out:
        for fmt in ("csv", "json", "markdown"):
            path = emit_report(table, fmt, args.out)
            print(f"wrote {path}")
    else:
        from .experiment import to_markdown
        print(to_markdown(table))
    if not table.complete:
        failed = sum(1 for c in table.cells if c.error)
        print(f"{failed} cell(s) failed", file=sys.stderr)
        return 1
    return 0


def _cmd_synth(args) -> int:
    ds = synth_generate(args.n, args.dim, args.seed,
                        censor_rate=args.censor_rate)
    ds.to_csv(args.out)
    frac = 1.0 - ds.delta_true.mean()
    print(f"wrote {args.out}: {len(ds)} instances, "
          f"{frac:.1%} naturally censored")
    return 0


def _random_coverage(rng) -> CoverageInstance:
    n_elements = int(rng.integers(3, 11))
    n_sets = int(rng.integers(2, 13))
    weights = {e: float(rng.uniform(0.1, 5.0)) for e in range(n_elements)}
    sets = []
    for _ in range(n_sets):
        size = int(rng.integers(1, n_elements + 1))
        sets.append(set(rng.choice(n_elements, size=size, replace=False)
                        .tolist()))
    costs = rng.uniform(0.2, 2.0, size=n_sets).tolist()
    budget = float(rng.uniform(0.5, 0.9 * sum(costs)))
    return CoverageInstance(weights, sets, costs, budget)


def _cmd_verify_coverage(args) -> int:
    rng = np.random.default_rng(args.seed)
    bound = 1.0 - 1.0 / np.e
    failures = 0
    for trial in range(args.trials):
        inst = _random_coverage(rng)
        opt = brute_force_optimal(inst).value
        enum_w = greedy_enumerated(inst, z=3).value
        ratio_res = greedy_ratio(range(len(inst.sets)), inst.budget,
                                 inst.weight_of, inst.costs)
        ratio_w = inst.weight_of(ratio_res.batch)
        ok_enum = enum_w >= bound * opt - 1e-9
        ok_ratio = ratio_w >= 0.5 * bound * opt - 1e-9
        if not (ok_enum and ok_ratio):
            failures += 1
            print(f"trial {trial}: VIOLATION opt={opt:.4f} "
                  f"enum={enum_w:.4f} ratio={ratio_w:.4f}")
    print(f"{args.trials} trials, {failures} bound violations")
    return 0 if failures == 0 else 1


def _cmd_report(args) -> int:
    with open(args.results) as fh:
        table = ResultTable.from_json(fh.read())
    path = emit_report(table, args.format, args.out)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survprobe",
        description="Budgeted active learning over censored survival data")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment sweep")
    p_run.add_argument("--config", required=True, help="TOML config path")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_synth = sub.add_parser("synth", help="generate a synthetic CSV")
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--dim", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--censor-rate", type=float, default=0.3)
    p_synth.add_argument("--out", default="synthetic.csv")
    p_synth.set_defaults(func=_cmd_synth)

    p_ver = sub.add_parser("verify-coverage",
                           help="randomized coverage-bound checks")
    p_ver.add_argument("--trials", type=int, default=100)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.set_defaults(func=_cmd_verify_coverage)

    p_rep = sub.add_parser("report", help="re-emit saved results")
    p_rep.add_argument("--results", required=True, help="results.json path")
    p_rep.add_argument("--format", default="markdown",
                       choices=("csv", "json", "markdown"))
    p_rep.add_argument("--out", default=".")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
