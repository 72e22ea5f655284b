"""Command-line entry point: ``multigroup <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import fixtures, harness
from .core import InstanceError


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", default=None,
                   help=f"fixture name ({', '.join(harness.INSTANCE_NAMES)}) or an instance JSON file")
    p.add_argument("--dist", default=None, help="distribution JSON (with --hyp and --groups)")
    p.add_argument("--hyp", default=None, help="hypothesis table JSON")
    p.add_argument("--groups", default=None, help="group table JSON")
    p.add_argument("--catch-all", action="store_true", help="experts: add the all-ones group")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--schedule", choices=("small", "finite", "pseudodim"), default="finite")
    p.add_argument("--d", type=float, default=None, help="pseudo-dimension for the pseudodim schedule")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--min-frequency", type=float, default=None,
                   help="fail unless this fraction of trials satisfies every bound")
    p.add_argument("--out", default=None, help="directory for report.json and report.csv")


def _config(args, algorithm) -> harness.ExperimentConfig:
    if args.instance is None and args.dist is None:
        args.instance = "desk8"
    return harness.ExperimentConfig(
        algorithm=algorithm, instance=args.instance, dist=args.dist, hyp=args.hyp, groups=args.groups,
        catch_all=args.catch_all, n=args.n, seed=args.seed, delta=args.delta,
        gamma=args.gamma, schedule=args.schedule, d=args.d, trials=args.trials, out=args.out,
        min_frequency=args.min_frequency,
    )


def _print_report(rep: harness.Report) -> None:
    print(f"instance {rep.instance}  trials {rep.summary['n_trials']}  refused {rep.summary['n_refused']}")
    first = next((t for t in rep.trials if "rows" in t), None)
    if first is not None:
        print(f"{'group':>10} {'count':>8} {'emp':>8} {'pop':>8} {'bench':>8} {'excess':>9} {'bound':>9}  ok")
        for r in first["rows"]:
            bound = "-" if r["bound"] is None else f"{r['bound']:9.4f}"
            print(f"{r['group']:>10} {r['count']:8.0f} {r['emp_risk']:8.4f} {r['pop_risk']:8.4f} "
                  f"{r['benchmark']:8.4f} {r['excess']:9.4f} {bound:>9}  {r['satisfied']}")
    else:
        print(rep.trials[0].get("refused", ""))
    freq = rep.summary["satisfaction_frequency"]
    if freq is not None:
        print(f"bound satisfied in {freq:.3f} of trials")
    for name, ok in rep.summary["assertions"].items():
        print(f"assertion {name}: {'pass' if ok else 'FAIL'}")


def cmd_algorithm(args) -> int:
    rep = harness.run_experiment(_config(args, args.command))
    _print_report(rep)
    return 0 if rep.passed else 1


def cmd_run(args) -> int:
    cfg = harness.ExperimentConfig.load(args.config)
    rep = harness.run_experiment(cfg)
    _print_report(rep)
    return 0 if rep.passed else 1


def cmd_compare(args) -> int:
    table = harness.compare_algorithms(_config(args, "prepend"))
    if args.out:
        harness.write_comparison(table, args.out)
    cols = [k for k in table[0] if k != "notes"]
    print(" ".join(f"{c:>17}" for c in cols))
    for row in table:
        print(" ".join(f"{v:17.4f}" if isinstance(v, float) else f"{str(v):>17}" for v in (row[c] for c in cols)))
    for note in table[0].get("notes", []):
        print(note)
    return 0


def cmd_bounds(args) -> int:
    vals = harness.bound_values(
        args.hypotheses, args.groups, args.delta, args.n, args.count,
        gamma=args.gamma, d=args.d, eps=args.eps, emp_risk=args.emp_risk,
    )
    for k, v in vals.items():
        print(f"{k:32s} {'-' if v is None else format(v, '.6g')}")
    return 0


def _emit(name: str, out: Path, seed: int, eps: Fraction) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    if name == "prop45":
        insts = list(fixtures.build_prop45_scenarios())
    elif name == "prop52":
        insts = [fixtures.build_prop52_instance()]
    elif name == "propC2":
        insts = [fixtures.build_propC2_instance(eps)]
    else:
        o = fixtures.generate_overlap_instance(seed)
        insts = [fixtures.Instance(f"overlap-seed{seed}", o.dist, o.H, o.G, o.loss)]
    paths = []
    for inst in insts:
        obj = fixtures.Instance(inst.name, inst.dist, inst.H, inst.G, inst.loss).to_json()
        if isinstance(inst, fixtures.ExactInstance):
            obj["expected_risk"] = [[str(v) for v in row] for row in inst.risk_table]
        path = out / f"{inst.name.replace('/', '_')}.json"
        path.write_text(json.dumps(obj, indent=1))
        paths.append(path)
    return paths


def _verify(name: str, seed: int, eps_values) -> list[tuple[str, bool]]:
    checks = []
    if name == "prop45":
        s1, s2 = fixtures.build_prop45_scenarios()
        checks.append(("risk tables reproduce", s1.table_matches() and s2.table_matches()))
        rep = fixtures.verify_prop45()
        checks.append((f"all {len(rep.verdicts)} canonical lists fail a scenario by >= 1/8", rep.ok))
    elif name == "prop52":
        inst = fixtures.build_prop52_instance()
        checks.append(("risk table reproduces", inst.table_matches()))
        rep = fixtures.verify_prop52()
        checks.append((f"all {len(rep.verdicts)} assignments exceed 1/4 on a witness group", rep.ok))
        checks.append(("witness values 3/10 and 4/10 attained",
                       {Fraction(3, 10), Fraction(4, 10)} <= rep.witness_values_attained))
    elif name == "propC2":
        for eps in eps_values:
            r = fixtures.verify_propC2(eps)
            checks.append((f"eps={eps}: violation 0, errors eps and 2 eps", r.ok))
    else:
        a = fixtures.generate_overlap_instance(seed)
        b = fixtures.generate_overlap_instance(seed)
        checks.append((f"gap {a.gap:.4f} > 0.05", a.gap > 0.05))
        checks.append(("same seed gives the same instance", a.dist.to_json() == b.dist.to_json()))
    return checks


def cmd_fixtures(args) -> int:
    if args.action == "emit":
        for p in _emit(args.name, Path(args.out), args.seed, Fraction(args.eps)):
            print(p)
        return 0
    eps_values = [Fraction(e) for e in args.eps.split(",")] if args.name == "propC2" else []
    failed = 0
    for label, ok in _verify(args.name, args.seed, eps_values):
        print(f"{'pass' if ok else 'FAIL'}  {args.name}: {label}")
        failed += not ok
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="multigroup", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for alg in harness.ALGORITHMS:
        p = sub.add_parser(alg, help=f"run the {alg} learner on sampled data and score it per group")
        _add_run_args(p)
        p.set_defaults(func=cmd_algorithm)
    p = sub.add_parser("compare", help="all learners on one sample, side by side")
    _add_run_args(p)
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("bounds", help="print guarantee values for given parameters")
    p.add_argument("--hypotheses", type=int, required=True, help="|H|")
    p.add_argument("--groups", type=int, required=True, help="|G|")
    p.add_argument("--count", type=float, required=True, help="sample count in the group")
    p.add_argument("--n", type=int, default=None, help="sample size (defaults to count)")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--d", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--emp-risk", type=float, default=None)
    p.set_defaults(func=cmd_bounds)
    p = sub.add_parser("fixtures", help="emit or verify the exact constructions")
    p.add_argument("action", choices=("emit", "verify"))
    p.add_argument("--name", choices=fixtures.FIXTURE_NAMES, required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", default="1/10,1/4,2/5",
                   help="rational eps for propC2 (comma-separated for verify)")
    p.set_defaults(func=cmd_fixtures)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "bounds" and args.n is None:
        args.n = int(args.count)
    if getattr(args, "action", None) == "emit" and "," in args.eps:
        args.eps = args.eps.split(",")[0]
    try:
        return args.func(args)
    except (harness.ConfigError, InstanceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
