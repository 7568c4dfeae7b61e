"""``froglab`` command line.

Exit codes: 0 success, 1 usage or input error, 2 invariant or check
failure, 3 budget abort.  FROGLAB_THREADS caps the worker count.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .. import __version__, kernels
from ..amenability import DEFAULT_SUBSET_BUDGET, enumerate_edge_expansion, write_expansion_csv
from ..tree import BudgetExceeded, TreeError, build_tree, parse_spec, read_tree, write_tree
from ..walks import lerw_xval
from .config import ConfigError, load_config
from .experiment import run_experiment
from .invariants import FAULTS, MODULES, run_invariant_suite
from .report import sweep_report

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _load_tree(text: str, budget: int | None = None):
    if Path(text).is_file():
        return read_tree(text)
    if "(" not in text:
        raise UsageError(f"{text!r} is neither a tree file nor a spec like regular(d=3)@8")
    sp = parse_spec(text)
    return build_tree(sp) if budget is None else build_tree(sp, budget)


def cmd_gen_tree(a) -> int:
    tree = _load_tree(a.spec, a.budget)
    write_tree(tree, a.output)
    print(f"{tree.tag}: {tree.n} vertices, depth {tree.max_depth} -> {a.output}")
    return EXIT_OK


def _print_cells(report) -> None:
    for c in report.cells:
        s = c.summary()
        print(f"lambda={c.lam:g} depth={c.depth} horizon={c.horizon}: "
              f"mean returns {s['mean_returns']:.4g} (se {s['se_returns']:.2g}), "
              f"trials {s['trials']}, status {c.status}" + (f" ({c.error})" if c.error else ""))


def _status(report) -> int:
    if report.budget_aborted:
        return EXIT_BUDGET
    if report.failed:
        return EXIT_USAGE
    return EXIT_OK


def cmd_simulate(a) -> int:
    cfg = load_config(a.config)
    report = run_experiment(cfg, workers=a.workers, event_log=a.event_log)
    _print_cells(report)
    print(f"outputs in {cfg.outputs}: {', '.join(report.files)}")
    return _status(report)


def cmd_sweep(a) -> int:
    if a.config:
        cfg = load_config(a.config)
        report = run_experiment(cfg, workers=a.workers)
        _print_cells(report)
        for v in report.verdicts:
            print(f"lambda={v.lam:g} horizon={v.horizon}: slope {v.slope:.4g} "
                  f"[{v.ci_low:.4g}, {v.ci_high:.4g}] -> {v.verdict}")
        print(f"rule: {report.verdicts[0].rule}" if report.verdicts else "no verdicts")
        root = Path(cfg.outputs)
        code = _status(report)
    else:
        root = Path(a.dir)
        code = EXIT_OK
    res = sweep_report(root)
    print(f"merged {len(res.runs)} run(s), {res.cells} cells, {res.rows} rows -> "
          f"{root / 'sweep'}")
    return code


def cmd_expansion(a) -> int:
    tree = _load_tree(a.tree)
    rep = enumerate_edge_expansion(tree, a.k, L=a.L, method=a.method, budget=a.budget,
                                   workers=a.workers)
    print(f"{tree.tag}: phi(k<={a.k}) = {rep.phi_enumerated:.6g} = {rep.boundary}/{rep.volume}, "
          f"certificate size {len(rep.certificate)}, method {rep.method}")
    print(f"certificate: {' '.join(map(str, rep.certificate))}")
    if rep.L is not None:
        print(f"analytic lower bound 1/(9L^2) = {rep.phi_lower_analytic} "
              f"({'holds' if rep.satisfies_analytic else 'VIOLATED'})")
    if a.output:
        write_expansion_csv([rep], a.output)
    if not rep.complete:
        print(f"budget of {a.budget} subsets reached after {rep.subsets_examined}; "
              "the value above is only an upper bound", file=sys.stderr)
        return EXIT_BUDGET
    if rep.satisfies_analytic is False:
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_check(a) -> int:
    scope = a.scope.split(",") if a.scope else None
    faults = a.inject.split(",") if a.inject else ()
    try:
        results = run_invariant_suite(scope, seed=a.seed, faults=faults)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for r in results:
        line = f"{'PASS' if r.passed else 'FAIL'} {r.module}: {r.name} ({r.detail})"
        if not r.passed and r.counterexample:
            line += f"\n     counterexample: {r.counterexample}"
        print(line)
    if a.json:
        Path(a.json).write_text(json.dumps([r.as_dict() for r in results], indent=1) + "\n")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} invariants pass")
    return EXIT_INVARIANT if failed else EXIT_OK


def cmd_lerw_xval(a) -> int:
    tree = _load_tree(a.tree)
    if a.start is None:
        if tree.max_depth < 3:
            raise UsageError("tree too shallow for the default start on level 2")
        start = tree.level(2).start
    else:
        start = tree.index_of(a.start)
    rep = lerw_xval(tree, start, a.steps, a.samples, a.seed)
    print(f"{tree.tag}: start {int(tree.ids[start])}, {a.steps}-step prefixes, {a.samples} samples each")
    print(f"TV(markov, erased) = {rep.tv_between:.5f}; null band (mean + 3 sd) = {rep.band:.5f}")
    print(f"TV to exact law: markov {rep.tv_markov_exact:.5f}, erased {rep.tv_erased_exact:.5f}")
    print("PASS" if rep.passed else "FAIL")
    return EXIT_OK if rep.passed else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="froglab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"froglab {__version__} ({kernels.BACKEND} kernels)")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-tree", help="build a tree from a spec and write it to a file")
    g.add_argument("spec", help="e.g. regular(d=3)@10 or random_tw(delta=3,Delta=6,r=3,seed=1)@8")
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--budget", type=int, default=None, help="vertex budget")
    g.set_defaults(fn=cmd_gen_tree)

    s = sub.add_parser("simulate", help="run an experiment config")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("--event-log", action="store_true", help="write binary event logs per cell")
    s.add_argument("-j", "--workers", type=int, default=None)
    s.set_defaults(fn=cmd_simulate)

    w = sub.add_parser("sweep", help="run a config and merge results, or merge an existing directory")
    grp = w.add_mutually_exclusive_group(required=True)
    grp.add_argument("-c", "--config")
    grp.add_argument("--dir")
    w.add_argument("-j", "--workers", type=int, default=None)
    w.set_defaults(fn=cmd_sweep)

    e = sub.add_parser("expansion", help="edge expansion over connected sets of size <= k")
    e.add_argument("tree", help="tree file or spec")
    e.add_argument("-k", type=int, required=True)
    e.add_argument("--L", type=int, default=None, help="compare with 1/(9 L^2)")
    e.add_argument("--method", choices=("dp", "enumerate"), default="dp")
    e.add_argument("--budget", type=int, default=DEFAULT_SUBSET_BUDGET)
    e.add_argument("-o", "--output", help="CSV report")
    e.add_argument("-j", "--workers", type=int, default=None)
    e.set_defaults(fn=cmd_expansion)

    c = sub.add_parser("check", help="run the invariant suite")
    c.add_argument("--scope", help=f"comma-separated subset of {','.join(MODULES)}")
    c.add_argument("--inject", help=f"comma-separated faults: {','.join(FAULTS)}")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--json", help="write machine-readable results here")
    c.set_defaults(fn=cmd_check)

    x = sub.add_parser("lerw-xval", help="Markov-form vs erased-walk sampler cross-check")
    x.add_argument("tree", help="tree file or spec")
    x.add_argument("--start", type=int, default=None, help="start vertex id (default: first on level 2)")
    x.add_argument("--steps", type=int, default=4)
    x.add_argument("--samples", type=int, default=10**6)
    x.add_argument("--seed", type=int, default=0)
    x.set_defaults(fn=cmd_lerw_xval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return a.fn(a)
    except BudgetExceeded as exc:
        print(f"froglab: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (UsageError, ConfigError, TreeError, FileNotFoundError, KeyError) as exc:
        print(f"froglab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"froglab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
