"""Command line: ``synth``, ``solve``, ``verify`` and ``report``.

Exit codes: 0 success, 1 usage or I/O error, 2 solver did not converge
(artifacts are still written), 3 verification failed.
"""
import argparse
import csv
import json
import math
import os
import sys
import warnings

import numpy as np
from threadpoolctl import threadpool_limits

from . import solver_al, solver_pf
from .energy import brute_force, compare, energy, labeling_energy
from .exceptions import NotConverged, ParseError, ShapeComplexError
from .fields import write_fld
from .hierarchy import descendant_leaves
from .phantoms import NAMES, synth
from .problem import load_problem, save_problem
from .star import check_star_convex

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_VERIFY = 0, 1, 2, 3
TRACE_HEADER = ["iter", "energy", "max_G", "max_du"]
REPORT_HEADER = ["run_id", "iter", "metric", "value"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="problem JSON")
    p.add_argument("--solver", choices=("al", "pf"), default="al")
    p.add_argument("--tau", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--threads", type=int, default=1, help="cap on BLAS/OpenMP threads")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (file for report)")


def build_parser():
    parser = _Parser(prog="shapecomplex",
                     description="Hierarchical max-flow segmentation with star-convexity shape complexes.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic phantom problem")
    p.add_argument("name", choices=NAMES)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.5, help="uniform noise amplitude")
    p.add_argument("--smoothness", type=float, default=None)
    _common(p, config_required=False)

    p = sub.add_parser("solve", help="run a solver and write labelings, trace and summary")
    _common(p)

    p = sub.add_parser("verify", help="compare a solver run with the exhaustive oracle")
    p.add_argument("--threshold", type=float, default=0.05, help="allowed relative energy gap")
    _common(p)

    p = sub.add_parser("report", help="merge trace CSVs into one long-format CSV")
    p.add_argument("traces", nargs="+")
    p.add_argument("--run-id", action="append", help="one per trace, default from the path")
    p.add_argument("--out", help="output CSV (stdout when omitted)")
    return parser


def _config_overrides(args, problem):
    try:
        cfg = problem.config.replace(c=args.c, tau=args.tau, tol=args.tol, max_iters=args.max_iters)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return problem.with_config(cfg)


def _json_value(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# synth

def cmd_synth(args):
    if not args.out:
        raise UsageError("synth needs --out DIR")
    kwargs = {} if args.smoothness is None else {"smoothness": args.smoothness}
    ph = synth(args.name, args.size, args.noise, args.seed, **kwargs)
    problem = ph.problem
    if any(v is not None for v in (args.c, args.tau, args.tol, args.max_iters)):
        problem = _config_overrides(args, problem)
    path = save_problem(problem, args.out)
    write_fld(os.path.join(args.out, "truth.fld"), ph.ground_truth.astype(float))
    write_fld(os.path.join(args.out, "image.fld"), ph.image)
    print(path)
    return EXIT_OK


# solve

def _run(problem, solver):
    run = solver_al.run if solver == "al" else solver_pf.pf_run
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConverged)
        return run(problem)


def final_leaves(result, problem, solver):
    """Leaf labelings as reported: normalized for the augmented-Lagrangian solver."""
    if solver == "al":
        return solver_al.normalized_leaves(result.state.u, problem.hierarchy)
    return result.u


def summarize(result, problem, solver):
    """Summary of a run. Every value except ``wall_time`` is deterministic."""
    h = problem.hierarchy
    u = final_leaves(result, problem, solver)
    report = energy(u, problem)
    raw = energy(result.u, problem)
    if solver == "al":
        max_G = solver_al.max_residual(result.state, problem)
    else:
        max_G = float("nan")
    stars = {}
    for L, e in sorted(problem.directions.items()):
        if e is None:
            continue
        mask = np.isin(result.labeling, sorted(descendant_leaves(h, L))).astype(float)
        stars[h.names[L]] = check_star_convex(mask, e, problem.grid.spacing).n_violations
    cfg = problem.config
    return {
        "solver": solver,
        "config": {"c": cfg.c, "tau": cfg.tau, "tol": cfg.tol, "max_iters": cfg.max_iters,
                   "init": cfg.init},
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "energy": report.total,
        "data_term": report.data_term,
        "smoothness_term": report.smoothness_term,
        "hard_energy": labeling_energy(result.labeling, problem),
        "max_G": _json_value(max_G),
        "max_du": _json_value(float(result.state.max_du)),
        "leaf_sum_violation": raw.leaf_sum_violation,
        "min_u": float(np.min(result.u)),
        "capacity_violation": solver_al.capacity_violation(result.state.q, problem),
        "star_residual": report.star_violation,
        "star_violations": stars,
        "wall_time": result.wall_time,
    }


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in trace:
            w.writerow([r.iteration, repr(float(r.energy)), repr(float(r.max_G)), repr(float(r.max_du))])


def write_artifacts(result, problem, solver, out):
    os.makedirs(out, exist_ok=True)
    h = problem.hierarchy
    for L, u in zip(h.leaves, result.u):
        write_fld(os.path.join(out, f"u_{h.names[L]}.fld"), u)
    write_fld(os.path.join(out, "labels.fld"), result.labeling.astype(float))
    write_trace(result.trace, os.path.join(out, "trace.csv"))
    summary = summarize(result, problem, solver)
    _dump(summary, os.path.join(out, "summary.json"))
    return summary


def cmd_solve(args):
    if not args.out:
        raise UsageError("solve needs --out DIR")
    problem = _config_overrides(args, load_problem(args.config))
    result = _run(problem, args.solver)
    summary = write_artifacts(result, problem, args.solver, args.out)
    print(f"{args.solver}: {summary['iterations']} iterations, energy {summary['energy']:.6g}, "
          f"converged={summary['converged']}")
    if not result.converged:
        print(f"solver did not converge within {problem.config.max_iters} iterations",
              file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# verify

def cmd_verify(args):
    problem = _config_overrides(args, load_problem(args.config))
    result = _run(problem, args.solver)
    oracle = brute_force(problem)
    verdict = compare(result.labeling, oracle, problem, threshold=args.threshold)
    doc = verdict.as_json()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _dump(doc, os.path.join(args.out, "verdict.json"))
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK if verdict.passed else EXIT_VERIFY


# report

def read_trace(path):
    """Rows of a trace CSV as ``(iter, {metric: value})``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty trace file")
    if rows[0] != TRACE_HEADER:
        raise ParseError(f"{path}: expected header {','.join(TRACE_HEADER)}")
    if len(rows) == 1:
        raise ParseError(f"{path}: trace has no records")
    out = []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(TRACE_HEADER):
            raise ParseError(f"{path}:{n}: expected {len(TRACE_HEADER)} columns")
        try:
            out.append((int(row[0]), {k: float(v) for k, v in zip(TRACE_HEADER[1:], row[1:])}))
        except ValueError as exc:
            raise ParseError(f"{path}:{n}: {exc}") from None
    return out


def _default_run_id(path):
    path = os.path.abspath(path)
    stem = os.path.splitext(os.path.basename(path))[0]
    if stem == "trace":
        return os.path.basename(os.path.dirname(path)) or stem
    return stem


def merge_traces(paths, run_ids=None):
    if run_ids is None:
        run_ids = [_default_run_id(p) for p in paths]
    if len(run_ids) != len(paths):
        raise UsageError("give one --run-id per trace")
    rows = []
    for path, rid in zip(paths, run_ids):
        for it, values in read_trace(path):
            for metric in TRACE_HEADER[1:]:
                rows.append([rid, it, metric, repr(values[metric])])
    return rows


def cmd_report(args):
    rows = merge_traces(args.traces, args.run_id)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "solve": cmd_solve, "verify": cmd_verify, "report": cmd_report}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        threads = getattr(args, "threads", 1)
        if threads < 1:
            raise UsageError("--threads must be >= 1")
        with threadpool_limits(limits=threads):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ShapeComplexError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
