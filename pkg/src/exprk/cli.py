"""Command-line harness: condition audits, convergence studies, benchmarks.

Subcommands
-----------
check      verify a scheme's order conditions, CSV residual report
converge   fixed-step convergence study on a benchmark problem
integrate  single integration run, one CSV row
bench      sequential vs concurrent timing (outputs must match bitwise)
trees      list the condition trees up to a given order

Exit codes: 0 on success, 1 when a condition or consistency check fails,
2 on usage errors. All reports are CSV with a header row, UTF-8, LF.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import statistics
import sys
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .conditions import DEFAULT_SEED, DEFAULT_TOLERANCE, check_scheme
from .integrator import integrate, precompute
from .problems import PROBLEM_FACTORIES, error_at, problem_by_name
from .tableaus import SCHEME_NAMES, scheme_by_name
from .trees import enumerate_trees

__all__ = [
    "ConvergenceReport",
    "run_convergence",
    "main",
    "cmd_check",
    "cmd_converge",
    "cmd_integrate",
    "cmd_bench",
    "cmd_trees",
]

DEFAULT_STEPS = (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8),
                 Fraction(1, 16), Fraction(1, 32))
_MODE_ALIASES = {"seq": "sequential", "par": "concurrent"}


@dataclass
class ConvergenceRow:
    h: Fraction
    error: float
    wall_seconds: float
    observed_order: float | None


@dataclass
class ConvergenceReport:
    """Rows of (h, error, wall time, observed order) for one scheme/problem."""

    scheme: str
    problem: str
    rows: list[ConvergenceRow]

    CSV_FIELDS = ("h", "error", "wall_seconds", "observed_order")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_FIELDS)
        for r in self.rows:
            writer.writerow([
                str(r.h), repr(r.error), repr(r.wall_seconds),
                "" if r.observed_order is None else repr(r.observed_order),
            ])
        return buf.getvalue()

    @staticmethod
    def rows_from_csv(text: str) -> list[ConvergenceRow]:
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != ConvergenceReport.CSV_FIELDS:
            raise ValueError(f"unexpected header {header}")
        out = []
        for row in reader:
            out.append(ConvergenceRow(
                h=Fraction(row[0]), error=float(row[1]), wall_seconds=float(row[2]),
                observed_order=None if row[3] == "" else float(row[3]),
            ))
        return out


def run_convergence(scheme_name: str, problem_name: str, steps=DEFAULT_STEPS,
                    n: int = 200, t0: float = 0.0, t_end: float = 1.0,
                    mode: str = "sequential") -> ConvergenceReport:
    """Integrate at each step size and tabulate errors and observed orders."""
    scheme = scheme_by_name(scheme_name)
    problem = problem_by_name(problem_name, n)
    steps = sorted((Fraction(s) for s in steps), reverse=True)
    if len(set(steps)) != len(steps):
        raise ValueError("step sizes must be distinct")
    rows: list[ConvergenceRow] = []
    prev: ConvergenceRow | None = None
    for hfrac in steps:
        h = float(hfrac)
        tic = time.perf_counter()
        result = integrate(scheme, problem, t0, t_end, h, mode=mode)
        wall = time.perf_counter() - tic
        err = error_at(problem, result.state, t_end)
        p_obs = None
        if prev is not None and err > 0 and prev.error > 0:
            ratio = float(prev.h / hfrac)
            p_obs = math.log(prev.error / err) / math.log(ratio)
        row = ConvergenceRow(h=hfrac, error=err, wall_seconds=wall, observed_order=p_obs)
        rows.append(row)
        prev = row
    return ConvergenceReport(scheme=scheme_name, problem=problem_name, rows=rows)


def _write_out(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_steps(spec: str):
    try:
        return [Fraction(tok.strip()) for tok in spec.split(",") if tok.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad step list {spec!r}: {err}") from None


def cmd_check(args) -> int:
    scheme = scheme_by_name(args.scheme)
    report = check_scheme(scheme, p=args.order, mode=args.mode, seeds=args.seeds,
                          n=args.n, tol=args.tol, base_seed=args.seed)
    _write_out(report.to_csv(), args.out)
    failing = report.failing()
    if failing:
        nums = ", ".join(str(r.number) for r in failing)
        print(f"{scheme.name} [{args.mode}]: {len(failing)} condition(s) failed: {nums}",
              file=sys.stderr)
        return 1
    print(f"{scheme.name} [{args.mode}]: all {len(report.results)} conditions passed",
          file=sys.stderr)
    return 0


def cmd_converge(args) -> int:
    report = run_convergence(args.scheme, args.problem, steps=args.steps, n=args.n,
                             mode=_MODE_ALIASES[args.exec])
    _write_out(report.to_csv(), args.out)
    return 0


def cmd_integrate(args) -> int:
    scheme = scheme_by_name(args.scheme)
    problem = problem_by_name(args.problem, args.n)
    h = float(args.h)
    tic = time.perf_counter()
    result = integrate(scheme, problem, args.t0, args.t_end, h,
                       mode=_MODE_ALIASES[args.exec])
    wall = time.perf_counter() - tic
    err = error_at(problem, result.state, args.t_end) if problem.exact else float("nan")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scheme", "problem", "h", "steps", "exec", "error", "wall_seconds"])
    writer.writerow([scheme.name, problem.name, str(args.h), result.steps,
                     args.exec, repr(err), repr(wall)])
    _write_out(buf.getvalue(), args.out)
    return 0


def cmd_bench(args) -> int:
    scheme = scheme_by_name(args.scheme)
    problem = problem_by_name(args.problem, args.n)
    h = float(args.h)
    if args.reps < 3:
        print("bench needs at least 3 repetitions", file=sys.stderr)
        return 2
    ctx = precompute(scheme, problem.A, h)
    runs = {"sequential": [], "concurrent": []}
    states = {}
    for mode in ("sequential", "concurrent"):
        for _ in range(args.reps):
            result = integrate(scheme, problem, args.t0, args.t_end, h,
                               mode=mode, ctx=ctx)
            runs[mode].append(result.total_seconds)
            state = result.state
            if mode == "concurrent" and args.inject_fault:
                state = state.copy()
                state[0] = np.nextafter(state[0], np.inf)
            if mode in states:
                if not _bitwise_equal(states[mode], state):
                    print(f"bench: {mode} runs are not reproducible", file=sys.stderr)
                    return 1
            states[mode] = state
    if not _bitwise_equal(states["sequential"], states["concurrent"]):
        print("bench: sequential and concurrent outputs differ (correctness bug)",
              file=sys.stderr)
        return 1
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mode", "reps", "median_seconds", "min_seconds", "max_seconds"])
    for mode in ("sequential", "concurrent"):
        ts = runs[mode]
        writer.writerow([mode, len(ts), repr(statistics.median(ts)),
                         repr(min(ts)), repr(max(ts))])
    _write_out(buf.getvalue(), args.out)
    return 0


def _bitwise_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()


def cmd_trees(args) -> int:
    table = enumerate_trees(args.order)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["number", "order", "symmetry", "kind", "tree"])
    for num, t in enumerate(table, start=1):
        kind = "b" if t.is_quadrature() else "nested"
        writer.writerow([num, t.order, t.symmetry, kind, t.bracket()])
    _write_out(buf.getvalue(), args.out)
    counts = table.counts_per_order()
    summary = ", ".join(f"order {q}: {counts[q]}" for q in sorted(counts))
    print(f"{len(table)} trees up to order {args.order} ({summary})", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exprk",
        description="Exponential integrator toolbox: audits, studies, benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, problem=True):
        p.add_argument("--scheme", required=True, choices=SCHEME_NAMES)
        if problem:
            p.add_argument("--problem", default="heat1d",
                           choices=sorted(PROBLEM_FACTORIES))
            p.add_argument("--n", type=int, default=200,
                           help="interior grid points (default 200)")
        p.add_argument("--out", default=None, help="write CSV here instead of stdout")

    p_check = sub.add_parser("check", help="verify stiff order conditions")
    p_check.add_argument("--scheme", required=True, choices=SCHEME_NAMES)
    p_check.add_argument("--order", type=int, default=6)
    p_check.add_argument("--mode", choices=("strong", "weak17"), default="strong")
    p_check.add_argument("--seeds", type=int, default=3)
    p_check.add_argument("--n", type=int, default=4, help="model dimension")
    p_check.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE)
    p_check.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_check.add_argument("--out", default=None)
    p_check.set_defaults(func=cmd_check)

    p_conv = sub.add_parser("converge", help="fixed-step convergence study")
    add_common(p_conv)
    p_conv.add_argument("--steps", type=_parse_steps,
                        default=list(DEFAULT_STEPS),
                        help="comma list of rational step sizes (default 1/2..1/32)")
    p_conv.add_argument("--exec", choices=("seq", "par"), default="seq")
    p_conv.set_defaults(func=cmd_converge)

    p_int = sub.add_parser("integrate", help="single integration run")
    add_common(p_int)
    p_int.add_argument("--h", type=Fraction, default=Fraction(1, 32))
    p_int.add_argument("--t0", type=float, default=0.0)
    p_int.add_argument("--t-end", dest="t_end", type=float, default=1.0)
    p_int.add_argument("--exec", choices=("seq", "par"), default="seq")
    p_int.set_defaults(func=cmd_integrate)

    p_bench = sub.add_parser("bench", help="time sequential vs concurrent stages")
    add_common(p_bench)
    p_bench.add_argument("--h", type=Fraction, default=Fraction(1, 32))
    p_bench.add_argument("--t0", type=float, default=0.0)
    p_bench.add_argument("--t-end", dest="t_end", type=float, default=1.0)
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--inject-fault", action="store_true",
                         help=argparse.SUPPRESS)
    p_bench.set_defaults(func=cmd_bench)

    p_trees = sub.add_parser("trees", help="list condition trees")
    p_trees.add_argument("--order", dest="order", type=int, default=6)
    p_trees.add_argument("--out", default=None)
    p_trees.set_defaults(func=cmd_trees)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "order", None) is not None and args.command == "trees":
        if not 2 <= args.order <= 8:
            parser.error("trees supports orders 2..8")
    try:
        return args.func(args)
    except (KeyError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
