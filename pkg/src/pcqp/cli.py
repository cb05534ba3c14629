"""Command-line entry point: ``pcqp solve | gpc | bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .bench import BenchSuite, run_bench
from .closed_loop import ReferenceSignal, export_trace, simulate
from .gpc import load_model
from .mehrotra import solve_mehrotra
from .oracle import InfeasibleError, solve_oracle
from .qp import InvalidArgumentError, SolverParams, Status, load_problem
from .revised import solve_revised

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MAX_ITER = 2
EXIT_FAILURE = 3

STATUS_EXIT = {
    Status.CONVERGED: EXIT_OK,
    Status.MAX_ITERATIONS: EXIT_MAX_ITER,
    Status.NUMERICAL_FAILURE: EXIT_FAILURE,
}

DEFAULT_REFERENCE = "0:1,30:-1,60:1"


class _Parser(argparse.ArgumentParser):
    # usage errors share the input-error code; 2 is reserved for MaxIterations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _params(args) -> SolverParams:
    return SolverParams(gamma=args.gamma, beta=args.beta, eps=args.eps, max_iter=args.max_iter)


def cmd_solve(args) -> int:
    p = load_problem(args.problem_file)
    if args.algo == "oracle":
        try:
            sol = solve_oracle(p)
        except InfeasibleError as exc:
            print(f"status: infeasible ({exc})", file=sys.stderr)
            return EXIT_FAILURE
        x, obj, iters, status = sol.x, sol.objective, 0, Status.CONVERGED
        message = ""
    else:
        solver = solve_revised if args.algo == "revised" else solve_mehrotra
        res = solver(p, _params(args))
        x, obj, iters, status = res.x, p.objective(res.x), res.iterations, res.status
        message = res.message

    if args.json:
        doc = {
            "algo": args.algo,
            "status": status.value,
            "iterations": iters,
            "objective": float(obj),
            "x": [float(v) for v in x],
        }
        if message:
            doc["message"] = message
        print(json.dumps(doc))
    else:
        print("x* = " + " ".join(f"{v:.6f}" for v in x))
        print(f"objective = {obj:.12g}")
        print(f"iterations = {iters}")
        print(f"status = {status.value}" + (f" ({message})" if message else ""))
    return STATUS_EXIT[status]


def cmd_gpc(args) -> int:
    model, cfg = load_model(args.model_file)
    ref = ReferenceSignal.parse(args.ref)
    trace = simulate(model, cfg, ref, args.steps, args.algo, _params(args))
    export_trace(trace, args.out)

    err = trace.array("y") - trace.array("w")
    violations = trace.bound_violations(cfg.u_min, cfg.u_max)
    print(f"steps = {len(trace)}/{args.steps}")
    print(f"tracking rms error = {np.sqrt(np.mean(err ** 2)):.6g}")
    print(f"final |y - w| = {abs(err[-1]):.6g}")
    print(f"input bound violations = {violations}")
    print(f"mean solve time = {np.mean(trace.solve_ms):.4f} ms")
    print(f"total iterations = {sum(trace.iters)}")
    print(f"outputs written to {args.out}")
    if not trace.completed:
        print(f"aborted: {trace.message}", file=sys.stderr)
        return EXIT_FAILURE
    if any(s != Status.CONVERGED.value for s in trace.status):
        return EXIT_MAX_ITER
    return EXIT_OK


def cmd_bench(args) -> int:
    suite = BenchSuite.load(args.suite_file) if args.suite_file else BenchSuite()
    report = run_bench(suite, _params(args))
    report.write_csv(args.out)
    print(report.table())
    print(f"report written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pcqp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver diagnostics")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def solver_flags(sp):
        sp.add_argument("--eps", type=float, default=1e-8, help="termination threshold on y'lam")
        sp.add_argument("--gamma", type=float, default=0.1, help="neighborhood parameter")
        sp.add_argument("--beta", type=float, default=0.1, help="safeguard parameter")
        sp.add_argument("--max-iter", type=int, default=100)

    sp = sub.add_parser("solve", help="solve a QP file")
    sp.add_argument("problem_file")
    sp.add_argument("--algo", choices=("mehrotra", "revised", "oracle"), default="revised")
    solver_flags(sp)
    sp.add_argument("--json", action="store_true", help="print a JSON object")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("gpc", help="run a closed-loop GPC simulation")
    sp.add_argument("model_file")
    sp.add_argument("--ref", default=DEFAULT_REFERENCE,
                    help="reference schedule 'start:value,...' (default %(default)s)")
    sp.add_argument("--steps", type=int, default=90)
    sp.add_argument("--algo", choices=("mehrotra", "revised"), default="revised")
    sp.add_argument("--out", default="gpc_out", help="output directory")
    solver_flags(sp)
    sp.set_defaults(func=cmd_gpc)

    sp = sub.add_parser("bench", help="run the closed-loop benchmark matrix")
    sp.add_argument("suite_file", nargs="?", help="JSON suite (default: built-in four plants)")
    sp.add_argument("--out", default="report.csv")
    solver_flags(sp)
    sp.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidArgumentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
