"""Command-line harness: solver runs, scaling benchmarks, terminology lookup.

Benchmark CSV goes to stdout; human-readable reports go to stderr. Exit
status: 0 on success/convergence, 1 when a solve stops at max_iter without
converging, 2 on input errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .bench import GemmWorkload, SolveWorkload, run_bench
from .device import ElemKind
from .errors import SimtError
from .executor import WORKERS_ENV_VAR, get_default_executor
from .matrices import MatrixMarketError, gen_poisson, load_matrix_market
from .solvers import FLOW_STEPS, Method, SolverConfig, solve
from .terminology import UnknownTermError, terminology_lookup

METHOD_NAMES = [m.value for m in Method]


def _default_workers():
    raw = os.environ.get(WORKERS_ENV_VAR)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _add_matrix_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--poisson", type=int, metavar="K", help="use the K*K 5-point Poisson matrix")
    g.add_argument("--mm", metavar="PATH", help="load a Matrix Market coordinate file")


def _add_solver_args(p):
    p.add_argument("--method", choices=METHOD_NAMES, default="cg")
    p.add_argument("--tol", type=float, default=1e-6, help="relative-residual threshold")
    p.add_argument("--max-iter", type=int, default=None, help="iteration cap (default 10*n)")
    p.add_argument("--restart", type=int, default=30, help="GMRES restart length")


def _add_common_args(p):
    p.add_argument("--precision", choices=["f32", "f64"], default="f64")
    p.add_argument("--seed", type=int, default=42, help="PRNG seed for generated data")


def build_parser():
    parser = argparse.ArgumentParser(prog="simtsolve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run one iterative solve and report it")
    _add_matrix_args(ps)
    _add_solver_args(ps)
    _add_common_args(ps)
    ps.add_argument("--workers", type=int, default=_default_workers(), help=f"simulator worker threads (default ${WORKERS_ENV_VAR} or 1)")

    pb = sub.add_parser("bench", help="benchmark scaling against the sequential baseline, CSV to stdout")
    gw = pb.add_mutually_exclusive_group(required=True)
    gw.add_argument("--gemm", type=int, metavar="N", help="dense N x N matrix multiply workload")
    gw.add_argument("--poisson", type=int, metavar="K", help="solver workload on the K*K Poisson matrix")
    gw.add_argument("--mm", metavar="PATH", help="solver workload on a Matrix Market file")
    pb.add_argument("--methods", default="cg", help="comma-separated solver methods for matrix workloads")
    pb.add_argument("--workers", default=None, help=f"comma-separated worker counts (default ${WORKERS_ENV_VAR} or 1)")
    pb.add_argument("--reps", type=int, default=3, help="repetitions per timing; the median is reported")
    pb.add_argument("--tol", type=float, default=1e-6)
    pb.add_argument("--max-iter", type=int, default=None)
    pb.add_argument("--restart", type=int, default=30)
    _add_common_args(pb)

    pt = sub.add_parser("term", help="translate between CUDA-style and OpenCL-style terms")
    pt.add_argument("term", nargs="+", help="term to translate, e.g. 'thread block'")

    return parser


def _load_matrix(args, kind):
    if getattr(args, "poisson", None) is not None:
        if args.poisson < 1:
            raise ValueError(f"--poisson needs K >= 1, got {args.poisson}")
        return gen_poisson(args.poisson, kind), f"poisson-{args.poisson}"
    return load_matrix_market(args.mm, kind), f"mm-{os.path.basename(args.mm)}"


def cmd_solve(args):
    kind = ElemKind.from_string(args.precision)
    A, _ = _load_matrix(args, kind)
    rng = np.random.default_rng(args.seed)
    b = rng.standard_normal(A.n_rows)
    cfg = SolverConfig(
        method=Method.from_string(args.method),
        tol=args.tol,
        max_iter=args.max_iter,
        restart_m=args.restart,
        kind=kind,
    )
    executor = get_default_executor()
    executor.set_worker_count(max(1, args.workers))
    _, report = solve(A, b, cfg, executor=executor)

    print(
        f"method={args.method} n={A.n_rows} kind={kind.name} workers={executor.workers}",
        file=sys.stderr,
    )
    print(
        f"converged={report.converged} iterations={report.iterations} "
        f"final_residual={report.final_residual:.6e}",
        file=sys.stderr,
    )
    steps = " ".join(f"{s}={report.timings[s]:.6f}s" for s in FLOW_STEPS)
    print(f"timings: {steps}", file=sys.stderr)
    return 0 if report.converged else 1


def cmd_bench(args):
    kind = ElemKind.from_string(args.precision)
    if args.workers is None:
        workers = [_default_workers()]
    else:
        workers = [int(w) for w in args.workers.split(",") if w.strip()]
    if not workers or any(w < 1 for w in workers):
        raise ValueError(f"--workers must be a comma list of positive integers, got {args.workers!r}")

    if args.gemm is not None:
        if args.gemm < 1:
            raise ValueError(f"--gemm needs N >= 1, got {args.gemm}")
        workload = GemmWorkload(args.gemm, kind, args.seed)
        methods = None
    else:
        A, workload_id = _load_matrix(args, kind)
        workload = SolveWorkload(
            A,
            workload_id,
            kind=kind,
            seed=args.seed,
            tol=args.tol,
            max_iter=args.max_iter,
            restart_m=args.restart,
        )
        methods = [Method.from_string(name) for name in args.methods.split(",") if name.strip()]
        if not methods:
            raise ValueError("--methods must name at least one method")

    run_bench(workload, methods=methods, workers=workers, reps=args.reps)
    return 0


def cmd_term(args):
    term = " ".join(args.term)
    print(terminology_lookup(term))
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"solve": cmd_solve, "bench": cmd_bench, "term": cmd_term}
    try:
        return handlers[args.command](args)
    except (UnknownTermError, MatrixMarketError) as exc:
        print(f"simtsolve: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, SimtError) as exc:
        print(f"simtsolve: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
