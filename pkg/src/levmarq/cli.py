"""Command-line front end.

Commands::

    levmarq list
    levmarq optimize --problem rosen [--start -1.2,1] [--nproc 4]
    levmarq lmm [--data file.csv | --subjects 500 --ni 5 --seed 1] [--numeric]
    levmarq gridsearch --problem wild --grid=-50,50,200
    levmarq bench [--nprocs 1,2,4] [--busy-ms 2]

Exit codes: 0 converged, 2 maximum iterations reached, 3 algorithm failure,
4 post-processing failure (no variance-covariance matrix), 64 usage error.
"""
from __future__ import annotations

import argparse
import itertools
import json
import math
import multiprocessing as mp
import sys
import time

import numpy as np

from . import __version__
from .mle import VcovError, summarize
from .optimizer import CONVERGED, MAXITER, OptimizerConfig, OptimReport, optimize
from .parallel import WorkerPool, default_nproc
from .problems import CsvFormatError, lmm_problem, read_lmm_csv, registry, simulate_lmm
from .problems.lmm import (
    DEFAULT_BETA,
    DEFAULT_SIGMA_E,
    DEFAULT_SIGMA_U,
    write_lmm_csv,
)

EXIT_OK = 0
EXIT_MAXITER = 2
EXIT_FAILURE = 3
EXIT_POSTPROCESS = 4
EXIT_USAGE = 64

BANNER = "Robust Marquardt-Levenberg algorithm"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("worker counts must be positive integers")
    return vals


def _grid(text: str):
    vals = _floats(text)
    if len(vals) != 3 or vals[2] < 1 or vals[2] != int(vals[2]):
        raise argparse.ArgumentTypeError("grid must be LO,HI,COUNT with COUNT a positive integer")
    return vals[0], vals[1], int(vals[2])


def _default_backend() -> str:
    return "process" if "fork" in mp.get_all_start_methods() else "thread"


def _add_common(p: argparse.ArgumentParser):
    d = OptimizerConfig()
    p.add_argument("--nproc", type=int, default=None,
                   help="worker count (default: $LEVMARQ_NPROC or 1)")
    p.add_argument("--backend", choices=("thread", "process"), default=_default_backend())
    p.add_argument("--epsa", type=float, default=d.epsa)
    p.add_argument("--epsb", type=float, default=d.epsb)
    p.add_argument("--epsd", type=float, default=d.epsd)
    p.add_argument("--maxiter", type=int, default=d.maxiter)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--print-every", type=int, default=None,
                   help="print one line every N iterations")
    p.add_argument("--output", choices=("text", "json", "csv"), default="text")
    p.add_argument("--out", dest="out_path", default=None,
                   help="write json/csv output to this path instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="levmarq", description=BANNER)
    parser.add_argument("--version", action="version", version=f"levmarq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("list", help="list registered problems")

    p = sub.add_parser("optimize", help="optimize a registered problem")
    p.add_argument("--problem", required=True)
    p.add_argument("--start", type=_floats, default=None, help="comma-separated start")
    _add_common(p)

    p = sub.add_parser("lmm", help="fit the random-intercept linear mixed model")
    p.add_argument("--data", dest="data_path", default=None, help="CSV with header i,t,X1,X3,Y")
    p.add_argument("--subjects", type=int, default=500)
    p.add_argument("--ni", type=int, default=5)
    p.add_argument("--sim-seed", type=int, default=1, help="seed of the simulated data")
    p.add_argument("--numeric", action="store_true", help="numeric instead of analytic gradient")
    p.add_argument("--write-data", default=None, help="also write the data used as CSV")
    _add_common(p)

    p = sub.add_parser("gridsearch", help="multi-start search over a regular grid")
    p.add_argument("--problem", required=True)
    p.add_argument("--grid", type=_grid, required=True, help="LO,HI,COUNT per dimension (write --grid=-50,50,200 for a negative LO)")
    p.add_argument("--tol", type=float, default=1e-3, help="clustering tolerance of minima")
    _add_common(p)

    p = sub.add_parser("bench", help="parallel speedup on the LMM with numeric derivatives")
    p.add_argument("--nprocs", type=_ints, default=[1, 2, 4])
    p.add_argument("--busy-ms", type=float, default=2.0,
                   help="busy-wait injected in each objective evaluation")
    p.add_argument("--subjects", type=int, default=500)
    p.add_argument("--ni", type=int, default=5)
    p.add_argument("--sim-seed", type=int, default=1)
    _add_common(p)
    return parser


def _config(args, **extra) -> OptimizerConfig:
    return OptimizerConfig(
        epsa=args.epsa, epsb=args.epsb, epsd=args.epsd, maxiter=args.maxiter,
        seed=args.seed, nproc=args.nproc, backend=args.backend,
        print_every=args.print_every, **extra,
    )


def _fmt(x: float, digits: int = 8) -> str:
    return f"{x:.{digits}g}"


def _jsonable(x):
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


# ---------------------------------------------------------------- reports

def format_report(rep: OptimReport, digits: int = 8, values: bool = True) -> str:
    """Text report: iteration summary, the three criteria, final values.

    ``values=False`` leaves out the final parameter block (the caller prints
    a coefficient table instead).
    """
    target = "minimum" if rep.minimize else "maximum"
    lines = [
        f"{BANNER:^66}",
        "",
        f"Problem: {rep.problem}",
        "",
        "Iteration process:",
        f"      Number of parameters: {rep.m}",
        f"      Number of iterations: {rep.ni}",
        f"      Optimized objective function: {_fmt(rep.fn_value, digits)}",
        f"      {rep.message}",
        "",
        f"Convergence criteria: parameters stability= {_fmt(rep.ca, digits)}",
        f"                    : objective function stability= {_fmt(rep.cb, digits)}",
    ]
    if rep.rdm > rep.epsd and rep.rdm == 1.0 + rep.epsd:
        lines.append("                    : Matrix inversion for RDM failed")
    else:
        lines.append("                    : Matrix inversion for RDM successful")
    lines += [
        f"                    : relative distance to {target}(RDM)= {_fmt(rep.rdm, digits)}",
        "",
    ]
    if values:
        lines += ["Final parameter values:", " " + " ".join(_fmt(v, digits) for v in rep.b), ""]
    return "\n".join(lines)


def format_summary(summary) -> str:
    head = f"{'coef':>10} {'SE.coef':>9} {'Wald':>13} {'P.value':>9} {'binf':>10} {'bsup':>10}"
    rows = [head]
    for r in summary.rows:
        rows.append(
            f"{r.coef:10.3f} {r.se:9.3f} {r.wald:13.5f} {r.p:9.0e} "
            f"{r.ci_low:10.3f} {r.ci_high:10.3f}"
        )
    return "\n".join(rows) + "\n"


def report_dict(rep: OptimReport) -> dict:
    return _jsonable({
        "problem": rep.problem,
        "istop": rep.istop,
        "ni": rep.ni,
        "fn_value": rep.fn_value,
        "b": rep.b,
        "criteria": {"ca": rep.ca, "cb": rep.cb, "rdm": rep.rdm},
        "vcov_packed": rep.v.data if rep.v is not None else None,
        "elapsed_ms": rep.elapsed * 1e3,
    })


def _trace_rows(rep: OptimReport):
    header = ["k", "objective", "ca", "cb", "rdm", "lambda", "delta", "n_evals"]
    header += [f"b{j}" for j in range(rep.m)]
    rows = []
    for t in rep.trace:
        val = t.objective if rep.minimize else -t.objective
        rows.append([t.k, repr(val), repr(t.step_sq), repr(t.obj_delta), repr(t.rdm),
                     repr(t.lambda_), repr(t.delta), t.n_evals] + [repr(float(v)) for v in t.theta])
    return header, rows


def _emit(args, text: str | None = None, obj: dict | None = None, table=None):
    """Write the requested output format to --out or stdout."""
    if args.output == "text":
        sys.stdout.write(text)
        return
    if args.output == "json":
        payload = json.dumps(obj, indent=2) + "\n"
    else:
        header, rows = table
        lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
        payload = "\n".join(lines) + "\n"
    if args.out_path:
        with open(args.out_path, "w") as fh:
            fh.write(payload)
        if text:
            sys.stdout.write(text)
    else:
        sys.stdout.write(payload)


def _exit_code(rep: OptimReport) -> int:
    if rep.istop == CONVERGED:
        return EXIT_OK
    if rep.istop == MAXITER:
        return EXIT_MAXITER
    return EXIT_FAILURE


# ---------------------------------------------------------------- commands

def cmd_list(args) -> int:
    print(f"{'name':12s} {'dim':>4s} {'sense':9s} {'f*':>16s}  description")
    for name, factory in registry().items():
        p = factory()
        fstar = "" if p.known_optimum is None else _fmt(p.known_optimum[0])
        print(f"{name:12s} {p.dim:4d} {p.sense:9s} {fstar:>16s}  {p.description}")
    return EXIT_OK


def _lookup(name):
    reg = registry()
    if name not in reg:
        raise UsageError(f"unknown problem {name!r}; choose from {', '.join(sorted(reg))}")
    return reg[name]()


def cmd_optimize(args) -> int:
    problem = _lookup(args.problem)
    x0 = problem.x0
    if args.start is not None:
        if len(args.start) != problem.dim:
            raise UsageError(f"--start has {len(args.start)} values, {problem.name} needs {problem.dim}")
        x0 = np.array(args.start)
    rep = optimize(problem, x0, _config(args, minimize=problem.sense == "minimize"))
    text = format_report(rep) + f"Elapsed: {rep.elapsed:.3f} s\n"
    _emit(args, text, report_dict(rep), _trace_rows(rep))
    return _exit_code(rep)


def _load_lmm(args):
    if args.data_path:
        try:
            return read_lmm_csv(args.data_path), None
        except CsvFormatError as exc:
            raise UsageError(f"{args.data_path}: {exc}")
        except OSError as exc:
            raise UsageError(str(exc))
    if args.subjects < 1 or args.ni < 1:
        raise UsageError("--subjects and --ni must be positive")
    return simulate_lmm(args.subjects, args.ni, DEFAULT_BETA, DEFAULT_SIGMA_U,
                        DEFAULT_SIGMA_E, seed=args.sim_seed, return_covariates=True)


def cmd_lmm(args) -> int:
    data, covariates = _load_lmm(args)
    if args.write_data:
        write_lmm_csv(args.write_data, data, covariates)
    problem = lmm_problem(data, analytic=not args.numeric)
    rep = optimize(problem, None, _config(args, minimize=False))
    text = format_report(rep, values=False)
    out = report_dict(rep)
    out["loglik"] = _jsonable(rep.fn_value)
    code = _exit_code(rep)
    try:
        summary = summarize(rep)
    except VcovError as exc:
        text += "Final parameter values:\n " + " ".join(_fmt(v) for v in rep.b) + "\n"
        text += f"Variance-covariance matrix unavailable: {exc}\n"
        out.update(se=None, vcov=None, vcov_error=str(exc), bad_parameters=exc.indices)
        if code == EXIT_OK:
            code = EXIT_POSTPROCESS
    else:
        text += "Final parameter values:\n" + format_summary(summary)
        se = [r.se for r in summary.rows]
        out.update(se=_jsonable(se), vcov=_jsonable(summary.vcov.data))
        table = (["coef", "se", "wald", "p", "ci_low", "ci_high"],
                 [[repr(float(v)) for v in row] for row in summary.table()])
    text += f"Elapsed: {rep.elapsed:.3f} s\n"
    if args.output == "csv" and code == EXIT_POSTPROCESS:
        table = _trace_rows(rep)
    _emit(args, text, out, table if args.output == "csv" else None)
    return code


def _cluster(points: np.ndarray, tol: float) -> int:
    centers: list[np.ndarray] = []
    for p in points:
        if not any(np.max(np.abs(p - c)) <= tol for c in centers):
            centers.append(p)
    return len(centers)


class _GridRun:
    def __init__(self, problem, config):
        self.problem = problem
        self.config = config

    def __call__(self, start):
        return optimize(self.problem, start, self.config)


def grid_starts(lo: float, hi: float, count: int, dim: int) -> np.ndarray:
    """Regular grid per dimension, Cartesian product over dimensions."""
    axis = np.array([lo]) if count == 1 else lo + np.arange(count) * (hi - lo) / (count - 1)
    return np.array(list(itertools.product(axis, repeat=dim)), dtype=float)


def gridsearch(problem, lo, hi, count, config: OptimizerConfig, pool: WorkerPool | None = None):
    """Run the optimizer from every grid start; runs are dispatched on ``pool``.

    Returns ``(starts, reports)``; each run is sequential (``nproc=1``).
    """
    starts = grid_starts(lo, hi, count, problem.dim)
    run = _GridRun(problem, config.with_(nproc=1))
    own = pool is None
    pool = pool or WorkerPool(config.nproc, config.backend)
    try:
        reports = pool.map(run, list(starts))
    finally:
        if own:
            pool.close()
    return starts, reports


def cmd_gridsearch(args) -> int:
    problem = _lookup(args.problem)
    lo, hi, count = args.grid
    cfg = _config(args, minimize=problem.sense == "minimize")
    t0 = time.perf_counter()
    with WorkerPool(cfg.nproc, cfg.backend) as pool:
        starts, reports = gridsearch(problem, lo, hi, count, cfg, pool)
    elapsed = time.perf_counter() - t0
    ok = [r for r in reports if r.istop == CONVERGED]
    sign = 1.0 if problem.sense == "minimize" else -1.0
    best = min(ok, key=lambda r: sign * r.fn_value) if ok else None
    n_minima = _cluster(np.array([r.b for r in ok]), args.tol) if ok else 0
    lines = [f"Grid search on {problem.name}: {len(starts)} starts, {len(ok)} converged",
             f"Distinct local optima (tol {args.tol:g}): {n_minima}"]
    if best is not None:
        lines += [f"Best objective: {_fmt(best.fn_value)}",
                  "Best parameters: " + " ".join(_fmt(v) for v in best.b)]
    lines.append(f"Elapsed: {elapsed:.3f} s")
    obj = _jsonable({
        "problem": problem.name, "n_starts": len(starts), "n_converged": len(ok),
        "n_minima": n_minima,
        "best": None if best is None else {"fn_value": best.fn_value, "b": best.b},
        "runs": [{"start": s, "istop": r.istop, "fn_value": r.fn_value, "b": r.b}
                 for s, r in zip(starts, reports)],
        "elapsed_ms": elapsed * 1e3,
    })
    header = ["run"] + [f"start{j}" for j in range(problem.dim)] + ["istop", "fn_value"] + \
        [f"b{j}" for j in range(problem.dim)]
    rows = [[k] + [repr(float(v)) for v in s] + [r.istop, repr(float(r.fn_value))]
            + [repr(float(v)) for v in r.b] for k, (s, r) in enumerate(zip(starts, reports))]
    _emit(args, "\n".join(lines) + "\n", obj, (header, rows))
    return EXIT_OK if ok else EXIT_FAILURE


class BusyObjective:
    """Wrap an objective with a CPU busy-wait of ``seconds`` per call."""

    def __init__(self, fn, seconds: float):
        self.fn = fn
        self.seconds = seconds

    def __call__(self, x):
        end = time.perf_counter() + self.seconds
        value = self.fn(x)
        while time.perf_counter() < end:
            pass
        return value


def bench(data, nprocs, busy_seconds: float, config: OptimizerConfig):
    """Fit the LMM with numeric derivatives once per worker count.

    Returns a list of ``(nproc, wall_seconds, report)``.
    """
    base = lmm_problem(data, analytic=False)
    base.objective = BusyObjective(base.objective, busy_seconds)
    out = []
    for n in nprocs:
        t0 = time.perf_counter()
        rep = optimize(base, None, config.with_(nproc=n))
        out.append((n, time.perf_counter() - t0, rep))
    return out


def cmd_bench(args) -> int:
    data = simulate_lmm(args.subjects, args.ni, seed=args.sim_seed)
    cfg = _config(args, minimize=False)
    results = bench(data, args.nprocs, args.busy_ms / 1e3, cfg)
    ref_time = results[0][1]
    ref_b = results[0][2].b
    header = ["nproc", "wall_s", "speedup", "istop", "ni", "loglik", "identical_b"]
    rows = []
    mismatch = False
    for n, wall, rep in results:
        same = bool(np.array_equal(rep.b, ref_b))
        mismatch |= not same
        rows.append([n, f"{wall:.4f}", f"{ref_time / wall:.3f}", rep.istop, rep.ni,
                     repr(float(rep.fn_value)), str(same).lower()])
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    payload = "\n".join(lines) + "\n"
    if args.output == "json":
        payload = json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n"
    if args.out_path:
        with open(args.out_path, "w") as fh:
            fh.write(payload)
    sys.stdout.write(payload)
    if mismatch:
        print("error: optima differ across worker counts", file=sys.stderr)
        return EXIT_FAILURE
    return _exit_code(results[0][2])


COMMANDS = {
    "list": cmd_list,
    "optimize": cmd_optimize,
    "lmm": cmd_lmm,
    "gridsearch": cmd_gridsearch,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if getattr(args, "nproc", 1) is None:
            args.nproc = default_nproc()
        if getattr(args, "nproc", 1) < 1:
            raise UsageError("--nproc must be positive")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"levmarq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"levmarq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
