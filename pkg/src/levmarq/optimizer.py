"""Robust Marquardt-Levenberg iterations.

Each iteration inflates the diagonal of the current Hessian,

    H~_ii = H_ii + lambda * ((1 - eta) * |H_ii| + eta * tr(H)),

growing ``lambda`` until ``H~`` factorizes, then moves along
``d = -H~^{-1} grad`` with a step length of 1 unless that fails to decrease
the objective, in which case a line search picks the step.  Convergence
requires all three of

* parameter stability ``sum((theta_new - theta)**2) < epsa``,
* objective stability ``|F_new - F| < epsb``,
* relative distance to the minimum ``grad' H^{-1} grad / m < epsd``,

the last one evaluated with the *uninflated* Hessian, which makes a saddle
point unreachable: if ``H`` is not positive definite the distance is set to
``1 + epsd``.

Maximization is the minimization of ``-fn``; everything below works on the
minimization sense and reports values back in the caller's sense.
"""
from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import derivatives as _deriv
from .derivatives import BlindingPolicy, DerivativeError
from .linalg import PackedSymmetric, cholesky, invert, quadratic_form, solve
from .parallel import WorkerPool

__all__ = [
    "CONVERGED",
    "MAXITER",
    "INFLATION_FAILURE",
    "NONFINITE",
    "OptimizerConfig",
    "Problem",
    "IterationRecord",
    "OptimReport",
    "inflate",
    "rdm",
    "line_search",
    "multiple_try_init",
    "minimize",
    "maximize",
    "optimize",
    "mla",
]

CONVERGED = 1
MAXITER = 2
INFLATION_FAILURE = 3
NONFINITE = 4

STATUS_MESSAGES = {
    CONVERGED: "Convergence criteria satisfied",
    MAXITER: "Maximum number of iterations reached",
    INFLATION_FAILURE: "Diagonal inflation failed to give an acceptable step",
    NONFINITE: "Objective not finite and could not be recovered",
}

LAMBDA_FLOOR = 1e-10


@dataclass(frozen=True)
class OptimizerConfig:
    """Tolerances and tuning of the iterations.

    Defaults for ``maxiter``, the three thresholds, ``blinding``,
    ``multiple_try``, ``nproc`` and ``minimize`` are those of the reference R
    package.  The ``lambda*`` schedule and ``eta`` are internal choices.

    With ``newton_first`` each iteration first tries the uninflated Hessian
    and falls back on the inflation ladder (starting at the current
    ``lambda``) only if ``H`` is not positive definite or the Newton step
    fails to decrease the objective.  With ``newton_first=False`` every step
    is inflated.
    """

    maxiter: int = 500
    epsa: float = 1e-4
    epsb: float = 1e-4
    epsd: float = 1e-4
    minimize: bool = True
    blinding: bool = True
    multiple_try: int = 25
    nproc: int = 1
    lambda0: float = 1e-3
    lambda_grow: float = 10.0
    lambda_shrink: float = 0.1
    lambda_max: float = 1e12
    eta: float = 0.1
    newton_first: bool = True
    max_linesearch: int = 30
    print_every: int | None = None
    digits: int = 8
    seed: int = 0
    backend: str = "thread"

    def __post_init__(self):
        self.validate()

    def validate(self):
        def check(ok, msg):
            if not ok:
                raise ValueError(f"invalid OptimizerConfig: {msg}")

        check(int(self.maxiter) == self.maxiter and self.maxiter >= 1, "maxiter must be a positive integer")
        for name in ("epsa", "epsb", "epsd"):
            v = getattr(self, name)
            check(v > 0 and math.isfinite(v), f"{name} must be positive")
        check(self.multiple_try >= 0, "multiple_try must be >= 0")
        check(int(self.nproc) == self.nproc and self.nproc >= 1, "nproc must be a positive integer")
        check(0 < self.lambda0 <= self.lambda_max, "need 0 < lambda0 <= lambda_max")
        check(self.lambda_grow > 1, "lambda_grow must exceed 1")
        check(0 < self.lambda_shrink < 1, "lambda_shrink must lie in (0, 1)")
        check(0 <= self.eta <= 1, "eta must lie in [0, 1]")
        check(self.max_linesearch >= 1, "max_linesearch must be >= 1")
        check(self.print_every is None or self.print_every >= 1, "print_every must be positive")
        check(0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer")
        check(self.backend in ("thread", "process"), "backend must be 'thread' or 'process'")

    def with_(self, **changes) -> "OptimizerConfig":
        return replace(self, **changes)


@dataclass
class Problem:
    """An objective with optional analytic derivatives.

    ``gradient`` returns a length-``dim`` vector; ``hessian`` returns either a
    dense ``dim x dim`` array or a :class:`PackedSymmetric`.  All callables
    must be pure functions of the parameter vector, since they may be called
    concurrently.
    """

    name: str
    dim: int
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    hessian: Callable[[np.ndarray], object] | None = None
    sense: str = "minimize"
    x0: np.ndarray | None = None
    known_optimum: tuple[float, np.ndarray | None] | None = None
    description: str = ""

    def __post_init__(self):
        if self.sense not in ("minimize", "maximize"):
            raise ValueError(f"sense must be 'minimize' or 'maximize', got {self.sense!r}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float)
            if self.x0.shape != (self.dim,):
                raise ValueError(f"x0 has shape {self.x0.shape}, expected ({self.dim},)")

    def __call__(self, x):
        return self.objective(np.asarray(x, dtype=float))

    def without_derivatives(self) -> "Problem":
        return replace(self, gradient=None, hessian=None)


@dataclass
class IterationRecord:
    k: int
    objective: float
    step_sq: float
    obj_delta: float
    rdm: float
    lambda_: float
    n_evals: int
    delta: float
    theta: np.ndarray


@dataclass
class OptimReport:
    """Outcome of a run.

    ``fn_value`` and ``grad`` are in the caller's sense.  ``v`` is the inverse
    of the final uninflated Hessian of the minimized function (for a
    maximized log-likelihood, the variance-covariance estimate); it is
    ``None`` when that Hessian is not positive definite.
    """

    b: np.ndarray
    fn_value: float
    ni: int
    ca: float
    cb: float
    rdm: float
    istop: int
    v: PackedSymmetric | None
    grad: np.ndarray
    hessian: PackedSymmetric | None
    trace: list[IterationRecord] = field(default_factory=list)
    minimize: bool = True
    epsd: float = 1e-4
    n_evals: int = 0
    elapsed: float = 0.0
    problem: str = ""
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.istop == CONVERGED

    @property
    def m(self) -> int:
        return len(self.b)


def inflate(h: PackedSymmetric, lam: float, eta: float) -> PackedSymmetric:
    """Fletcher-style inflation of the diagonal; off-diagonals untouched."""
    idx = h.diag_indices()
    d = h.data[idx]
    data = h.data.copy()
    data[idx] = d + lam * ((1.0 - eta) * np.abs(d) + eta * d.sum())
    return PackedSymmetric(h.dim, data)


def _eta(h: PackedSymmetric, eta: float) -> float:
    # a non-positive trace pulls the diagonal down; inflate on |H_ii| alone
    return eta if h.trace() > 0 else 0.0


def rdm(g, h: PackedSymmetric, m: int, epsd: float) -> float:
    """Relative distance to the minimum, ``g' H^{-1} g / m``.

    Returns ``1 + epsd`` when ``H`` is not positive definite or the
    quadratic form comes out negative.
    """
    g = np.asarray(g, dtype=float)
    if not h.is_finite() or not np.all(np.isfinite(g)):
        return 1.0 + epsd
    f = cholesky(h)
    if not f.success:
        return 1.0 + epsd
    val = quadratic_form(f, g) / m
    if not val >= 0:
        return 1.0 + epsd
    return val


def line_search(f, theta, d, f0: float, max_trials: int = 30):
    """Step length along ``d``.

    Tries ``delta = 1`` first.  If that does not decrease ``f`` below ``f0``,
    halves ``delta`` until it does, then fits one parabola through the
    bracketing samples and keeps its vertex if it is better still.

    Returns
    -------
    (delta, f_new) or None
        ``None`` when no decrease was found within ``max_trials`` halvings.
    """
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(d, dtype=float)

    def at(step):
        v = float(f(theta + step * d))
        return v if not math.isnan(v) else math.inf

    f1 = at(1.0)
    if f1 < f0:
        return 1.0, f1

    prev_step, prev_f = 1.0, f1
    step = 1.0
    for _ in range(max_trials):
        step *= 0.5
        fs = at(step)
        if fs < f0:
            break
        prev_step, prev_f = step, fs
    else:
        return None

    # samples at 0, step, 2*step = prev_step bracket a minimum
    best_step, best_f = step, fs
    if math.isfinite(prev_f):
        curv = f0 - 2.0 * fs + prev_f
        if curv > 0:
            vertex = step + step * (f0 - prev_f) / (2.0 * curv)
            if 0.0 < vertex < prev_step and vertex != step:
                fv = at(vertex)
                if fv < best_f:
                    best_step, best_f = vertex, fv
    return best_step, best_f


def multiple_try_init(f, x0, tries: int, seed: int = 0):
    """Find a starting point where ``f`` is finite.

    Returns ``x0`` unchanged if ``f(x0)`` is finite.  Otherwise candidate
    ``t`` (``t = 1..tries``) is ``x0 * (1 + s_t u) + s_t w`` with ``u`` uniform
    on (-0.5, 0.5), ``w`` uniform on (-0.1, 0.1) and a spread ``s_t =
    2 ** ((t - 1) / 4)`` that widens with each failure, so repeated tries can
    leave the region (and the sign) of ``x0``.  Returns ``None`` when all
    tries fail.
    """
    x0 = np.asarray(x0, dtype=float)
    if _finite(f, x0):
        return x0
    rng = np.random.default_rng(seed)
    for t in range(1, tries + 1):
        spread = 2.0 ** ((t - 1) / 4)
        u = rng.uniform(-0.5, 0.5, x0.size)
        w = rng.uniform(-0.1, 0.1, x0.size)
        cand = x0 * (1.0 + spread * u) + spread * w
        if _finite(f, cand):
            return cand
    return None


def _finite(f, x) -> bool:
    try:
        return math.isfinite(float(f(x)))
    except (ArithmeticError, ValueError):
        return False


class _Internal:
    # Objective in the minimization sense: sign * fn, with the blinding
    # sentinel substituted for non-finite values.
    def __init__(self, fn, sign: float, blinding: bool):
        self.fn = fn
        self.sign = sign
        self.blinding = blinding

    def raw(self, x):
        return self.sign * float(self.fn(x))

    def __call__(self, x):
        v = self.raw(x)
        if not math.isfinite(v):
            return _deriv.BLINDING_SENTINEL if self.blinding else math.inf
        return v


class _SignedGradient:
    def __init__(self, gr, sign):
        self.gr = gr
        self.sign = sign

    def __call__(self, x):
        return self.sign * np.asarray(self.gr(x), dtype=float)


def _as_packed(h, m) -> PackedSymmetric:
    if isinstance(h, PackedSymmetric):
        return h
    return PackedSymmetric.from_dense(np.asarray(h, dtype=float).reshape(m, m))


class _Derivs:
    """Gradient and Hessian of the internal objective at one point."""

    def __init__(self, problem: Problem, sign: float, pool: WorkerPool, blinding: bool):
        self.pool = pool
        self.sign = sign
        self.hess = problem.hessian
        self.gr = _SignedGradient(problem.gradient, sign) if problem.gradient else None
        self.policy = BlindingPolicy(enabled=blinding)

    def __call__(self, F, theta, f0):
        m = theta.size
        if self.gr is None and self.hess is None:
            g, h, n, _ = _deriv.numeric_derivatives(F, theta, f0, self.pool, self.policy)
            return g, h, n
        if self.gr is not None:
            g = self.gr(theta)
        else:
            g = _deriv.numeric_gradient(F, theta, self.pool, self.policy)
        if not np.all(np.isfinite(g)):
            bad = int(np.flatnonzero(~np.isfinite(g))[0])
            raise DerivativeError(f"non-finite gradient component {bad}", bad)
        if self.hess is not None:
            h = _as_packed(self.hess(theta), m)
            if self.sign < 0:
                h = PackedSymmetric(m, -h.data)
        else:
            h = _deriv.hessian_from_gradient(self.gr, theta, self.pool)
        n = 0 if self.gr is not None else 2 * m
        return g, h, n


def _print_iteration(rec: IterationRecord, digits: int, maximize: bool, out=None):
    out = out or sys.stdout
    val = -rec.objective if maximize else rec.objective
    print(
        f"iter {rec.k:4d}  fn={val:.{digits}g}  ca={rec.step_sq:.{digits}g}  "
        f"cb={rec.obj_delta:.{digits}g}  rdm={rec.rdm:.{digits}g}  "
        f"lambda={rec.lambda_:.3g}  delta={rec.delta:.3g}",
        file=out,
    )


def _run(problem: Problem, x0, config: OptimizerConfig, pool: WorkerPool | None,
         maximize: bool) -> OptimReport:
    start = time.perf_counter()
    if x0 is None:
        x0 = problem.x0
    if x0 is None:
        raise ValueError(f"no starting point given for problem {problem.name!r}")
    theta = np.array(x0, dtype=float).reshape(-1)
    m = problem.dim
    if theta.size != m:
        raise ValueError(f"x0 has length {theta.size}, problem {problem.name!r} has dim {m}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("x0 must be finite")
    config.validate()

    own_pool = pool is None
    if own_pool:
        pool = WorkerPool(config.nproc, config.backend)
    try:
        return _iterate(problem, theta, config, pool, maximize, start)
    finally:
        if own_pool:
            pool.close()


def _iterate(problem, theta, config, pool, maximize, start) -> OptimReport:
    m = theta.size
    sign = -1.0 if maximize else 1.0
    F = _Internal(problem.objective, sign, config.blinding)
    derivs = _Derivs(problem, sign, pool, config.blinding)
    epsd = config.epsd
    trace: list[IterationRecord] = []
    total_evals = 0

    def report(theta, f, g, h, ni, ca, cb, rdm_val, istop, message=""):
        v = invert(h) if (h is not None and h.is_finite()) else None
        return OptimReport(
            b=theta.copy(),
            fn_value=sign * f,
            ni=ni, ca=ca, cb=cb, rdm=rdm_val, istop=istop, v=v,
            grad=sign * g if g is not None else np.full(m, np.nan),
            hessian=h, trace=trace, minimize=not maximize, epsd=epsd,
            n_evals=total_evals, elapsed=time.perf_counter() - start,
            problem=problem.name, message=message or STATUS_MESSAGES[istop],
        )

    start_point = multiple_try_init(F.raw, theta, config.multiple_try, config.seed)
    total_evals += 1
    if start_point is None:
        return report(theta, math.nan, None, None, 0, math.nan, math.nan,
                      1.0 + epsd, NONFINITE,
                      f"objective not finite at b and after {config.multiple_try} tries")
    theta = start_point
    f0 = F(theta)
    total_evals += 1
    try:
        g, h, n = derivs(F, theta, f0)
    except DerivativeError as exc:
        return report(theta, f0, None, None, 0, math.nan, math.nan, 1.0 + epsd,
                      NONFINITE, str(exc))
    total_evals += n

    lam = config.lambda0
    ca = cb = math.nan
    rdm_val = rdm(g, h, m, epsd)
    ni = 0
    while ni < config.maxiter:
        n_iter = 0
        step = None
        # lambda = 0 is tried first (when enabled) and skipped as soon as H is
        # not PD or the pure Newton step finds no decrease
        lam_used = 0.0 if config.newton_first else lam
        while step is None:
            fac = None
            if h.is_finite():
                fac = cholesky(inflate(h, lam_used, _eta(h, config.eta)))
            if fac is not None and fac.success:
                d = -solve(fac, g)
                calls = [0]

                def F_counted(x):
                    calls[0] += 1
                    return F(x)

                step = line_search(F_counted, theta, d, f0, config.max_linesearch)
                n_iter += calls[0]
                if step is None and rdm_val < epsd:
                    # no decrease along a Newton direction at a point already
                    # within tolerance of the minimum: the optimal step is 0
                    step = (0.0, f0)
                if step is not None:
                    break
            if lam_used == 0.0:
                lam_used = lam
                continue
            lam *= config.lambda_grow
            lam_used = lam
            if lam > config.lambda_max:
                total_evals += n_iter
                return report(theta, f0, g, h, ni, ca, cb, rdm_val, INFLATION_FAILURE)

        delta, f1 = step
        theta1 = theta + delta * d if delta > 0 else theta.copy()
        lam = max(lam * config.lambda_shrink, LAMBDA_FLOOR)
        if delta > 0:
            try:
                g1, h1, n = derivs(F, theta1, f1)
            except DerivativeError as exc:
                total_evals += n_iter
                return report(theta, f0, g, h, ni, ca, cb, rdm_val, NONFINITE, str(exc))
            n_iter += n
        else:
            g1, h1 = g, h
        total_evals += n_iter
        ca = float(np.sum((theta1 - theta) ** 2))
        cb = abs(f1 - f0)
        rdm_val = rdm(g1, h1, m, epsd)
        ni += 1
        rec = IterationRecord(ni, f1, ca, cb, rdm_val, lam_used, max(n_iter, 1), delta, theta1.copy())
        trace.append(rec)
        if config.print_every and ni % config.print_every == 0:
            _print_iteration(rec, config.digits, maximize)
        theta, f0, g, h = theta1, f1, g1, h1
        if ca < config.epsa and cb < config.epsb and rdm_val < epsd:
            return report(theta, f0, g, h, ni, ca, cb, rdm_val, CONVERGED)
    return report(theta, f0, g, h, ni, ca, cb, rdm_val, MAXITER)


def minimize(problem: Problem, x0=None, config: OptimizerConfig | None = None,
             pool: WorkerPool | None = None) -> OptimReport:
    """Minimize ``problem.objective`` from ``x0`` (default ``problem.x0``).

    ``pool`` overrides the worker pool built from ``config.nproc``.  Failure
    to converge is reported through ``istop``, not raised; a dimension
    mismatch or an invalid configuration raises ``ValueError``.
    """
    return _run(problem, x0, config or OptimizerConfig(), pool, maximize=False)


def maximize(problem: Problem, x0=None, config: OptimizerConfig | None = None,
             pool: WorkerPool | None = None) -> OptimReport:
    """Maximize ``problem.objective`` by minimizing its opposite.

    ``fn_value`` and ``grad`` of the report are in the maximization sense;
    ``v`` is the inverse of the Hessian of ``-fn``, i.e. the usual
    variance-covariance estimate when ``fn`` is a log-likelihood.
    """
    return _run(problem, x0, config or OptimizerConfig(), pool, maximize=True)


def optimize(problem: Problem, x0=None, config: OptimizerConfig | None = None,
             pool: WorkerPool | None = None) -> OptimReport:
    """Minimize or maximize according to ``problem.sense``."""
    run = maximize if problem.sense == "maximize" else minimize
    return run(problem, x0, config, pool)


def mla(b, fn, gr=None, hess=None, **options) -> OptimReport:
    """Functional front end: ``mla(b, fn, gr=None, hess=None, minimize=True, ...)``.

    Keyword options are :class:`OptimizerConfig` fields.

    Examples
    --------
    >>> rep = mla([-1.2, 1.0], lambda x: 100 * (x[1] - x[0]**2)**2 + (1 - x[0])**2)
    >>> rep.istop, [round(float(v), 3) for v in rep.b]
    (1, [1.0, 1.0])
    """
    config = OptimizerConfig(**options)
    b = np.asarray(b, dtype=float).reshape(-1)
    problem = Problem(
        name=getattr(fn, "__name__", "fn"), dim=b.size, objective=fn,
        gradient=gr, hessian=hess,
        sense="minimize" if config.minimize else "maximize",
    )
    return optimize(problem, b, config)
