"""Acceptance suite: one test per criterion, at the tolerances it states.

Each test records a ``[PASS]``/``[FAIL]``/``[SKIP]`` line that is printed in
the terminal summary of every pytest run.
"""
import math
import os
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from conftest import record
from levmarq import (
    CONVERGED,
    OptimizerConfig,
    Problem,
    cholesky,
    hessian_from_gradient,
    maximize,
    minimize,
    numeric_derivatives,
)
from levmarq.cli import BusyObjective, gridsearch
from levmarq.mle import chisq1_upper_tail, summary_rows
from levmarq.problems import (
    LmmData,
    grad_lmm,
    lmm_problem,
    loglik_lmm,
    more_suite,
    random_pd_quadratic,
    saddle_fixture,
    simulate_lmm,
    wild_problem,
)


def _cpus() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _same_iterates(a, b) -> bool:
    return len(a.trace) == len(b.trace) and all(
        x.theta.tobytes() == y.theta.tobytes() for x, y in zip(a.trace, b.trace))


@pytest.fixture(scope="module")
def seed1():
    return simulate_lmm(n_subjects=500, ni_each=5, seed=1)


def test_c01_more_subset(criterion):
    t0 = time.perf_counter()
    worst, failures = 0.0, []
    for p in more_suite():
        rep = minimize(p)
        bias = abs(rep.fn_value - p.known_optimum[0])
        worst = max(worst, bias)
        if not bias < 1e-6:
            failures.append(f"{p.name}={bias:.2e}")
    elapsed = time.perf_counter() - t0
    criterion(1, "More subset convergence", not failures and elapsed < 10.0,
              f"12 problems, max |f-f*| = {worst:.2e} (< 1e-6), {elapsed:.2f} s (< 10 s)"
              + (f"; failing: {', '.join(failures)}" if failures else ""))


def test_c02_quadratic_exactness(criterion):
    rng = np.random.default_rng(20240601)
    worst_x = worst_v = worst_rdm = 0.0
    max_ni, bad = 0, 0
    for _ in range(100):
        m = int(rng.integers(1, 9))
        p = random_pd_quadratic(rng, m)
        rep = minimize(p)
        a = p.hessian(p.x0).to_dense()
        ok = rep.istop == CONVERGED and rep.ni <= 3 and rep.v is not None
        if ok:
            worst_x = max(worst_x, float(np.max(np.abs(rep.b - p.known_optimum[1]))))
            worst_v = max(worst_v, float(np.max(np.abs(rep.v.to_dense() - np.linalg.inv(a)))))
            worst_rdm = max(worst_rdm, rep.rdm)
        bad += not ok
        max_ni = max(max_ni, rep.ni)
    ok = bad == 0 and worst_x < 1e-6 and worst_v < 1e-6 and worst_rdm < 1e-10
    criterion(2, "quadratic exactness", ok,
              f"100 quadratics (m <= 8): {100 - bad} istop=1 within 3 iterations "
              f"(max ni {max_ni}), max |x-x*| {worst_x:.1e}, max |v-A^-1| {worst_v:.1e}, "
              f"max rdm {worst_rdm:.1e}")


_saddle_seen = {"runs": 0, "converged": 0, "bad": 0}


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.floats(-3, 3), st.floats(-3, 3), st.booleans())
def test_c03_saddle_rejection(criterion, x, y, analytic):
    rep = minimize(saddle_fixture(analytic), np.array([x, y]), OptimizerConfig(maxiter=100))
    _saddle_seen["runs"] += 1
    bad = False
    if rep.istop == CONVERGED:
        _saddle_seen["converged"] += 1
        near_origin = np.max(np.abs(rep.b)) < 1e-2
        pd = cholesky(rep.hessian).success
        bad = near_origin or not pd
    _saddle_seen["bad"] += bad
    s = _saddle_seen
    criterion(3, "saddle rejection", s["bad"] == 0,
              f"{s['runs']} random starts (numeric and analytic): {s['converged']} istop=1, "
              f"{s['bad']} at the origin or with non-PD H")


def test_c04_lmm_cross_path(criterion, seed1):
    t0 = time.perf_counter()
    runs = {
        "numeric/1": maximize(lmm_problem(seed1, analytic=False)),
        "analytic/1": maximize(lmm_problem(seed1)),
        "numeric/4": maximize(lmm_problem(seed1, analytic=False),
                              config=OptimizerConfig(nproc=4, backend="process")),
        "analytic/4": maximize(lmm_problem(seed1), config=OptimizerConfig(nproc=4)),
    }
    elapsed = time.perf_counter() - t0
    reps = list(runs.values())
    db = max(float(np.max(np.abs(a.b - b.b))) for a in reps for b in reps)
    dl = max(abs(a.fn_value - b.fn_value) for a in reps for b in reps)
    all_conv = all(r.istop == CONVERGED for r in reps)
    ok = all_conv and db < 1e-4 and dl < 1e-5 and elapsed < 60.0
    criterion(4, "LMM cross-path agreement", ok,
              f"numeric/analytic x nproc 1/4 all istop=1: {all_conv}; max |db| {db:.1e} (< 1e-4), "
              f"max |dloglik| {dl:.1e} (< 1e-5), loglik {reps[0].fn_value:.6f}, {elapsed:.2f} s")


def _dense_loglik(b, data):
    p = data.x.shape[1]
    total, start = 0.0, 0
    for n in data.ni:
        sl = slice(start, start + n)
        cov = b[p + 1] ** 2 * np.eye(n) + b[p] ** 2 * np.ones((n, n))
        total += multivariate_normal(data.x[sl] @ b[:p], cov).logpdf(data.y[sl])
        start += n
    return total


def test_c05_likelihood_oracle(criterion):
    rng = np.random.default_rng(55)
    worst_l = worst_g = 0.0
    for k in range(50):
        n = int(rng.integers(1, 6))
        ni = rng.integers(1, 5, n)
        x = np.column_stack([np.ones(ni.sum()), rng.standard_normal((ni.sum(), 2))])
        data = LmmData(rng.normal(1.0, 3.0, ni.sum()), x, ni)
        b = np.r_[rng.normal(0, 2, 3), rng.uniform(0.3, 3.0, 2)]
        worst_l = max(worst_l, abs(loglik_lmm(b, data) - _dense_loglik(b, data)))
        if k < 20:
            h = 1e-6
            fd = np.array([(loglik_lmm(b + h * e, data) - loglik_lmm(b - h * e, data)) / (2 * h)
                           for e in np.eye(b.size)])
            worst_g = max(worst_g, float(np.max(np.abs(grad_lmm(b, data) - fd))))
    criterion(5, "likelihood oracle", worst_l < 1e-8 and worst_g < 1e-5,
              f"50 datasets max |loglik - dense MVN| {worst_l:.1e} (< 1e-8); "
              f"20 points max |grad - central diff| {worst_g:.1e} (< 1e-5)")


class _Count:
    def __init__(self, fn):
        self.fn = fn
        self.n = 0

    def __call__(self, x):
        self.n += 1
        return self.fn(x)


def test_c06_evaluation_counts(criterion):
    details, ok = [], True
    for m in (1, 3, 7):
        theta = np.linspace(0.2, 1.4, m)
        f = _Count(lambda x: float(np.sum(np.exp(x)) + np.prod(x)))
        f0 = f(theta)
        f.n = 0
        numeric_derivatives(f, theta, f0)
        g = _Count(lambda x: np.exp(x))
        hessian_from_gradient(g, theta)
        ok &= f.n == 2 * m + m * (m + 1) // 2 and g.n == 2 * m
        details.append(f"m={m}: {f.n} evals / {g.n} gradient calls")
    criterion(6, "evaluation-count law", ok, "; ".join(details))


def test_c07_mle_arithmetic(criterion):
    (row,) = summary_rows([50.115], [0.426])
    p = chisq1_upper_tail(3.841459)
    ok = (abs(row.wald / 13839.36 - 1) < 5e-3 and abs(row.ci_low - 49.280) < 1e-3
          and abs(row.ci_high - 50.950) < 1e-3 and abs(p - 0.05) < 1e-6)
    criterion(7, "MLE summary arithmetic", ok,
              f"wald {row.wald:.2f} (13839.36 +- 0.5%), CI [{row.ci_low:.4f}, {row.ci_high:.4f}], "
              f"P(chi2_1 > 3.841459) = {p:.8f}")


def test_c08_wild_grid_search(criterion):
    problem = wild_problem()
    t0 = time.perf_counter()
    _, reports = gridsearch(problem, -50.0, 50.0, 200, OptimizerConfig())
    elapsed = time.perf_counter() - t0
    best = min((r for r in reports if r.istop == CONVERGED), key=lambda r: r.fn_value)
    ok = (abs(best.fn_value - 67.4677) < 1e-3 and abs(best.b[0] + 15.8152) < 1e-3
          and elapsed < 5.0)
    criterion(8, "Wild grid search", ok,
              f"best f {best.fn_value:.6f} at x = {best.b[0]:.6f} "
              f"(67.4677 at -15.8152, +-1e-3), {elapsed:.2f} s (< 5 s)")


def test_c09_parallel_determinism_and_speedup(criterion):
    data = simulate_lmm(seed=1)
    problem = lmm_problem(data, analytic=False)
    problem.objective = BusyObjective(problem.objective, 0.002)
    walls, reps = [], []
    for n in (1, 2):
        t0 = time.perf_counter()
        reps.append(maximize(problem, config=OptimizerConfig(nproc=n, backend="process")))
        walls.append(time.perf_counter() - t0)
    identical = np.array_equal(reps[0].b, reps[1].b) and _same_iterates(*reps)
    speedup = walls[0] / walls[1]
    detail = (f"bitwise-identical optima: {identical}; nproc=2 speedup {speedup:.2f} "
              f"({walls[0]:.2f} s -> {walls[1]:.2f} s)")
    if _cpus() < 2:
        record(9, "parallel determinism and speedup", "SKIP" if identical else "FAIL",
               detail + "; speedup not assessed on a single-core host")
        assert identical
        pytest.skip("speedup needs at least two cores; determinism verified")
    criterion(9, "parallel determinism and speedup", identical and speedup >= 1.5,
              detail + " (>= 1.5)")


def test_c10_duality(criterion, seed1):
    def rosen(x):
        return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2

    start = np.array([-1.2, 1.0])
    r_max = maximize(Problem("neg_rosen", 2, lambda x: -rosen(x), x0=start))
    r_min = minimize(Problem("rosen", 2, rosen, x0=start))
    lmm = lmm_problem(seed1)
    neg = Problem("neg_lmm", 7, lambda b: -loglik_lmm(b, seed1),
                  gradient=lambda b: -grad_lmm(b, seed1), x0=lmm.x0)
    l_max, l_min = maximize(lmm), minimize(neg)
    ok = _same_iterates(r_max, r_min) and _same_iterates(l_max, l_min)
    criterion(10, "maximize/minimize duality", ok,
              f"-Rosenbrock {len(r_max.trace)} iterates, LMM {len(l_max.trace)} iterates, "
              f"bitwise identical: {ok}")


def test_c11_scale_robustness(criterion, seed1):
    base = maximize(lmm_problem(seed1))
    start = lmm_problem(seed1).x0
    diffs = []
    for c in (0.1, 10.0):
        rep = maximize(lmm_problem(seed1.scaled(c), start=start * c))
        corrected = rep.fn_value + seed1.n_obs * math.log(c)
        diffs.append((c, rep.istop, corrected - base.fn_value))
    ok = all(istop == CONVERGED and abs(d) < 1e-3 for _, istop, d in diffs)
    criterion(11, "scale robustness", ok,
              "; ".join(f"scale {c:g}: istop {s}, corrected loglik diff {d:.1e}" for c, s, d in diffs)
              + " (< 1e-3)")
