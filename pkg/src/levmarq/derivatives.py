"""Finite-difference gradients and Hessians evaluated over a worker pool.

Steps are ``h_j = max(1e-7, 1e-4 * |theta_j|)``.  The gradient uses central
differences (``2m`` evaluations); the Hessian uses forward differences on
double bumps and reuses the forward single bumps of the gradient pass, so a
full pass costs ``2m + m(m+1)/2`` objective evaluations on top of
``f(theta)``.  With an analytic gradient the Hessian is obtained by central
differences of the gradient (``2m`` gradient calls).

Every pass builds its list of evaluation points up front and hands it to the
pool in one batch; assembly happens afterwards in a fixed order, so results
do not depend on the number of workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import PackedSymmetric, packed_size
from .parallel import WorkerPool

__all__ = [
    "BLINDING_SENTINEL",
    "BlindingPolicy",
    "DerivativeError",
    "BatchEvaluationError",
    "DiffPlan",
    "EvalBatchResult",
    "fd_step",
    "fd_steps",
    "diff_plan",
    "evaluate_batch",
    "numeric_gradient",
    "numeric_hessian",
    "numeric_derivatives",
    "hessian_from_gradient",
]

BLINDING_SENTINEL = 500_000.0

_INLINE = WorkerPool(1)


class DerivativeError(RuntimeError):
    """A derivative could not be formed because an evaluation was not finite.

    Attributes
    ----------
    index : int
        Parameter index whose bump produced the non-finite value.
    """

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class BatchEvaluationError(RuntimeError):
    """One or more evaluations in a batch raised."""

    def __init__(self, message: str, indices: list[int]):
        super().__init__(message)
        self.indices = indices


@dataclass(frozen=True)
class BlindingPolicy:
    """Substitute ``sentinel`` for non-finite objective values when enabled."""

    enabled: bool = True
    sentinel: float = BLINDING_SENTINEL


NO_BLINDING = BlindingPolicy(enabled=False)


@dataclass
class DiffPlan:
    """Evaluation points of one derivative pass.

    ``eval_points`` rows are ordered: forward single bumps ``theta + h_j e_j``
    (``j = 0..m-1``), backward single bumps ``theta - h_j e_j``, then (numeric
    Hessian only) double bumps ``theta + h_i e_i + h_j e_j`` for ``i <= j`` in
    packed order.
    """

    m: int
    steps: np.ndarray
    eval_points: np.ndarray
    hessian_pairs: list[tuple[int, int]] = field(default_factory=list)

    @property
    def n_points(self) -> int:
        return len(self.eval_points)


@dataclass
class EvalBatchResult:
    values: np.ndarray
    n_nonfinite: int
    blinded: np.ndarray


def fd_step(theta_j: float) -> float:
    """Finite-difference step for one parameter value."""
    return max(1e-7, 1e-4 * abs(theta_j))


def fd_steps(theta) -> np.ndarray:
    return np.maximum(1e-7, 1e-4 * np.abs(np.asarray(theta, dtype=float)))


def diff_plan(theta, hessian: bool = True) -> DiffPlan:
    """Build the point list for a derivative pass at ``theta``.

    With ``hessian=False`` only the ``2m`` single bumps are included (numeric
    gradient alone, or the analytic-gradient Hessian path).
    """
    theta = np.asarray(theta, dtype=float)
    m = theta.size
    h = fd_steps(theta)
    bumps = np.diag(h)
    points = [theta + bumps, theta - bumps]
    pairs = []
    if hessian:
        pairs = [(i, j) for i in range(m) for j in range(i, m)]
        double = np.array([theta + bumps[i] + bumps[j] for i, j in pairs])
        points.append(double)
    return DiffPlan(m, h, np.vstack(points), pairs)


class _Guarded:
    # Wraps a callable so worker failures come back as values; keeps a
    # picklable error message for the process backend.
    def __init__(self, fn):
        self.fn = fn

    @property
    def pool_identity(self):
        return self.fn

    def __call__(self, x):
        try:
            return True, self.fn(x)
        except Exception as exc:  # noqa: BLE001 - reported by index below
            return False, f"{type(exc).__name__}: {exc}"


def evaluate_batch(
    f: Callable[[np.ndarray], float],
    points,
    pool: WorkerPool | None = None,
    blinding: BlindingPolicy = NO_BLINDING,
) -> EvalBatchResult:
    """Evaluate a scalar objective at every row of ``points``.

    Results are index-aligned with ``points``.  When blinding is enabled,
    non-finite values are replaced by the sentinel and flagged.

    Raises
    ------
    BatchEvaluationError
        If any evaluation raised; the error names every failed index.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) == 0:
        raise ValueError("evaluate_batch needs at least one point")
    pool = pool or _INLINE
    out = pool.map(_Guarded(f), list(points))
    failed = [i for i, (ok, _) in enumerate(out) if not ok]
    if failed:
        detail = "; ".join(f"[{i}] {out[i][1]}" for i in failed[:5])
        raise BatchEvaluationError(
            f"{len(failed)} evaluation(s) failed at indices {failed}: {detail}",
            failed,
        )
    values = np.array([float(v) for _, v in out])
    nonfinite = ~np.isfinite(values)
    blinded = np.zeros(len(values), dtype=bool)
    if blinding.enabled and nonfinite.any():
        values[nonfinite] = blinding.sentinel
        blinded = nonfinite.copy()
    return EvalBatchResult(values, int(nonfinite.sum()), blinded)


def _evaluate_vectors(g, points, pool, m) -> np.ndarray:
    pool = pool or _INLINE
    out = pool.map(_Guarded(g), list(points))
    failed = [i for i, (ok, _) in enumerate(out) if not ok]
    if failed:
        detail = "; ".join(f"[{i}] {out[i][1]}" for i in failed[:5])
        raise BatchEvaluationError(
            f"{len(failed)} gradient call(s) failed at indices {failed}: {detail}",
            failed,
        )
    rows = [np.asarray(v, dtype=float).reshape(-1) for _, v in out]
    for i, r in enumerate(rows):
        if r.size != m:
            raise ValueError(f"gradient returned length {r.size}, expected {m}")
    return np.vstack(rows)


def _check_finite(values, plan: DiffPlan):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size == 0:
        return
    k = int(bad[0])
    m = plan.m
    if k < 2 * m:
        j = k % m
    else:
        j = plan.hessian_pairs[k - 2 * m][1]
    raise DerivativeError(
        f"non-finite objective value at bump point {k} (parameter {j})", j
    )


def _gradient_from(values, plan: DiffPlan) -> np.ndarray:
    m = plan.m
    return (values[:m] - values[m:2 * m]) / (2.0 * plan.steps)


def _hessian_from(values, forward, f0, plan: DiffPlan) -> PackedSymmetric:
    h = plan.steps
    data = np.empty(packed_size(plan.m))
    for k, (i, j) in enumerate(plan.hessian_pairs):
        data[k] = (values[k] - forward[i] - forward[j] + f0) / (h[i] * h[j])
    return PackedSymmetric(plan.m, data)


def numeric_gradient(f, theta, pool: WorkerPool | None = None,
                     blinding: BlindingPolicy = NO_BLINDING) -> np.ndarray:
    """Central-difference gradient (``2m`` evaluations).

    Raises
    ------
    DerivativeError
        If a bump evaluates non-finite and blinding is disabled.
    """
    plan = diff_plan(theta, hessian=False)
    res = evaluate_batch(f, plan.eval_points, pool, blinding)
    _check_finite(res.values, plan)
    return _gradient_from(res.values, plan)


def numeric_hessian(f, theta, f0: float, single_bumps,
                    pool: WorkerPool | None = None,
                    blinding: BlindingPolicy = NO_BLINDING) -> PackedSymmetric:
    """Forward-difference Hessian from double bumps.

    ``single_bumps[j]`` must hold ``f(theta + h_j e_j)``; only the
    ``m(m+1)/2`` double bumps are evaluated here.
    """
    plan = diff_plan(theta, hessian=True)
    m = plan.m
    forward = np.asarray(single_bumps, dtype=float)
    if forward.shape != (m,):
        raise ValueError(f"single_bumps must have length {m}")
    double = plan.eval_points[2 * m:]
    res = evaluate_batch(f, double, pool, blinding)
    if not np.all(np.isfinite(res.values)):
        k = int(np.flatnonzero(~np.isfinite(res.values))[0])
        j = plan.hessian_pairs[k][1]
        raise DerivativeError(f"non-finite objective at double bump {k} (parameter {j})", j)
    return _hessian_from(res.values, forward, f0, plan)


def numeric_derivatives(f, theta, f0: float, pool: WorkerPool | None = None,
                        blinding: BlindingPolicy = NO_BLINDING):
    """Gradient and Hessian in a single batch of ``2m + m(m+1)/2`` evaluations.

    Returns
    -------
    grad : ndarray
    hess : PackedSymmetric
    n_evals : int
    n_blinded : int
    """
    plan = diff_plan(theta, hessian=True)
    m = plan.m
    res = evaluate_batch(f, plan.eval_points, pool, blinding)
    _check_finite(res.values, plan)
    v = res.values
    grad = _gradient_from(v, plan)
    hess = _hessian_from(v[2 * m:], v[:m], f0, plan)
    return grad, hess, plan.n_points, int(res.blinded.sum())


def hessian_from_gradient(g, theta, pool: WorkerPool | None = None) -> PackedSymmetric:
    """Hessian by central differences of an analytic gradient.

    Column ``j`` is ``(g(theta + h_j e_j) - g(theta - h_j e_j)) / (2 h_j)``;
    the raw matrix is symmetrized as ``(H + H') / 2`` before packing.
    Uses exactly ``2m`` gradient calls.
    """
    plan = diff_plan(theta, hessian=False)
    m = plan.m
    rows = _evaluate_vectors(g, plan.eval_points, pool, m)
    bad = np.argwhere(~np.isfinite(rows))
    if bad.size:
        k, comp = (int(x) for x in bad[0])
        raise DerivativeError(
            f"non-finite gradient component {comp} at bump point {k}", k % m
        )
    raw = ((rows[:m] - rows[m:]) / (2.0 * plan.steps)[:, None]).T
    return PackedSymmetric.from_dense(0.5 * (raw + raw.T))
