"""Small hand-made problems: the Wild function, a saddle, quadratics."""
from __future__ import annotations

import numpy as np

from ..linalg import PackedSymmetric
from ..optimizer import Problem

__all__ = [
    "wild",
    "wild_problem",
    "WILD_GLOBAL_MIN",
    "saddle_fixture",
    "quadratic_problem",
    "random_pd_quadratic",
]

# (f*, x*) as reported for a 200-start grid search
WILD_GLOBAL_MIN = (67.4677, -15.8152)


def wild(x) -> float:
    """``10 sin(0.3 x) sin(1.3 x^2) + 1e-5 x^4 + 0.2 x + 80``."""
    x = float(np.asarray(x, dtype=float).reshape(-1)[0])
    return 10.0 * np.sin(0.3 * x) * np.sin(1.3 * x * x) + 0.00001 * x ** 4 + 0.2 * x + 80.0


def wild_problem() -> Problem:
    return Problem(
        name="wild", dim=1, objective=wild, x0=np.array([0.0]),
        known_optimum=(WILD_GLOBAL_MIN[0], np.array([WILD_GLOBAL_MIN[1]])),
        description="multimodal 1-D function from the optim help page",
    )


def _saddle(x):
    return float(x[0] ** 2 - x[1] ** 2)


def _saddle_grad(x):
    return np.array([2.0 * x[0], -2.0 * x[1]])


def _saddle_hess(x):
    return np.diag([2.0, -2.0])


def saddle_fixture(analytic: bool = False) -> Problem:
    """``x^2 - y^2`` from ``(0.5, 0.3)``; saddle at the origin."""
    return Problem(
        name="saddle", dim=2, objective=_saddle,
        gradient=_saddle_grad if analytic else None,
        hessian=_saddle_hess if analytic else None,
        x0=np.array([0.5, 0.3]),
        description="x^2 - y^2, indefinite Hessian diag(2, -2)",
    )


class _Quadratic:
    def __init__(self, a, c):
        self.a = a
        self.c = c

    def value(self, x):
        r = np.asarray(x, dtype=float) - self.c
        return float(0.5 * r @ self.a @ r)

    def grad(self, x):
        return self.a @ (np.asarray(x, dtype=float) - self.c)

    def hess(self, x):
        return PackedSymmetric.from_dense(self.a)


def quadratic_problem(a, center, x0, analytic: bool = True, name: str = "quadratic") -> Problem:
    """``0.5 (x - c)' A (x - c)``, minimized at ``c`` with Hessian ``A``."""
    a = np.asarray(a, dtype=float)
    q = _Quadratic(a, np.asarray(center, dtype=float))
    return Problem(
        name=name, dim=a.shape[0], objective=q.value,
        gradient=q.grad if analytic else None,
        hessian=q.hess if analytic else None,
        x0=np.asarray(x0, dtype=float),
        known_optimum=(0.0, q.c.copy()),
    )


def random_pd_quadratic(rng: np.random.Generator, m: int, analytic: bool = True) -> Problem:
    """Random well-posed quadratic: ``A = M'M + m I`` with ``M`` standard normal."""
    mm = rng.standard_normal((m, m))
    a = mm.T @ mm + m * np.eye(m)
    center = rng.uniform(-5, 5, m)
    x0 = rng.uniform(-5, 5, m)
    return quadratic_problem(a, center, x0, analytic=analytic, name=f"quadratic{m}")
