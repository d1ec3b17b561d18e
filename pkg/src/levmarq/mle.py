"""Maximum-likelihood summaries from an optimizer report.

For a maximized log-likelihood the optimizer's ``v`` (inverse Hessian of the
negated log-likelihood at the optimum) is the variance-covariance estimate.
Standard errors, squared Wald statistics with chi-square(1) p-values and
95% Wald intervals follow from it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import PackedSymmetric
from .optimizer import OptimReport

__all__ = [
    "Z975",
    "VcovError",
    "MleRow",
    "MleSummary",
    "chisq1_upper_tail",
    "vcov_from_report",
    "summarize",
    "summary_rows",
]

Z975 = 1.959964


class VcovError(ValueError):
    """No usable variance-covariance matrix.

    ``indices`` lists the parameters with a non-positive variance (often
    parameters sitting on a boundary); it is empty when the Hessian itself
    could not be inverted.
    """

    def __init__(self, message: str, indices=()):
        super().__init__(message)
        self.indices = list(indices)


@dataclass(frozen=True)
class MleRow:
    coef: float
    se: float
    wald: float
    p: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class MleSummary:
    rows: list[MleRow]
    loglik: float
    vcov: PackedSymmetric

    def table(self) -> np.ndarray:
        """Rows as an array with columns coef, se, wald, p, ci_low, ci_high."""
        return np.array([[r.coef, r.se, r.wald, r.p, r.ci_low, r.ci_high] for r in self.rows])


def chisq1_upper_tail(x: float) -> float:
    """``P(X > x)`` for ``X ~ chi-square(1)``, i.e. ``erfc(sqrt(x / 2))``."""
    if not x >= 0:
        raise ValueError(f"chi-square statistic must be >= 0, got {x!r}")
    return math.erfc(math.sqrt(x / 2.0))


def vcov_from_report(report: OptimReport) -> PackedSymmetric:
    if report.v is None:
        raise VcovError("Hessian is not invertible at the optimum; no variance-covariance matrix")
    diag = report.v.diag()
    bad = [int(i) for i in np.flatnonzero(~(diag > 0))]
    if bad:
        raise VcovError(
            f"non-positive variance for parameter(s) {bad}; consider fixing them "
            "(they may be on the boundary of the parameter space)",
            bad,
        )
    return report.v


def summary_rows(coef, se) -> list[MleRow]:
    rows = []
    for c, s in zip(np.asarray(coef, dtype=float), np.asarray(se, dtype=float)):
        wald = (c / s) ** 2
        rows.append(MleRow(
            coef=float(c), se=float(s), wald=float(wald),
            p=chisq1_upper_tail(wald),
            ci_low=float(c - Z975 * s), ci_high=float(c + Z975 * s),
        ))
    return rows


def summarize(report: OptimReport) -> MleSummary:
    """Per-parameter coefficient table for a log-likelihood maximization.

    Raises
    ------
    VcovError
        If the variance-covariance matrix is unavailable.
    """
    vcov = vcov_from_report(report)
    se = np.sqrt(vcov.diag())
    return MleSummary(summary_rows(report.b, se), float(report.fn_value), vcov)
