"""Robust Marquardt-Levenberg optimization.

>>> import numpy as np
>>> from levmarq import mla
>>> rep = mla([0.0, 0.0], lambda x: (x[0] - 2) ** 2 + (x[1] + 1) ** 2)
>>> rep.istop, np.round(rep.b, 6).tolist()
(1, [2.0, -1.0])
"""
from .derivatives import (
    BLINDING_SENTINEL,
    BlindingPolicy,
    DerivativeError,
    evaluate_batch,
    fd_step,
    hessian_from_gradient,
    numeric_derivatives,
    numeric_gradient,
    numeric_hessian,
)
from .linalg import PackedSymmetric, cholesky, invert, quadratic_form, solve
from .mle import MleSummary, VcovError, chisq1_upper_tail, summarize, vcov_from_report
from .optimizer import (
    CONVERGED,
    INFLATION_FAILURE,
    MAXITER,
    NONFINITE,
    OptimizerConfig,
    OptimReport,
    Problem,
    inflate,
    line_search,
    maximize,
    minimize,
    mla,
    multiple_try_init,
    optimize,
    rdm,
)
from .parallel import WorkerPool

__version__ = "0.1.0"

__all__ = [
    "BLINDING_SENTINEL",
    "BlindingPolicy",
    "DerivativeError",
    "evaluate_batch",
    "fd_step",
    "hessian_from_gradient",
    "numeric_derivatives",
    "numeric_gradient",
    "numeric_hessian",
    "PackedSymmetric",
    "cholesky",
    "invert",
    "quadratic_form",
    "solve",
    "MleSummary",
    "VcovError",
    "chisq1_upper_tail",
    "summarize",
    "vcov_from_report",
    "CONVERGED",
    "INFLATION_FAILURE",
    "MAXITER",
    "NONFINITE",
    "OptimizerConfig",
    "OptimReport",
    "Problem",
    "inflate",
    "line_search",
    "maximize",
    "minimize",
    "mla",
    "multiple_try_init",
    "optimize",
    "rdm",
    "WorkerPool",
]
