"""Minimize the Rosenbrock function and read the convergence report.

The optimizer stops only when three criteria hold together: the squared
parameter step, the change in objective and the relative distance to the
minimum (RDM) all fall below their thresholds.  The RDM uses the inverse
Hessian, so a run can never stop at a saddle point.

Run with ``python demos/quickstart.py``.
"""
import numpy as np

from levmarq import mla
from levmarq.cli import format_report


def rosenbrock(x):
    return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2


def rosenbrock_grad(x):
    return np.array([
        -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
        200.0 * (x[1] - x[0] ** 2),
    ])


# Derivatives by finite differences: 2m + m(m+1)/2 = 7 evaluations per pass.
numeric = mla([-1.2, 1.0], rosenbrock)
print(format_report(numeric))

# With an analytic gradient only the Hessian is differenced (2m gradient calls).
analytic = mla([-1.2, 1.0], rosenbrock, gr=rosenbrock_grad)
print(f"analytic gradient: istop={analytic.istop} ni={analytic.ni} "
      f"b={np.round(analytic.b, 6)} f={analytic.fn_value:.3e}")

# Print every fifth iteration while running.
mla([-1.2, 1.0], rosenbrock, print_every=5)
