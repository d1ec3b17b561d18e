"""Multi-start search on the Wild function.

``10 sin(0.3 x) sin(1.3 x^2) + 1e-5 x^4 + 0.2 x + 80`` has dozens of local
minima on [-50, 50].  A local optimizer started from 200 regularly spaced
points, keeping the best converged run, finds the global minimum near
x = -15.8152.

Run with ``python demos/wild_grid_search.py``.
"""
import numpy as np

from levmarq import CONVERGED, OptimizerConfig
from levmarq.cli import gridsearch
from levmarq.problems import wild_problem

problem = wild_problem()
starts, reports = gridsearch(problem, -50.0, 50.0, 200, OptimizerConfig())
ok = [r for r in reports if r.istop == CONVERGED]
best = min(ok, key=lambda r: r.fn_value)
minima = np.unique(np.round([r.b[0] for r in ok], 3))
print(f"{len(starts)} starts, {len(ok)} converged, {minima.size} distinct local minima")
print(f"best: f = {best.fn_value:.6f} at x = {best.b[0]:.6f}")
