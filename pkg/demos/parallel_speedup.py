"""Wall-clock effect of evaluating derivative bumps on several workers.

Each objective call of the LMM is slowed by a 2 ms busy-wait, so the
``2m + m(m+1)/2 = 42`` evaluations of every derivative pass dominate.  The
process backend forks workers that inherit the objective; results are
assembled by index, so the optimum is bitwise identical for every worker
count.  The speedup depends on the cores available to this process.

Run with ``python demos/parallel_speedup.py``.
"""
import os

import numpy as np

from levmarq import OptimizerConfig
from levmarq.cli import bench
from levmarq.problems import simulate_lmm

cores = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
print(f"cores available: {cores}")
results = bench(simulate_lmm(seed=1), [1, 2, 4], 0.002,
                OptimizerConfig(minimize=False, backend="process"))
ref_wall, ref = results[0][1], results[0][2]
for n, wall, rep in results:
    print(f"nproc={n}: {wall:6.2f} s  speedup {ref_wall / wall:4.2f}  "
          f"identical optimum: {np.array_equal(rep.b, ref.b)}")
