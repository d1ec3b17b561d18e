"""Registry of test problems."""
from __future__ import annotations

from .fixtures import (
    WILD_GLOBAL_MIN,
    quadratic_problem,
    random_pd_quadratic,
    saddle_fixture,
    wild,
    wild_problem,
)
from .lmm import (
    LMM_CSV_HEADER,
    CsvFormatError,
    LmmData,
    grad_lmm,
    lmm_problem,
    loglik_lmm,
    read_lmm_csv,
    simulate_lmm,
    write_lmm_csv,
)
from .more import MORE_NAMES, more_suite

__all__ = [
    "WILD_GLOBAL_MIN",
    "quadratic_problem",
    "random_pd_quadratic",
    "saddle_fixture",
    "wild",
    "wild_problem",
    "LMM_CSV_HEADER",
    "CsvFormatError",
    "LmmData",
    "grad_lmm",
    "lmm_problem",
    "loglik_lmm",
    "read_lmm_csv",
    "simulate_lmm",
    "write_lmm_csv",
    "MORE_NAMES",
    "more_suite",
    "registry",
    "get_problem",
]


def registry() -> dict:
    """Name -> zero-argument factory for every runnable problem."""
    out = {p.name: (lambda p=p: p) for p in more_suite()}
    out["wild"] = wild_problem
    out["saddle"] = saddle_fixture
    out["lmm"] = lambda: lmm_problem(simulate_lmm(seed=1))
    return out


def get_problem(name: str):
    reg = registry()
    if name not in reg:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(sorted(reg))}")
    return reg[name]()
