"""Linear mixed model with a Gaussian random intercept.

For subject ``i`` with ``n_i`` measurements,

    y_i ~ N(X_i beta, V_i),   V_i = sigma_e**2 I + sigma_u**2 11',

and the parameter vector is laid out as ``[beta..., sigma_u, sigma_e]``.
The standard deviations enter only through their squares, so the parameter
space is unconstrained and the likelihood is invariant to their signs.

Per-subject terms use the rank-one structure of ``V_i``:

    log|V| = (n - 1) log(se2) + log(se2 + n su2)
    V^{-1} r = r / se2 - su2 / (se2 (se2 + n su2)) * sum(r) * 1

so nothing larger than a vector of length ``n_i`` is ever formed.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass

import numpy as np

from ..optimizer import Problem

__all__ = [
    "LmmData",
    "CsvFormatError",
    "LMM_CSV_HEADER",
    "loglik_lmm",
    "grad_lmm",
    "simulate_lmm",
    "lmm_problem",
    "design_matrix",
    "read_lmm_csv",
    "write_lmm_csv",
    "DEFAULT_BETA",
    "DEFAULT_SIGMA_U",
    "DEFAULT_SIGMA_E",
]

_LOG_2PI = math.log(2.0 * math.pi)

LMM_CSV_HEADER = ("i", "t", "X1", "X3", "Y")

# values of the same order as the published fit of the example dataset
DEFAULT_BETA = (50.0, 0.1, 2.4, 2.9, -0.4)
DEFAULT_SIGMA_U = 5.6
DEFAULT_SIGMA_E = 3.0


class CsvFormatError(ValueError):
    """The LMM CSV file does not have the expected layout."""


@dataclass(frozen=True)
class LmmData:
    """Stacked longitudinal data, rows ordered by subject.

    Attributes
    ----------
    y : ndarray, shape (N,)
    x : ndarray, shape (N, p)
    ni : ndarray of int, shape (n_subjects,)
        Number of rows of each subject, in order.
    """

    y: np.ndarray
    x: np.ndarray
    ni: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        ni = np.asarray(self.ni, dtype=np.int64).reshape(-1)
        if np.any(ni < 1):
            raise ValueError("every subject needs at least one measurement")
        if ni.sum() != y.size or x.shape[0] != y.size:
            raise ValueError(
                f"inconsistent sizes: sum(ni)={ni.sum()}, len(y)={y.size}, rows(x)={x.shape[0]}"
            )
        for arr in (y, x, ni):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "ni", ni)
        object.__setattr__(self, "_subject", np.repeat(np.arange(ni.size), ni))

    @property
    def n_subjects(self) -> int:
        return int(self.ni.size)

    @property
    def n_obs(self) -> int:
        return int(self.y.size)

    @property
    def n_params(self) -> int:
        return self.x.shape[1] + 2

    def subject_slices(self):
        ends = np.cumsum(self.ni)
        return [slice(int(e - n), int(e)) for n, e in zip(self.ni, ends)]

    def scaled(self, factor: float) -> "LmmData":
        """Same design, outcome multiplied by ``factor``."""
        return LmmData(self.y * factor, self.x, self.ni)


def _split(b, data: LmmData):
    b = np.asarray(b, dtype=float)
    p = data.x.shape[1]
    if b.size != p + 2:
        raise ValueError(f"expected {p + 2} parameters, got {b.size}")
    return b[:p], b[p], b[p + 1]


def _subject_sums(values, data: LmmData):
    return np.bincount(data._subject, weights=values, minlength=data.n_subjects)


def loglik_lmm(b, data: LmmData) -> float:
    """Log-likelihood at ``b = [beta..., sigma_u, sigma_e]``.

    Returns a non-finite value when ``sigma_e == 0`` makes the covariance
    singular (the optimizer's blinding handles it).
    """
    beta, su, se = _split(b, data)
    su2, se2 = su * su, se * se
    n = data.ni
    r = data.y - data.x @ beta
    s = _subject_sums(r, data)
    ss = _subject_sums(r * r, data)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = se2 + n * su2
        logdet = (n - 1) * np.log(se2) + np.log(denom)
        quad = ss / se2 - su2 / (se2 * denom) * s * s
        total = -0.5 * (data.n_obs * _LOG_2PI + logdet.sum() + quad.sum())
    return float(total)


def grad_lmm(b, data: LmmData) -> np.ndarray:
    """Analytic gradient of :func:`loglik_lmm`, same parameter layout."""
    beta, su, se = _split(b, data)
    su2, se2 = su * su, se * se
    n = data.ni
    r = data.y - data.x @ beta
    s = _subject_sums(r, data)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = se2 + n * su2
        c = su2 / (se2 * denom)
        # w = V^{-1} r, row-wise
        w = r / se2 - (c * s)[data._subject]
        g_beta = data.x.T @ w
        # d/d sigma_u: sigma_u * (sum(r)^2 / D^2 - n / D)
        g_su = su * np.sum(s * s / denom ** 2 - n / denom)
        # d/d sigma_e: sigma_e * (w'w - tr V^{-1})
        ww = _subject_sums(w * w, data)
        tr = n / se2 - n * su2 / (se2 * denom)
        g_se = se * np.sum(ww - tr)
    return np.concatenate([g_beta, [g_su, g_se]])


def design_matrix(t, x1, x3) -> np.ndarray:
    """Columns ``[1, t, X1, X3, t * X1]``."""
    t, x1, x3 = (np.asarray(a, dtype=float) for a in (t, x1, x3))
    return np.column_stack([np.ones_like(t), t, x1, x3, t * x1])


def simulate_lmm(n_subjects: int = 500, ni_each: int = 5, beta=DEFAULT_BETA,
                 sigma_u: float = DEFAULT_SIGMA_U, sigma_e: float = DEFAULT_SIGMA_E,
                 seed: int = 1, return_covariates: bool = False):
    """Simulate a balanced dataset with design ``[1, t, X1, X3, t * X1]``.

    ``t = 0..ni_each - 1``; ``X1 ~ Bernoulli(0.5)`` and ``X3 ~ N(0, 1)`` are
    drawn once per subject, followed by the random intercept and then the
    ``ni_each`` residuals, subject after subject.

    With ``return_covariates=True`` returns ``(data, covariates)`` where
    ``covariates`` has the columns of the CSV layout ``i, t, X1, X3``.
    """
    if n_subjects < 1 or ni_each < 1:
        raise ValueError("n_subjects and ni_each must be positive")
    if sigma_u < 0 or sigma_e < 0:
        raise ValueError("standard deviations must be non-negative")
    beta = np.asarray(beta, dtype=float)
    if beta.size != 5:
        raise ValueError("beta must have 5 entries for the [1, t, X1, X3, t*X1] design")
    rng = np.random.default_rng(seed)
    ids, ts, x1s, x3s, ys = [], [], [], [], []
    t = np.arange(ni_each, dtype=float)
    for i in range(n_subjects):
        x1 = float(rng.uniform() < 0.5)
        x3 = rng.standard_normal()
        u = sigma_u * rng.standard_normal()
        eps = sigma_e * rng.standard_normal(ni_each)
        xi = design_matrix(t, np.full(ni_each, x1), np.full(ni_each, x3))
        ys.append(xi @ beta + u + eps)
        ids.append(np.full(ni_each, i + 1))
        ts.append(t)
        x1s.append(np.full(ni_each, x1))
        x3s.append(np.full(ni_each, x3))
    cov = np.column_stack([np.concatenate(a) for a in (ids, ts, x1s, x3s)])
    data = LmmData(np.concatenate(ys), design_matrix(cov[:, 1], cov[:, 2], cov[:, 3]),
                   np.full(n_subjects, ni_each))
    return (data, cov) if return_covariates else data


def lmm_problem(data: LmmData, analytic: bool = True, name: str = "lmm",
                start=None) -> Problem:
    """Maximization problem for ``data`` starting at ``(0, ..., 0, 1, 1)``."""
    p = data.x.shape[1]
    x0 = np.r_[np.zeros(p), 1.0, 1.0] if start is None else np.asarray(start, dtype=float)
    return Problem(
        name=name,
        dim=p + 2,
        objective=_Bound(loglik_lmm, data),
        gradient=_Bound(grad_lmm, data) if analytic else None,
        sense="maximize",
        x0=x0,
        description="random-intercept linear mixed model log-likelihood",
    )


class _Bound:
    # picklable partial with a readable repr
    def __init__(self, fn, data):
        self.fn = fn
        self.data = data
        self.__name__ = fn.__name__

    def __call__(self, b):
        return self.fn(b, self.data)


def write_lmm_csv(path_or_buf, data: LmmData, covariates: np.ndarray | None = None):
    """Write ``i,t,X1,X3,Y`` rows.

    ``covariates`` (columns ``i, t, X1, X3``) defaults to the subject index and
    columns 2-4 of the design matrix.
    """
    if covariates is None:
        subj = np.repeat(np.arange(1, data.n_subjects + 1), data.ni)
        covariates = np.column_stack([subj, data.x[:, 1], data.x[:, 2], data.x[:, 3]])
    own = isinstance(path_or_buf, (str, os.PathLike))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh)
        w.writerow(LMM_CSV_HEADER)
        for (i, t, x1, x3), y in zip(covariates, data.y):
            w.writerow([int(i), repr(float(t)), repr(float(x1)), repr(float(x3)), repr(float(y))])
    finally:
        if own:
            fh.close()


def read_lmm_csv(path_or_buf) -> LmmData:
    """Read ``i,t,X1,X3,Y`` rows into :class:`LmmData` with design ``[1, t, X1, X3, t*X1]``.

    Rows of a subject must be contiguous.

    Raises
    ------
    CsvFormatError
        On a wrong header, a malformed row or non-contiguous subjects.
    """
    if isinstance(path_or_buf, (str, os.PathLike)):
        with open(path_or_buf, newline="") as fh:
            text = fh.read()
    else:
        text = path_or_buf.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != LMM_CSV_HEADER:
        raise CsvFormatError(
            f"expected header {','.join(LMM_CSV_HEADER)!r}, got "
            f"{','.join(header) if header else '<empty file>'!r}"
        )
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise CsvFormatError(f"line {lineno}: expected 5 fields, got {len(row)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            raise CsvFormatError(f"line {lineno}: {exc}") from None
    if not rows:
        raise CsvFormatError("no data rows")
    arr = np.array(rows)
    ids = arr[:, 0]
    change = np.flatnonzero(np.diff(ids) != 0) + 1
    starts = np.r_[0, change]
    if np.unique(ids[starts]).size != starts.size:
        raise CsvFormatError("rows of each subject must be contiguous")
    ni = np.diff(np.r_[starts, len(ids)])
    return LmmData(arr[:, 4], design_matrix(arr[:, 1], arr[:, 2], arr[:, 3]), ni)
