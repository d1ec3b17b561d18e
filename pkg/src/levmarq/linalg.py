"""Dense symmetric linear algebra on packed storage.

Symmetric matrices are stored as the upper triangle in row-major order, so
a matrix of dimension ``m`` takes ``m * (m + 1) / 2`` numbers.  Cholesky
factors are stored packed as well (lower triangle, row-major).

Only what the optimizer needs is provided: a positive-definiteness test by
factorization, linear solves, inversion and the quadratic form
``g' A^{-1} g``.  There is deliberately no pivoting: an indefinite matrix is
reported as a failed factorization, never solved through.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidInputError",
    "ContractViolation",
    "PackedSymmetric",
    "Factorization",
    "packed_size",
    "packed_index",
    "cholesky",
    "solve",
    "invert",
    "quadratic_form",
]

_EPS = np.finfo(float).eps


class InvalidInputError(ValueError):
    """Raised when a matrix or vector contains non-finite entries."""


class ContractViolation(RuntimeError):
    """Raised when an operation is called on a failed factorization."""


def packed_size(dim: int) -> int:
    return dim * (dim + 1) // 2


def packed_index(i: int, j: int, dim: int) -> int:
    """Position of element ``(i, j)`` in upper row-major packed storage.

    The pair is symmetrized first, so ``packed_index(i, j) ==
    packed_index(j, i)``.
    """
    if i > j:
        i, j = j, i
    return i * dim - i * (i - 1) // 2 + (j - i)


def _lower_index(i: int, j: int) -> int:
    # lower row-major, j <= i
    return i * (i + 1) // 2 + j


@dataclass(frozen=True)
class PackedSymmetric:
    """Symmetric ``dim x dim`` matrix holding only its upper triangle.

    Parameters
    ----------
    dim : int
        Matrix dimension.
    data : ndarray
        The ``dim * (dim + 1) / 2`` upper-triangle entries, row by row.
    """

    dim: int
    data: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        data = np.array(self.data, dtype=float).reshape(-1)
        if data.size != packed_size(self.dim):
            raise ValueError(
                f"packed data of length {data.size} does not match dim "
                f"{self.dim} (expected {packed_size(self.dim)})"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_dense(cls, a) -> "PackedSymmetric":
        """Pack the upper triangle of a square array (lower part ignored)."""
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        rows, cols = np.triu_indices(a.shape[0])
        return cls(a.shape[0], a[rows, cols])

    @classmethod
    def identity(cls, dim: int) -> "PackedSymmetric":
        return cls.from_dense(np.eye(dim))

    @classmethod
    def diagonal(cls, values) -> "PackedSymmetric":
        return cls.from_dense(np.diag(np.asarray(values, dtype=float)))

    def get(self, i: int, j: int) -> float:
        return float(self.data[packed_index(i, j, self.dim)])

    def diag_indices(self) -> np.ndarray:
        """Positions of the diagonal entries inside ``data``."""
        i = np.arange(self.dim)
        return i * self.dim - i * (i - 1) // 2

    def diag(self) -> np.ndarray:
        return self.data[self.diag_indices()].copy()

    def trace(self) -> float:
        return float(self.data[self.diag_indices()].sum())

    def to_dense(self) -> np.ndarray:
        out = np.empty((self.dim, self.dim))
        rows, cols = np.triu_indices(self.dim)
        out[rows, cols] = self.data
        out[cols, rows] = self.data
        return out

    def matvec(self, x) -> np.ndarray:
        return self.to_dense() @ np.asarray(x, dtype=float)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))


@dataclass(frozen=True)
class Factorization:
    """Result of :func:`cholesky`.

    ``lower`` holds the packed lower-triangular factor ``L`` (row-major)
    when ``success`` is true; on failure its content is unspecified.
    """

    dim: int
    lower: np.ndarray
    success: bool

    def lower_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        rows, cols = np.tril_indices(self.dim)
        out[rows, cols] = self.lower
        return out


def cholesky(a: PackedSymmetric) -> Factorization:
    """Cholesky factorization used as a positive-definiteness test.

    A pivot is accepted only if it exceeds ``dim * eps * max(diag(a))``,
    which rejects numerically singular matrices independently of scale.

    Raises
    ------
    InvalidInputError
        If ``a`` has non-finite entries.
    """
    if not a.is_finite():
        raise InvalidInputError("cholesky: matrix has non-finite entries")
    m = a.dim
    dense = a.to_dense()
    lower = np.zeros(packed_size(m))
    max_diag = float(np.max(np.diag(dense)))
    if max_diag <= 0.0:
        return Factorization(m, lower, False)
    threshold = m * _EPS * max_diag

    L = np.zeros((m, m))
    for j in range(m):
        pivot = dense[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > threshold:
            return Factorization(m, lower, False)
        ljj = np.sqrt(pivot)
        L[j, j] = ljj
        if j + 1 < m:
            L[j + 1:, j] = (dense[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / ljj

    rows, cols = np.tril_indices(m)
    lower[:] = L[rows, cols]
    return Factorization(m, lower, True)


def _require(f: Factorization):
    if not f.success:
        raise ContractViolation("operation requires a successful factorization")


def solve(f: Factorization, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` given the Cholesky factor of ``A``."""
    _require(f)
    b = np.asarray(rhs, dtype=float)
    if b.shape != (f.dim,):
        raise ValueError(f"rhs must have shape ({f.dim},), got {b.shape}")
    if not np.all(np.isfinite(b)):
        raise InvalidInputError("solve: rhs has non-finite entries")
    m = f.dim
    L = f.lower
    # forward substitution: L y = b
    y = np.empty(m)
    for i in range(m):
        row = i * (i + 1) // 2
        y[i] = (b[i] - L[row:row + i] @ y[:i]) / L[row + i]
    # back substitution: L' x = y
    x = np.empty(m)
    for i in range(m - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, m):
            s -= L[_lower_index(k, i)] * x[k]
        x[i] = s / L[_lower_index(i, i)]
    return x


def invert(a: PackedSymmetric) -> PackedSymmetric | None:
    """Inverse of a positive definite matrix, or ``None`` if it is not PD."""
    f = cholesky(a)
    if not f.success:
        return None
    m = a.dim
    cols = np.column_stack([solve(f, e) for e in np.eye(m)])
    cols = 0.5 * (cols + cols.T)
    return PackedSymmetric.from_dense(cols)


def quadratic_form(f: Factorization, g) -> float:
    """``g' A^{-1} g`` computed as ``g' solve(f, g)``."""
    g = np.asarray(g, dtype=float)
    return float(g @ solve(f, g))
