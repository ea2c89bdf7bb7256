"""Dense matrix kernels and linear least squares.

The Gauss-Newton step is computed as the minimum-norm solution of
``min ||A x - b||_2`` via singular value decomposition.  Kernels are backed
by LAPACK through numpy/scipy; this module pins the contracts (shape and
finiteness validation, rcond semantics, result metadata) and provides the
alternate solver families (QR, full SVD, normal equations) used by the
least-squares sensitivity study.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class LinalgError(ValueError):
    pass


@dataclass(frozen=True)
class DenseMatrix:
    """Row-major dense matrix of 64-bit floats.

    ``data`` holds rows*cols entries; all entries must be finite on
    construction.
    """

    rows: int
    cols: int
    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64).ravel())
        object.__setattr__(self, "data", data)
        if self.rows < 0 or self.cols < 0 or self.rows * self.cols != data.size:
            raise LinalgError(
                f"shape ({self.rows}, {self.cols}) inconsistent with {data.size} entries"
            )
        if not np.isfinite(data).all():
            raise LinalgError("non-finite entries in matrix")

    @classmethod
    def from_array(cls, a) -> "DenseMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise LinalgError(f"expected 2-d array, got ndim={a.ndim}")
        return cls(a.shape[0], a.shape[1], a.ravel())

    def as_array(self) -> np.ndarray:
        return self.data.reshape(self.rows, self.cols)


@dataclass(frozen=True)
class LstsqResult:
    """Minimum-norm least-squares solution plus rank/spectrum metadata."""

    solution: np.ndarray
    effective_rank: int
    singular_values: np.ndarray = field(default_factory=lambda: np.empty(0))


def _as_2d(A) -> np.ndarray:
    if isinstance(A, DenseMatrix):
        return A.as_array()
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise LinalgError(f"expected matrix, got ndim={A.ndim}")
    return A


def _check_system(A: np.ndarray, b: np.ndarray):
    if b.ndim != 1:
        raise LinalgError("right-hand side must be a vector")
    if A.shape[0] != b.size:
        raise LinalgError(f"A has {A.shape[0]} rows but b has {b.size} entries")
    if not np.isfinite(A).all():
        raise LinalgError("non-finite entries in matrix")
    if not np.isfinite(b).all():
        raise LinalgError("non-finite entries in right-hand side")


def default_rcond(rows: int, cols: int) -> float:
    return np.finfo(np.float64).eps * max(rows, cols)


def svd_lstsq(A, b, rcond: float | None = None) -> LstsqResult:
    """Minimum-norm minimizer of ||Ax - b||_2 via divide-and-conquer SVD.

    Singular values below ``rcond * sigma_max`` are treated as zero.  The
    default rcond is machine epsilon times max(rows, cols).
    """
    A = _as_2d(A)
    b = np.asarray(b, dtype=np.float64).ravel()
    _check_system(A, b)
    if rcond is None:
        rcond = default_rcond(*A.shape)
    if rcond < 0:
        raise LinalgError("rcond must be nonnegative")
    x, _, rank, sv = np.linalg.lstsq(A, b, rcond=rcond)
    return LstsqResult(solution=x, effective_rank=int(rank), singular_values=sv)


def svd_full_lstsq(A, b, rcond: float | None = None) -> LstsqResult:
    """Same contract as svd_lstsq but using the full (non-D&C) SVD driver."""
    A = _as_2d(A)
    b = np.asarray(b, dtype=np.float64).ravel()
    _check_system(A, b)
    if rcond is None:
        rcond = default_rcond(*A.shape)
    x, _, rank, sv = scipy.linalg.lstsq(A, b, cond=rcond, lapack_driver="gelss")
    return LstsqResult(solution=x, effective_rank=int(rank), singular_values=sv)


def qr_lstsq(A, b, rcond: float | None = None) -> LstsqResult:
    """Least squares via unpivoted QR (triangular back-substitution).

    No rank handling: near-singular triangular factors produce large or
    non-finite solutions, which is exactly the failure mode the solver
    comparison study probes.  ``rcond`` is accepted for interface parity
    and ignored.
    """
    A = _as_2d(A)
    b = np.asarray(b, dtype=np.float64).ravel()
    _check_system(A, b)
    q, r = np.linalg.qr(A, mode="reduced")
    rhs = q.T @ b
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = scipy.linalg.solve_triangular(r, rhs, lower=False, check_finite=False)
    return LstsqResult(solution=x, effective_rank=min(A.shape))


def normal_lstsq(A, b, rcond: float | None = None) -> LstsqResult:
    """Least squares via the normal equations (A^T A) x = A^T b."""
    A = _as_2d(A)
    b = np.asarray(b, dtype=np.float64).ravel()
    _check_system(A, b)
    gram = A.T @ A
    rhs = A.T @ b
    try:
        x = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        x = np.full(A.shape[1], np.nan)
    return LstsqResult(solution=x, effective_rank=min(A.shape))


#: Alternate LLS algorithms for the solver sensitivity study.
LSTSQ_SOLVERS = {
    "svd": svd_lstsq,
    "svd-full": svd_full_lstsq,
    "qr": qr_lstsq,
    "normal": normal_lstsq,
}


def get_lstsq_solver(name: str):
    try:
        return LSTSQ_SOLVERS[name]
    except KeyError:
        raise LinalgError(
            f"unknown lstsq solver {name!r}; choose from {sorted(LSTSQ_SOLVERS)}"
        ) from None


def matvec(A, v) -> np.ndarray:
    A = _as_2d(A)
    v = np.asarray(v, dtype=np.float64).ravel()
    if A.shape[1] != v.size:
        raise LinalgError(f"A has {A.shape[1]} cols but v has {v.size} entries")
    return A @ v


def matmul(A, B) -> DenseMatrix:
    A, B = _as_2d(A), _as_2d(B)
    if A.shape[1] != B.shape[0]:
        raise LinalgError(f"inner dimensions differ: {A.shape} @ {B.shape}")
    return DenseMatrix.from_array(A @ B)


def transpose(A) -> DenseMatrix:
    return DenseMatrix.from_array(_as_2d(A).T)


def condition_number(A) -> float:
    sv = np.linalg.svd(_as_2d(A), compute_uv=False)
    if sv.size == 0 or sv[-1] == 0.0:
        return np.inf
    return float(sv[0] / sv[-1])


def solve_checked(A, b, max_condition: float = 1e12) -> np.ndarray:
    """Direct solve for small build-time systems with a singularity guard."""
    A = _as_2d(A)
    b = np.asarray(b, dtype=np.float64)
    cond = condition_number(A)
    if not np.isfinite(cond) or cond > max_condition:
        raise LinalgError(
            f"constraint matrix is singular or near-singular (condition number {cond:.3e})"
        )
    return np.linalg.solve(A, b)
