"""Dense/sparse matrix primitives, norms, and a deterministic truncated SVD.

Everything is 64-bit and immutable after construction. Mat-vec accumulates
left-to-right within each row (see kernels), which keeps results reproducible
and invariant to dropping terms that are exactly zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConvergenceError, DimensionMismatch


@dataclass(frozen=True)
class DenseMatrix:
    """Row-major dense matrix of finite 64-bit reals."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C")
        if arr.ndim != 2:
            raise DimensionMismatch(f"dense matrix needs 2 dims, got {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("dense matrix contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def nnz(self) -> int:
        return int(np.count_nonzero(self.data))


@dataclass(frozen=True)
class SparseRowMatrix:
    """CSR storage; column indices strictly increasing per row, no stored zeros."""

    rows: int
    cols: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        indptr = np.array(self.indptr, dtype=np.int64, order="C")
        indices = np.array(self.indices, dtype=np.int64, order="C")
        values = np.array(self.values, dtype=np.float64, order="C")
        if indptr.shape != (self.rows + 1,) or indptr[0] != 0:
            raise DimensionMismatch("bad indptr")
        if indices.shape != values.shape or indices.shape != (int(indptr[-1]),):
            raise DimensionMismatch("indices/values length mismatch")
        if not np.all(np.isfinite(values)):
            raise ValueError("sparse matrix contains non-finite values")
        if np.any(values == 0.0):
            raise ValueError("sparse matrix stores an explicit zero")
        nnz = indices.size
        if nnz:
            if indices.min() < 0 or indices.max() >= self.cols:
                raise DimensionMismatch("column index out of range")
            if nnz > 1:
                increasing = np.diff(indices) > 0
                # pairs spanning a row boundary are exempt from the ordering
                bounds = indptr[1:-1]
                bounds = bounds[(bounds > 0) & (bounds < nnz)]
                increasing[bounds - 1] = True
                if not increasing.all():
                    raise ValueError("column indices not strictly increasing within a row")
        for name, arr in (("indptr", indptr), ("indices", indices), ("values", values)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_rows(cls, rows_data: list[tuple[np.ndarray, np.ndarray]], cols: int) -> "SparseRowMatrix":
        """Build from per-row (column-index array, value array) pairs."""
        indptr = np.zeros(len(rows_data) + 1, dtype=np.int64)
        idx_parts, val_parts = [], []
        for i, (cidx, vals) in enumerate(rows_data):
            indptr[i + 1] = indptr[i] + len(cidx)
            idx_parts.append(np.asarray(cidx, dtype=np.int64))
            val_parts.append(np.asarray(vals, dtype=np.float64))
        indices = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=np.int64)
        values = np.concatenate(val_parts) if val_parts else np.zeros(0)
        return cls(len(rows_data), cols, indptr, indices, values)

    @classmethod
    def _trusted(cls, rows: int, cols: int, indptr: np.ndarray, indices: np.ndarray,
                 values: np.ndarray) -> "SparseRowMatrix":
        """Construction bypass for internal producers whose output is sorted,
        in-range, and zero-free by construction; skips invariant validation."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "rows", rows)
        object.__setattr__(obj, "cols", cols)
        for name, arr in (("indptr", indptr), ("indices", indices), ("values", values)):
            arr.flags.writeable = False
            object.__setattr__(obj, name, arr)
        return obj

    @classmethod
    def from_dense(cls, m: DenseMatrix) -> "SparseRowMatrix":
        rows_data = []
        for i in range(m.rows):
            row = m.data[i]
            cidx = np.nonzero(row)[0]
            rows_data.append((cidx, row[cidx]))
        return cls.from_rows(rows_data, m.cols)

    def to_dense(self) -> DenseMatrix:
        out = np.zeros((self.rows, self.cols))
        for i in range(self.rows):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            out[i, self.indices[lo:hi]] = self.values[lo:hi]
        return DenseMatrix(out)

    def nnz(self) -> int:
        return int(self.indptr[-1])

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.values[lo:hi]


Matrix = DenseMatrix | SparseRowMatrix


def matvec(m: Matrix, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with fixed per-row accumulation order."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != m.cols:
        raise DimensionMismatch(f"vector length {v.shape} does not match {m.cols} columns")
    if isinstance(m, DenseMatrix):
        return kernels.matvec_dense(m.data, v)
    return kernels.matvec_csr(m.indptr, m.indices, m.values, v, m.rows)


def relu(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0.0)


def norms(m: DenseMatrix) -> tuple[float, float]:
    """Entrywise l1 norm and Frobenius norm."""
    a = m.data
    return float(np.abs(a).sum()), float(np.sqrt((a * a).sum()))


@dataclass(frozen=True)
class SvdFactors:
    """Truncated SVD: sigma non-increasing, u/v columns unit norm.

    A zero singular value keeps zero u/v columns; those terms contribute
    nothing to the reconstruction.
    """

    rank: int
    sigma: np.ndarray
    u: np.ndarray  # (rows, rank)
    v: np.ndarray  # (cols, rank)

    def reconstruct(self) -> DenseMatrix:
        return DenseMatrix((self.u * self.sigma) @ self.v.T)


def _jacobi_eigh(g: np.ndarray, tol: float, max_sweeps: int) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolve of a symmetric matrix; returns (eigvals, eigvecs)."""
    n = g.shape[0]
    a = g.copy()
    v = np.eye(n)
    if n == 1:
        return np.array([a[0, 0]]), v
    norm = np.sqrt((g * g).sum())
    if norm == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * (np.triu(a, 1) ** 2).sum())
        if off <= tol * norm:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = 0.5 * np.arctan2(2.0 * apq, a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    off = np.sqrt(2.0 * (np.triu(a, 1) ** 2).sum())
    if off <= tol * norm:
        return np.diag(a).copy(), v
    raise ConvergenceError("Jacobi eigensolve did not converge", float(off / norm))


def truncated_svd(m: DenseMatrix, r: int, tol: float = 1e-10, max_sweeps: int = 100) -> SvdFactors:
    """Rank-r SVD via a Jacobi eigensolve of the smaller Gram matrix."""
    if not 1 <= r <= min(m.rows, m.cols):
        raise DimensionMismatch(f"rank {r} out of range for {m.rows}x{m.cols}")
    a = m.data
    tall = m.rows >= m.cols
    gram = a.T @ a if tall else a @ a.T
    eigvals, eigvecs = _jacobi_eigh(gram, tol, max_sweeps)
    order = np.argsort(-eigvals, kind="stable")[:r]
    lam = np.maximum(eigvals[order], 0.0)
    sigma = np.sqrt(lam)
    w = eigvecs[:, order]
    u = np.zeros((m.rows, r))
    v = np.zeros((m.cols, r))
    for i in range(r):
        if sigma[i] > 0.0:
            if tall:
                v[:, i] = w[:, i]
                u[:, i] = (a @ w[:, i]) / sigma[i]
            else:
                u[:, i] = w[:, i]
                v[:, i] = (a.T @ w[:, i]) / sigma[i]
    return SvdFactors(rank=r, sigma=sigma, u=u, v=v)
