"""Sparse and small dense linear algebra kernels.

Sparse operators are plain :class:`scipy.sparse.csr_matrix` objects kept in
canonical form (sorted column indices, no duplicates, no explicit zeros).
Small dense symmetric matrices are 2-D ``numpy`` arrays.
"""
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DimensionError, NotSPDError, NumericalError, StructuralError

__all__ = [
    "csr_from_triplets",
    "to_triplets",
    "is_canonical",
    "canonicalize",
    "spmv",
    "cholesky_factor",
    "cholesky_solve",
    "dense_cholesky_solve",
    "dense_sym_eig",
    "dense_gen_eig",
    "laplacian_1d",
]


def csr_from_triplets(nrows, ncols, triplets):
    """Assemble a canonical CSR matrix from ``(row, col, value)`` triplets.

    ``triplets`` is either an iterable of 3-tuples or a tuple of three
    equal-length arrays ``(rows, cols, values)``. Duplicates are summed and
    entries that end up exactly zero are dropped.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3 and np.ndim(triplets[0]) == 1:
        rows, cols, vals = (np.asarray(t) for t in triplets)
    else:
        trip = list(triplets)
        if trip:
            rows, cols, vals = (np.asarray(t) for t in zip(*trip))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
    rows = rows.astype(np.int64, copy=False)
    cols = cols.astype(np.int64, copy=False)
    vals = vals.astype(np.float64, copy=False)
    if not (len(rows) == len(cols) == len(vals)):
        raise StructuralError("triplet arrays differ in length")
    if len(rows):
        if rows.min() < 0 or rows.max() >= nrows:
            bad = int(np.flatnonzero((rows < 0) | (rows >= nrows))[0])
            raise StructuralError(f"row index {rows[bad]} out of range for {nrows} rows")
        if cols.min() < 0 or cols.max() >= ncols:
            bad = int(np.flatnonzero((cols < 0) | (cols >= ncols))[0])
            raise StructuralError(f"column index {cols[bad]} out of range for {ncols} columns")
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()
    return canonicalize(A)


def canonicalize(A):
    """Return ``A`` as CSR with sorted, deduplicated columns and no zeros."""
    A = sp.csr_matrix(A, dtype=np.float64, copy=True)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    A.indptr = A.indptr.astype(np.int64)
    A.indices = A.indices.astype(np.int64)
    return A


def to_triplets(A):
    """Inverse of :func:`csr_from_triplets` as a ``(rows, cols, values)`` tuple."""
    A = sp.csr_matrix(A)
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    return rows, A.indices.copy(), A.data.copy()


def is_canonical(A):
    if not sp.isspmatrix_csr(A):
        return False
    indptr, indices = A.indptr, A.indices
    if indptr[0] != 0 or indptr[-1] != len(indices) or len(A.data) != len(indices):
        return False
    if np.any(np.diff(indptr) < 0):
        return False
    if len(indices) and (indices.min() < 0 or indices.max() >= A.shape[1]):
        return False
    if np.any(A.data == 0):
        return False
    # strictly increasing within each row: a non-increase is only allowed
    # where a new row starts
    d = np.diff(indices)
    row_start = np.zeros(len(indices), dtype=bool)
    row_start[indptr[1:-1][indptr[1:-1] < len(indices)]] = True
    return bool(np.all((d > 0) | row_start[1:]))


def spmv(A, x):
    """``y = A @ x`` with a dimension check; rows are summed in column order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise DimensionError(f"operator has {A.shape[1]} columns, vector has length {x.shape}")
    return A @ x


def _as_dense_sym(A):
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return A


def cholesky_factor(A):
    """Lower Cholesky factor of a dense SPD matrix, reusable by :func:`cholesky_solve`."""
    A = _as_dense_sym(A)
    try:
        return scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"non-positive pivot in Cholesky factorization: {exc}") from None


def cholesky_solve(factor, b):
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def dense_cholesky_solve(A, b):
    A = _as_dense_sym(A)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != A.shape[0]:
        raise DimensionError(f"matrix is {A.shape[0]}x{A.shape[0]}, rhs has length {b.shape[0]}")
    return cholesky_solve(cholesky_factor(A), b)


def dense_sym_eig(A):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Only the lower triangle is referenced.
    """
    A = _as_dense_sym(A)
    try:
        return np.linalg.eigh(A, UPLO="L")
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver did not converge: {exc}") from None


def dense_gen_eig(A, M):
    """Solve ``A U = M U diag(lam)`` with ``U.T @ M @ U = I``.

    Reduces to a standard problem through the Cholesky factor ``M = L L^T``.
    """
    A = _as_dense_sym(A)
    M = _as_dense_sym(M)
    L, _ = cholesky_factor(M)
    L = np.tril(L)
    C = scipy.linalg.solve_triangular(L, A, lower=True)
    C = scipy.linalg.solve_triangular(L, C.T, lower=True)
    lam, V = dense_sym_eig(0.5 * (C + C.T))
    U = scipy.linalg.solve_triangular(L.T, V, lower=False)
    return lam, U


def laplacian_1d(n, shift=0.0):
    """Tridiagonal ``[-1, 2 + shift, -1]`` matrix of size ``n``."""
    main = np.full(n, 2.0 + shift)
    off = -np.ones(n - 1)
    return canonicalize(sp.diags([off, main, off], [-1, 0, 1], format="csr"))
