"""Aggregation-based algebraic multigrid (unsmoothed and smoothed).

Setup builds a hierarchy by repeatedly filtering weak couplings, grouping
vertices into aggregates, building a prolongation from near-kernel vectors
and forming the Galerkin coarse operator ``P.T @ A @ P``.  Application is a
symmetric V-cycle usable as a CG preconditioner.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from . import _kernels
from .errors import DimensionError, NotSPDError, RankDeficiencyError
from .sparse import canonicalize, cholesky_factor, cholesky_solve

__all__ = [
    "AmgType",
    "Smoother",
    "AmgParams",
    "ELLIPTIC_PARAMS",
    "AmgLevel",
    "AmgHierarchy",
    "filter_strength",
    "aggregate",
    "tentative_prolongation",
    "smooth_prolongation",
    "setup_hierarchy",
    "smoother_apply",
]

log = logging.getLogger(__name__)


class AmgType(str, Enum):
    UA = "UA"
    SA = "SA"


class Smoother(str, Enum):
    JACOBI = "jacobi"
    GS_FORWARD = "gs"
    GS_BACKWARD = "gs_backward"
    SYM_GS = "sgs"

    @property
    def adjoint(self):
        if self is Smoother.GS_FORWARD:
            return Smoother.GS_BACKWARD
        if self is Smoother.GS_BACKWARD:
            return Smoother.GS_FORWARD
        return self


@dataclass(frozen=True)
class AmgParams:
    amg_type: AmgType = AmgType.UA
    max_levels: int = 10
    strong_coupled: float = None  # None: 0.0 for UA, 0.08 for SA
    max_aggregation: int = 100
    smoother: Smoother = Smoother.GS_FORWARD
    presmooth_steps: int = 1
    postsmooth_steps: int = 1
    coarse_min_dim: int = 100
    jacobi_weight: float = 2.0 / 3.0
    # scales the prolongated coarse correction; >1 over-corrects
    coarse_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "amg_type", AmgType(self.amg_type))
        object.__setattr__(self, "smoother", Smoother(self.smoother))
        if self.strong_coupled is None:
            theta = 0.0 if self.amg_type is AmgType.UA else 0.08
            object.__setattr__(self, "strong_coupled", theta)
        if self.max_levels < 1:
            raise ValueError("max_levels must be at least 1")
        if not 0.0 <= self.strong_coupled < 1.0:
            raise ValueError("strong_coupled must lie in [0, 1)")
        if self.max_aggregation < 2:
            raise ValueError("max_aggregation must be at least 2")
        if self.presmooth_steps < 0 or self.postsmooth_steps < 0:
            raise ValueError("smoothing steps must be non-negative")
        if self.coarse_min_dim < 1:
            raise ValueError("coarse_min_dim must be positive")
        if self.coarse_scale <= 0:
            raise ValueError("coarse_scale must be positive")

    def with_(self, **changes):
        if "amg_type" in changes and "strong_coupled" not in changes:
            changes["strong_coupled"] = None
        return replace(self, **changes)


#: Tuned settings for Neumann P1 diffusion problems: a symmetric
#: Gauss-Seidel sweep and a 1.6x over-corrected coarse update keep UA
#: iteration counts nearly flat under refinement.
ELLIPTIC_PARAMS = AmgParams(smoother=Smoother.SYM_GS, coarse_scale=1.6)


@dataclass
class AmgLevel:
    A: sp.csr_matrix
    P: sp.csr_matrix = None
    diag: np.ndarray = None
    is_coarsest: bool = False
    coarse_factor: tuple = None
    aggregates: np.ndarray = field(default=None, repr=False)

    @property
    def n(self):
        return self.A.shape[0]


def filter_strength(A, theta):
    """Drop off-diagonals with ``|a_ij| / sqrt(a_ii a_jj) < theta``."""
    A = sp.csr_matrix(A)
    d = A.diagonal()
    if np.any(d <= 0):
        i = int(np.flatnonzero(d <= 0)[0])
        raise NotSPDError(f"non-positive diagonal entry a[{i},{i}] = {d[i]}")
    if theta <= 0.0:
        return canonicalize(A)
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    cols = A.indices
    ratio = np.abs(A.data) / np.sqrt(d[rows] * d[cols])
    keep = (rows == cols) | (ratio >= theta)
    return canonicalize(sp.csr_matrix((A.data[keep], (rows[keep], cols[keep])), shape=A.shape))


def aggregate(filtered, max_aggregation):
    """Partition the graph of ``filtered`` into connected aggregates.

    Vertices are visited in index order.  An unassigned vertex seeds a new
    aggregate and absorbs its unassigned neighbours (capped at
    ``max_aggregation``); aggregates smaller than three grow by one more
    ring.  A seed whose neighbours are all taken joins the neighbouring
    aggregate it is most strongly coupled to.

    Returns ``(labels, n_c)``.
    """
    A = sp.csr_matrix(filtered)
    labels, nc = _kernels.greedy_aggregate(
        A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data, int(max_aggregation)
    )
    return labels, int(nc)


def tentative_prolongation(labels, n_c, near_kernel):
    """Piecewise near-kernel prolongation with orthonormal columns.

    Parameters
    ----------
    labels : (n,) int array
        Aggregate of every fine vertex.
    n_c : int
        Number of aggregates.
    near_kernel : (n, k) array
        Near-kernel vectors as columns.

    Returns
    -------
    P : csr_matrix, shape (n, n_cols)
        ``P.T @ P = I``.  Each aggregate contributes as many columns as the
        rank of the kernel restricted to it (``k`` in the generic case).
    coarse_kernel : (n_cols, k) array
        Coarse representation with ``P @ coarse_kernel = near_kernel``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    B = np.asarray(near_kernel, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    n, k = B.shape
    if labels.shape[0] != n:
        raise DimensionError(f"{labels.shape[0]} labels for {n} kernel rows")
    if k == 1:
        norms = np.sqrt(np.bincount(labels, weights=B[:, 0] ** 2, minlength=n_c))
        if np.any(norms == 0):
            raise RankDeficiencyError(int(np.flatnonzero(norms == 0)[0]))
        P = sp.csr_matrix((B[:, 0] / norms[labels], (np.arange(n), labels)), shape=(n, n_c))
        return canonicalize(P), norms[:, None]

    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(n_c + 1))
    rows, cols, vals, coarse = [], [], [], []
    ncol = 0
    for a in range(n_c):
        idx = order[bounds[a] : bounds[a + 1]]
        U, sv, Vt = np.linalg.svd(B[idx], full_matrices=False)
        if sv.size == 0 or sv[0] == 0.0:
            raise RankDeficiencyError(a)
        # drop directions in which the local kernel is (numerically) absent
        r = int(np.sum(sv > 1e-12 * sv[0]))
        if r == sv.size:
            Q, R = np.linalg.qr(B[idx], mode="reduced")
        else:
            Q, R = U[:, :r], sv[:r, None] * Vt[:r]
        r = Q.shape[1]
        rows.append(np.repeat(idx, r))
        cols.append(np.tile(np.arange(ncol, ncol + r), len(idx)))
        vals.append(Q.ravel())
        coarse.append(R)
        ncol += r
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, ncol)
    )
    return canonicalize(P), np.vstack(coarse)


def gershgorin_dinv_a(A):
    d = A.diagonal()
    return float(np.max(abs(A).sum(axis=1).A1 / d))


def smooth_prolongation(P, A, jacobi_weight):
    """``(I - omega D^{-1} A) P`` with ``omega = jacobi_weight / rho_hat``.

    ``rho_hat`` is the Gershgorin bound on the spectral radius of ``D^{-1} A``.
    """
    if jacobi_weight == 0.0:
        return canonicalize(P)
    A = sp.csr_matrix(A)
    d = A.diagonal()
    omega = jacobi_weight / gershgorin_dinv_a(A)
    DinvA = sp.diags(omega / d) @ A
    return canonicalize(P - DinvA @ P)


def smoother_apply(kind, A, r, z, steps=1, diag=None, weight=2.0 / 3.0):
    """Relax ``A z = r`` in place for ``steps`` sweeps."""
    kind = Smoother(kind)
    if diag is None:
        diag = A.diagonal()
    if np.any(diag == 0):
        raise NotSPDError("zero diagonal entry in smoother")
    indptr, indices, data = A.indptr, A.indices, A.data
    for _ in range(steps):
        if kind is Smoother.JACOBI:
            z += weight * (r - A @ z) / diag
        elif kind is Smoother.GS_FORWARD:
            _kernels.gs_forward(indptr, indices, data, diag, r, z)
        elif kind is Smoother.GS_BACKWARD:
            _kernels.gs_backward(indptr, indices, data, diag, r, z)
        else:
            _kernels.gs_forward(indptr, indices, data, diag, r, z)
            _kernels.gs_backward(indptr, indices, data, diag, r, z)
    return z


class AmgHierarchy:
    """Multilevel hierarchy; calling it applies one V-cycle."""

    def __init__(self, levels, params, near_kernel, coarse_solver=None):
        self.levels = levels
        self.params = params
        self.near_kernel = near_kernel
        # optional callable replacing the Cholesky solve on the coarsest level
        self.coarse_solver = coarse_solver

    @property
    def shape(self):
        return self.levels[0].A.shape

    @property
    def dims(self):
        return [lvl.n for lvl in self.levels]

    def operator_complexity(self):
        return sum(lvl.A.nnz for lvl in self.levels) / self.levels[0].A.nnz

    def __repr__(self):
        return f"AmgHierarchy(levels={len(self.levels)}, dims={self.dims}, type={self.params.amg_type.value})"

    def vcycle(self, g):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.shape[0],):
            raise DimensionError(f"V-cycle of size {self.shape[0]} applied to shape {g.shape}")
        return self._cycle(0, g)

    __call__ = vcycle

    def _cycle(self, lev, g):
        level = self.levels[lev]
        if level.is_coarsest:
            if self.coarse_solver is not None:
                return self.coarse_solver(g)
            return cholesky_solve(level.coarse_factor, g)
        p = self.params
        A = level.A
        z = np.zeros_like(g)
        smoother_apply(p.smoother, A, g, z, p.presmooth_steps, level.diag, p.jacobi_weight)
        rc = level.P.T @ (g - A @ z)
        zc = self._cycle(lev + 1, rc)
        if p.coarse_scale != 1.0:
            zc *= p.coarse_scale
        z += level.P @ zc
        smoother_apply(p.smoother.adjoint, A, g, z, p.postsmooth_steps, level.diag, p.jacobi_weight)
        return z

    def aspreconditioner(self):
        return LinearOperator(self.shape, matvec=self.vcycle, dtype=np.float64)


def setup_hierarchy(A, near_kernel=None, params=None):
    """Build an aggregation AMG hierarchy for SPD ``A``.

    ``near_kernel`` defaults to the constant vector.  Coarsening stops when
    ``max_levels`` is reached, the level is no larger than
    ``coarse_min_dim``, or aggregation stagnates; the coarsest level is
    factorized by dense Cholesky.
    """
    params = params or AmgParams()
    A = canonicalize(A)
    n = A.shape[0]
    if near_kernel is None:
        near_kernel = np.ones((n, 1))
    B = np.asarray(near_kernel, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != n:
        raise DimensionError(f"near-kernel has {B.shape[0]} rows, matrix has {n}")
    kernel0 = B.copy()

    levels = []
    while True:
        level = AmgLevel(A=A, diag=A.diagonal())
        levels.append(level)
        if len(levels) >= params.max_levels or A.shape[0] <= params.coarse_min_dim:
            break
        S = filter_strength(A, params.strong_coupled)
        labels, nc = aggregate(S, params.max_aggregation)
        P, Bc = tentative_prolongation(labels, nc, B)
        if P.shape[1] >= A.shape[0]:
            log.debug("aggregation stagnated at n=%d; forcing coarsest level", A.shape[0])
            break
        if params.amg_type is AmgType.SA:
            P = smooth_prolongation(P, A, params.jacobi_weight)
        level.P = P
        level.aggregates = labels
        A = canonicalize(P.T @ (A @ P))
        B = Bc
    last = levels[-1]
    last.is_coarsest = True
    last.coarse_factor = cholesky_factor(last.A.toarray())
    return AmgHierarchy(levels, params, kernel0)
