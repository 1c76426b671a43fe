"""Metric-perturbed AMG for 3d-1d coupled systems.

The preconditioner wraps one global AMG V-cycle on the flattened coupled
matrix between a forward and a backward multiplicative Schwarz sweep.  The
Schwarz blocks are built so that each localized element of the kernel of the
coupling operator lives inside a single block, which is what makes the
method robust in the coupling strength.
"""

from dataclasses import dataclass
from functools import lru_cache
import time

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from . import _kernels
from .amg import AmgParams, AmgType, Smoother, setup_hierarchy
from .errors import DimensionError, NotSPDError, StructuralError
from .krylov import pcg
from .sparse import canonicalize

__all__ = [
    "SchwarzBlocks",
    "MetricAmgPrecond",
    "detect_interface_dofs",
    "kernel_frames",
    "build_schwarz_blocks",
    "schwarz_sweep",
    "field_constants",
    "penalty_coarse_solver",
    "metric_amg_setup",
    "build_metric_amg",
    "metric_amg_apply",
    "solve_coupled",
]

#: Global AMG settings used by :func:`metric_amg_setup` unless overridden.
DEFAULT_GLOBAL_PARAMS = AmgParams(
    amg_type=AmgType.UA,
    smoother=Smoother.SYM_GS,
    presmooth_steps=3,
    postsmooth_steps=3,
    coarse_min_dim=100,
    max_aggregation=100,
)

#: Neighbouring 1d dofs on each side whose kernel frames share a block.
DEFAULT_LINE_WIDTH = 2


def detect_interface_dofs(cs):
    """Flattened indices of 3d dofs touched by ``Pi`` plus every 1d dof.

    The set depends only on the sparsity of ``Pi``, not on ``rho_t``.
    """
    Pi = canonicalize(cs.Pi)
    if Pi.nnz == 0:
        raise StructuralError("coupling operator Pi has no nonzeros")
    cols3 = np.unique(Pi.indices)
    ones1 = cs.n3 + np.arange(cs.n1)
    return np.concatenate([cols3, ones1]).astype(np.int64)


@dataclass
class SchwarzBlocks:
    """Overlapping index blocks with dense Cholesky factors of ``A[b, b]``.

    ``block_ptr`` and ``block_idx`` store the blocks in CSR-like form;
    ``factors`` holds each lower factor flattened row-major, starting at
    ``factor_ptr[b]``.
    """

    block_ptr: np.ndarray
    block_idx: np.ndarray
    factors: np.ndarray
    factor_ptr: np.ndarray
    n: int

    @property
    def n_blocks(self):
        return len(self.block_ptr) - 1

    @property
    def blocks(self):
        return [self.block_idx[self.block_ptr[b]:self.block_ptr[b + 1]] for b in range(self.n_blocks)]

    @classmethod
    def from_blocks(cls, A, blocks):
        """Factor ``A`` restricted to each index set in ``blocks``."""
        A = canonicalize(A)
        n = A.shape[0]
        idx = [np.unique(np.asarray(b, dtype=np.int64)) for b in blocks]
        ptr = np.zeros(len(idx) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(b) for b in idx])
        fptr = np.zeros(len(idx) + 1, dtype=np.int64)
        fptr[1:] = np.cumsum([len(b) ** 2 for b in idx])
        factors = np.empty(fptr[-1])
        for k, b in enumerate(idx):
            if len(b) == 0:
                raise StructuralError(f"Schwarz block {k} is empty")
            if b[0] < 0 or b[-1] >= n:
                raise StructuralError(f"Schwarz block {k} has indices outside 0..{n - 1}")
            local = A[b][:, b].toarray()
            try:
                L = scipy.linalg.cholesky(local, lower=True, check_finite=False)
            except scipy.linalg.LinAlgError as exc:
                raise NotSPDError(f"local matrix of Schwarz block {k} is not SPD") from exc
            factors[fptr[k]:fptr[k + 1]] = L.ravel()
        block_idx = np.concatenate(idx) if idx else np.zeros(0, dtype=np.int64)
        return cls(ptr, block_idx, factors, fptr, n)


def kernel_frames(cs):
    """Support of the localized kernel vector for each 1d dof.

    For 1d dof ``i`` the vector is ``q1 = e_i`` with ``q3`` equal to one on
    the support of row ``i`` of ``Pi``; returned in flattened numbering.
    """
    return _frames(cs.Pi)


def _frames(Pi):
    Pi = canonicalize(Pi)
    n3 = Pi.shape[1]
    return [
        np.concatenate([Pi.indices[Pi.indptr[i]:Pi.indptr[i + 1]], [n3 + i]])
        for i in range(Pi.shape[0])
    ]


def build_schwarz_blocks(cs, A=None, rings=1, line_width=DEFAULT_LINE_WIDTH):
    """One block per 1d dof holding its kernel frame and those of nearby 1d dofs.

    Block ``i`` is the union of the frames of 1d dofs ``i - line_width`` to
    ``i + line_width`` plus ``rings`` layers of 3d grid neighbours of their
    3d part.  ``line_width=0`` gives the minimal frame-per-block layout.

    Raises
    ------
    StructuralError
        If some frame vector is not contained in a block.
    NotSPDError
        If a local matrix fails to factor; the message names the block.
    """
    A = canonicalize(cs.A.flatten() if A is None else A)
    return _schwarz_blocks(A, cs.Pi, cs.graph3, rings, line_width)


def _schwarz_blocks(A, Pi, graph3, rings, line_width):
    n1, n3 = Pi.shape
    if A.shape != (n3 + n1, n3 + n1):
        raise DimensionError(f"matrix {A.shape} does not match coupled size {n3 + n1}")
    if rings < 0 or line_width < 0:
        raise ValueError("rings and line_width must be non-negative")
    graph = sp.csr_matrix(A[:n3, :n3] if graph3 is None else graph3)
    frames = _frames(Pi)
    blocks = []
    for i in range(len(frames)):
        support = np.concatenate(frames[max(0, i - line_width):i + line_width + 1])
        grow = support[support < n3]
        for _ in range(rings):
            grow = np.unique(np.concatenate([grow, graph[grow].indices]))
        blocks.append(np.union1d(grow, support))
    sb = SchwarzBlocks.from_blocks(A, blocks)
    for k, (frame, blk) in enumerate(zip(frames, sb.blocks)):
        if not np.all(np.isin(frame, blk)):
            raise StructuralError(f"kernel frame of 1d dof {k} not contained in block {k}")
    return sb


@lru_cache(maxsize=8)
def _empty_csr(n):
    return sp.csr_matrix((n, n))


def schwarz_sweep(sb, A, r, z, direction="forward", C=None, scale=0.0):
    """Multiplicative Schwarz sweep, updating ``z`` in place.

    Each block in turn adds ``E_b A_b^{-1} E_b^T (r - A z)``; ``backward``
    visits the blocks in reverse order, making it the adjoint of ``forward``.
    If ``C`` is given the residual is taken against ``A + scale * C`` with
    the two products kept apart.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    r = np.ascontiguousarray(r, dtype=np.float64)
    if r.shape != (sb.n,) or z.shape != (sb.n,):
        raise DimensionError(f"Schwarz blocks of size {sb.n} applied to shapes {r.shape}, {z.shape}")
    if C is None:
        C, scale = _empty_csr(sb.n), 0.0
    _kernels.schwarz_sweep(
        A.indptr, A.indices, A.data, C.indptr, C.indices, C.data, float(scale),
        sb.block_ptr, sb.block_idx, sb.factors, sb.factor_ptr, r, z, direction == "backward",
    )
    return z


class MetricAmgPrecond(LinearOperator):
    """``z = B r``: forward Schwarz, one global V-cycle, backward Schwarz.

    ``AD`` and ``Mc`` are the flattened diffusion and coupling matrices; all
    residuals are formed as ``r - AD z - rho_t Mc z`` so that large
    ``rho_t`` does not wipe out the small eigenvalues of ``AD``.  The
    operator is symmetric and positive definite whenever the V-cycle is,
    because the backward sweep is the exact adjoint of the forward one.
    """

    def __init__(self, AD, Mc, rho_t, schwarz, global_hierarchy, interface_dofs=None, params=None):
        super().__init__(dtype=np.float64, shape=AD.shape)
        self.AD = AD
        self.Mc = Mc
        self.rho_t = float(rho_t)
        self.schwarz = schwarz
        self.global_hierarchy = global_hierarchy
        self.interface_dofs = interface_dofs
        self.params = params or {}

    def residual(self, r, z):
        return r - self.AD @ z - self.rho_t * (self.Mc @ z)

    def _matvec(self, r):
        return metric_amg_apply(self, np.asarray(r, dtype=np.float64).ravel())

    def _adjoint(self):
        return self


def field_constants(n3, n1):
    """Near-kernel with one constant per field."""
    K = np.zeros((n3 + n1, 2))
    K[:n3, 0] = 1.0
    K[n3:, 1] = 1.0
    return K


def penalty_coarse_solver(AD_c, G_c, rho_t):
    """Solver for ``AD_c + rho_t G_c^T G_c`` that never forms the sum.

    Adding ``rho_t G^T G`` to ``AD`` in floating point erases eigenvalues of
    ``AD`` below ``rho_t * eps``, which is where the regularized constants
    sit.  The equivalent system ``[[AD_c, G_c^T], [G_c, -I / rho_t]]`` keeps
    them.
    """
    AD_c = np.asarray(AD_c, dtype=np.float64)
    n = AD_c.shape[0]
    if rho_t == 0.0:
        factor = scipy.linalg.cho_factor(AD_c, lower=True)
        return lambda g: scipy.linalg.cho_solve(factor, g)
    G_c = np.asarray(G_c, dtype=np.float64)
    m = G_c.shape[0]
    K = np.block([[AD_c, G_c.T], [G_c, -np.eye(m) / rho_t]])
    lu = scipy.linalg.lu_factor(K)
    pad = np.zeros(m)
    return lambda g: scipy.linalg.lu_solve(lu, np.concatenate([g, pad]))[:n]


def metric_amg_setup(cs, params=None, rings=1, line_width=DEFAULT_LINE_WIDTH):
    """Blocks, global hierarchy and interface set for a coupled system."""
    return build_metric_amg(
        cs.AD.flatten(), cs.Pi, cs.rho_t, graph3=cs.graph3, params=params,
        rings=rings, line_width=line_width,
    )


def build_metric_amg(AD, Pi, rho_t, graph3=None, params=None, rings=1,
                     line_width=DEFAULT_LINE_WIDTH):
    """Metric AMG for ``AD + rho_t [Pi^T; -I][Pi, -I]`` given as its parts.

    ``AD`` is the flattened diffusion matrix in ``(3d, 1d)`` ordering and
    ``Pi`` the ``n1 x n3`` coupling operator.  ``graph3`` supplies the 3d
    neighbourhoods for the block rings; by default the 3d block of ``AD``.
    """
    params = params or DEFAULT_GLOBAL_PARAMS
    AD = canonicalize(AD)
    Pi = canonicalize(Pi)
    n1, n3 = Pi.shape
    if AD.shape != (n3 + n1, n3 + n1):
        raise DimensionError(f"diffusion matrix {AD.shape} does not match Pi {Pi.shape}")
    if Pi.nnz == 0:
        raise StructuralError("coupling operator Pi has no nonzeros")
    rho_t = float(rho_t)
    G = canonicalize(sp.hstack([Pi, -sp.identity(n1)]))
    Mc = canonicalize(G.T @ G)
    A = canonicalize(AD + rho_t * Mc) if rho_t != 0.0 else AD
    sb = _schwarz_blocks(A, Pi, graph3, rings, line_width)
    h = setup_hierarchy(A, near_kernel=field_constants(n3, n1), params=params)
    # carry AD and the coupling gradient G to the coarsest level
    P = sp.identity(n3 + n1, format="csr")
    for level in h.levels[:-1]:
        P = P @ level.P
    h.coarse_solver = penalty_coarse_solver((P.T @ AD @ P).toarray(), (G @ P).toarray(), rho_t)
    interface = np.concatenate([np.unique(Pi.indices), n3 + np.arange(n1)]).astype(np.int64)
    return MetricAmgPrecond(
        AD, Mc, rho_t, sb, h, interface,
        params={"rings": rings, "line_width": line_width, "amg": params},
    )


def metric_amg_apply(mp, r):
    """Apply the three-stage composition to ``r``."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (mp.shape[0],):
        raise DimensionError(f"preconditioner of size {mp.shape[0]} applied to shape {r.shape}")
    z = np.zeros_like(r)
    schwarz_sweep(mp.schwarz, mp.AD, r, z, "forward", mp.Mc, mp.rho_t)
    z += mp.global_hierarchy.vcycle(mp.residual(r, z))
    schwarz_sweep(mp.schwarz, mp.AD, r, z, "backward", mp.Mc, mp.rho_t)
    return z


def solve_coupled(cs, b=None, tol=1e-6, params=None, maxit=1000, rings=1,
                  line_width=DEFAULT_LINE_WIDTH):
    """PCG with the metric AMG preconditioner; returns a ``SolveReport``."""
    b = cs.b if b is None else np.asarray(b, dtype=np.float64)
    if b.shape != (cs.n_dofs,):
        raise DimensionError(f"right-hand side {b.shape} does not match coupled size {cs.n_dofs}")
    t0 = time.perf_counter()
    mp = metric_amg_setup(cs, params=params, rings=rings, line_width=line_width)
    setup = time.perf_counter() - t0
    rep = pcg(cs.matvec, b, mp, tol=tol, maxit=maxit, estimate_cond=True)
    rep.setup_seconds = setup
    return rep
