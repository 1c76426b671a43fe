"""Deterministic model problems on structured simplicial meshes.

All generators use continuous piecewise-linear (P1) elements with natural
(Neumann) boundary conditions.  Cubes are split into six tetrahedra sharing
the main diagonal, squares into two triangles.
"""
from dataclasses import dataclass, field
from itertools import permutations
from math import factorial

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError
from .sparse import canonicalize

__all__ = [
    "BlockSystem",
    "EllipticSystem",
    "CoupledSystem",
    "grid_mesh",
    "p1_matrices",
    "p1_load",
    "elliptic_3d",
    "fractional_pair",
    "coupled_3d1d",
]

REGULARIZATION = 1e-8

# degree-2 Keast rule on the reference tetrahedron (weights sum to one)
_TET_A = 0.5854101966249685
_TET_B = 0.1381966011250105
_TET_QUAD = np.array(
    [
        [_TET_A, _TET_B, _TET_B, _TET_B],
        [_TET_B, _TET_A, _TET_B, _TET_B],
        [_TET_B, _TET_B, _TET_A, _TET_B],
        [_TET_B, _TET_B, _TET_B, _TET_A],
    ]
)


@dataclass
class BlockSystem:
    """Block operator with ``None`` for absent blocks."""

    blocks: list
    row_dims: tuple
    col_dims: tuple

    def __post_init__(self):
        self.row_dims = tuple(int(d) for d in self.row_dims)
        self.col_dims = tuple(int(d) for d in self.col_dims)
        if len(self.blocks) != len(self.row_dims):
            raise DimensionError("block rows do not match row_dims")
        for i, row in enumerate(self.blocks):
            if len(row) != len(self.col_dims):
                raise DimensionError(f"block row {i} does not match col_dims")
            for j, blk in enumerate(row):
                if blk is not None and blk.shape != (self.row_dims[i], self.col_dims[j]):
                    raise DimensionError(
                        f"block ({i}, {j}) has shape {blk.shape}, "
                        f"expected {(self.row_dims[i], self.col_dims[j])}"
                    )

    @property
    def shape(self):
        return sum(self.row_dims), sum(self.col_dims)

    @property
    def row_offsets(self):
        return np.concatenate([[0], np.cumsum(self.row_dims)])

    def flatten(self):
        grid = [
            [
                blk if blk is not None else sp.csr_matrix((self.row_dims[i], self.col_dims[j]))
                for j, blk in enumerate(row)
            ]
            for i, row in enumerate(self.blocks)
        ]
        return canonicalize(sp.bmat(grid, format="csr"))

    def __matmul__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.shape[1]:
            raise DimensionError(f"block operator has {self.shape[1]} columns, got {x.shape[0]}")
        coff = np.concatenate([[0], np.cumsum(self.col_dims)])
        roff = self.row_offsets
        y = np.zeros(self.shape[0])
        for i, row in enumerate(self.blocks):
            for j, blk in enumerate(row):
                if blk is not None:
                    y[roff[i] : roff[i + 1]] += blk @ x[coff[j] : coff[j + 1]]
        return y


@dataclass
class EllipticSystem:
    A: sp.csr_matrix
    M: sp.csr_matrix
    b: np.ndarray
    n_per_axis: int
    dim: int

    @property
    def n_dofs(self):
        return self.A.shape[0]


@dataclass
class CoupledSystem:
    """3d-1d system ``A = AD + rho_t * Mc`` on a cube with an embedded line."""

    A: BlockSystem
    AD: BlockSystem
    Mc: BlockSystem
    Pi: sp.csr_matrix
    rho_t: float
    b: np.ndarray
    n_per_axis: int
    sigma3: float = 1.0
    sigma1: float = 1.0
    graph3: sp.csr_matrix = field(default=None, repr=False)

    @property
    def n3(self):
        return self.Pi.shape[1]

    @property
    def n1(self):
        return self.Pi.shape[0]

    @property
    def n_dofs(self):
        return self.n3 + self.n1

    def matvec(self, x):
        """``A x`` with the coupling applied in factored form.

        ``rho_t Mc x`` is evaluated as ``rho_t [Pi^T d; -d]`` with
        ``d = Pi q3 - q1``, so ``x^T A x`` stays non-negative even when the
        merged matrix has lost the small eigenvalues to rounding.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_dofs,):
            raise DimensionError(f"coupled operator of size {self.n_dofs} applied to shape {x.shape}")
        q3, q1 = x[: self.n3], x[self.n3:]
        A33, A11 = self.AD.blocks[0][0], self.AD.blocks[1][1]
        out = np.concatenate([A33 @ q3, A11 @ q1])
        if self.rho_t != 0.0:
            d = self.rho_t * (self.Pi @ q3 - q1)
            out[: self.n3] += self.Pi.T @ d
            out[self.n3:] -= d
        return out


def grid_mesh(dim, n):
    """Vertices and simplices of the structured mesh of ``[0, 1]**dim``.

    Vertex ``(i0, ..., i_{d-1})`` has index ``sum(i_k * (n + 1)**k)``.
    Each cell is split into ``dim!`` simplices along the path ``e_p0, e_p1, ...``
    for every permutation ``p``.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if n < 1:
        raise ValueError(f"need at least one cell per axis, got {n}")
    m = n + 1
    axes = np.meshgrid(*([np.arange(m)] * dim), indexing="ij")
    ijk = np.stack([a.ravel(order="F") for a in axes], axis=1)
    coords = ijk / n
    strides = m ** np.arange(dim)
    corners = np.stack(np.meshgrid(*([np.arange(n)] * dim), indexing="ij"), axis=-1)
    corners = corners.reshape(-1, dim) @ strides
    cells = []
    for perm in permutations(range(dim)):
        verts = [np.zeros(dim, dtype=np.int64)]
        for p in perm:
            step = verts[-1].copy()
            step[p] += 1
            verts.append(step)
        offsets = np.array([v @ strides for v in verts])
        cells.append(corners[:, None] + offsets[None, :])
    return coords, np.concatenate(cells, axis=0)


def _local_p1(X):
    """Stiffness, mass and volume of one simplex with vertex rows ``X``."""
    d = X.shape[1]
    J = (X[1:] - X[0]).T
    Jinv = np.linalg.inv(J)
    G = np.vstack([-Jinv.sum(axis=0), Jinv])
    vol = abs(np.linalg.det(J)) / factorial(d)
    K = vol * G @ G.T
    M = vol / ((d + 1) * (d + 2)) * (np.ones((d + 1, d + 1)) + np.eye(d + 1))
    return K, M, vol


def _simplex_types(coords, cells, dim, n):
    # every cell of the structured mesh is a translate of one of dim! shapes,
    # listed type-major by grid_mesh
    per_type = n**dim
    for t in range(factorial(dim)):
        block = cells[t * per_type : (t + 1) * per_type]
        yield block, _local_p1(coords[block[0]])


def p1_matrices(dim, n):
    """Neumann stiffness and consistent mass matrices on ``[0, 1]**dim``."""
    coords, cells = grid_mesh(dim, n)
    nv = coords.shape[0]
    K = sp.csr_matrix((nv, nv))
    M = sp.csr_matrix((nv, nv))
    for block, (Kl, Ml, _) in _simplex_types(coords, cells, dim, n):
        nl = block.shape[1]
        rows = np.repeat(block, nl, axis=1).ravel()
        cols = np.tile(block, (1, nl)).ravel()
        count = block.shape[0]
        K = K + sp.csr_matrix((np.tile(Kl.ravel(), count), (rows, cols)), shape=(nv, nv))
        M = M + sp.csr_matrix((np.tile(Ml.ravel(), count), (rows, cols)), shape=(nv, nv))
    K = canonicalize(K)
    M = canonicalize(M)
    return K, M


def p1_load(dim, n, f):
    """Load vector ``<f, phi_i>`` by per-simplex quadrature.

    Tetrahedra use a 4-point degree-2 rule, lower dimensions the vertex-
    -midpoint average rule of matching degree.
    """
    coords, cells = grid_mesh(dim, n)
    if dim == 3:
        bary = _TET_QUAD
    elif dim == 2:
        bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    else:
        g = 0.5 / np.sqrt(3.0)
        bary = np.array([[0.5 + g, 0.5 - g], [0.5 - g, 0.5 + g]])
    weights = np.full(bary.shape[0], 1.0 / bary.shape[0])
    b = np.zeros(coords.shape[0])
    for block, (_, _, vol) in _simplex_types(coords, cells, dim, n):
        X = coords[block]
        for w, lam in zip(weights, bary):
            xq = np.einsum("k,ckd->cd", lam, X)
            fq = f(xq) * (w * vol)
            b += np.bincount(block.ravel(), (fq[:, None] * lam[None, :]).ravel(), minlength=b.size)
    return b


def _cos_pi_x0(x):
    return np.cos(np.pi * x[:, 0])


def _sin_pi_x0(x):
    return np.sin(np.pi * x[:, 0])


def elliptic_3d(n_per_axis):
    """``-Δu + u = sin(πx0)`` on the unit cube with zero Neumann data."""
    K, M = p1_matrices(3, n_per_axis)
    A = canonicalize(K + M)
    b = p1_load(3, n_per_axis, _sin_pi_x0)
    return EllipticSystem(A=A, M=M, b=b, n_per_axis=n_per_axis, dim=3)


def fractional_pair(dim, n_per_axis):
    """``(K + M, M)`` on the unit interval or square, Neumann boundary."""
    if dim not in (1, 2):
        raise ValueError(f"fractional_pair supports dim 1 or 2, got {dim}")
    if n_per_axis < 2:
        raise ValueError("n_per_axis must be at least 2")
    K, M = p1_matrices(dim, n_per_axis)
    return canonicalize(K + M), M


def coupled_3d1d(n_per_axis, sigma3=1.0, sigma1=1.0, rho_t=1.0):
    """3d diffusion in the unit cube coupled to a 1d line along its axis.

    The line runs through grid vertices ``(c, c, k)``, ``c = n // 2``, so the
    averaging operator reduces to nodal sampling.
    """
    n = int(n_per_axis)
    if n < 2:
        raise ValueError("n_per_axis must be at least 2")
    K3, M3 = p1_matrices(3, n)
    K1, M1 = p1_matrices(1, n)
    n3, n1 = K3.shape[0], K1.shape[0]
    c = n // 2
    m = n + 1
    line = c + c * m + np.arange(m) * m * m
    Pi = canonicalize(sp.csr_matrix((np.ones(n1), (np.arange(n1), line)), shape=(n1, n3)))

    A33 = canonicalize(sigma3 * (K3 + REGULARIZATION * M3))
    A11 = canonicalize(sigma1 * (K1 + REGULARIZATION * M1))
    AD = BlockSystem([[A33, None], [None, A11]], (n3, n1), (n3, n1))
    PtP = canonicalize(Pi.T @ Pi)
    I1 = canonicalize(sp.identity(n1, format="csr"))
    Mc = BlockSystem(
        [[PtP, canonicalize(-Pi.T)], [canonicalize(-Pi), I1]], (n3, n1), (n3, n1)
    )
    rho_t = float(rho_t)
    if rho_t == 0.0:
        A = BlockSystem([[A33, None], [None, A11]], (n3, n1), (n3, n1))
    else:
        A = BlockSystem(
            [
                [canonicalize(A33 + rho_t * PtP), canonicalize(-rho_t * Pi.T)],
                [canonicalize(-rho_t * Pi), canonicalize(A11 + rho_t * I1)],
            ],
            (n3, n1),
            (n3, n1),
        )
    # mean-free loads keep the solution O(1) despite the tiny regularization
    b3 = p1_load(3, n, _cos_pi_x0)
    b1 = p1_load(1, n, _cos_pi_x0)
    return CoupledSystem(
        A=A,
        AD=AD,
        Mc=Mc,
        Pi=Pi,
        rho_t=rho_t,
        b=np.concatenate([b3, b1]),
        n_per_axis=n,
        sigma3=sigma3,
        sigma1=sigma1,
        graph3=K3,
    )
