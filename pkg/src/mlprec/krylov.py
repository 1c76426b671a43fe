"""Preconditioned Krylov solvers with residual and spectrum tracking.

Operators may be sparse matrices, dense arrays, :class:`scipy.sparse.linalg.LinearOperator`
instances, objects supporting ``@``, or plain callables ``x -> y``.
Preconditioners map residuals (dual) to corrections (nodal).
"""
from dataclasses import dataclass, field
import time

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .errors import BreakdownError, DimensionError, InsufficientDataError

__all__ = ["SolveReport", "as_apply", "pcg", "minres", "lanczos_cond_estimate", "lanczos_tridiagonal"]

DEFAULT_MAXIT = 1000
_TINY = 1e-300


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual_history: np.ndarray
    converged: bool
    cond_estimate: float = None
    setup_seconds: float = 0.0
    solve_seconds: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def relative_residual(self):
        h = self.residual_history
        return float(h[-1] / h[0]) if len(h) and h[0] > 0 else 0.0


def as_apply(op, n=None):
    """Turn ``op`` into a function ``x -> op(x)``; ``None`` is the identity."""
    if op is None:
        return lambda x: x.copy()
    shape = getattr(op, "shape", None)
    if n is not None and shape is not None and tuple(shape) != (n, n):
        raise DimensionError(f"operator has shape {tuple(shape)}, system has size {n}")
    if hasattr(op, "matvec"):
        return lambda x: np.asarray(op.matvec(x), dtype=np.float64).ravel()
    if callable(op):
        return lambda x: np.asarray(op(x), dtype=np.float64)
    if hasattr(op, "__matmul__"):
        return lambda x: np.asarray(op @ x, dtype=np.float64)
    raise TypeError(f"cannot use {type(op).__name__} as a linear operator")


def lanczos_tridiagonal(alphas, betas):
    """Diagonal and off-diagonal of the Lanczos matrix implied by CG scalars.

    ``alphas[j]`` are the CG step lengths, ``betas[j]`` the direction update
    coefficients following step ``j``.
    """
    a = np.asarray(alphas, dtype=np.float64)
    b = np.asarray(betas, dtype=np.float64)
    k = len(a)
    diag = 1.0 / a
    diag[1:] += b[: k - 1] / a[: k - 1]
    off = np.sqrt(b[: k - 1]) / a[: k - 1]
    return diag, off


def lanczos_cond_estimate(alphas, betas):
    """``lambda_max / lambda_min`` of the CG-Lanczos tridiagonal matrix."""
    if len(alphas) < 2:
        raise InsufficientDataError(f"need at least 2 CG iterations, got {len(alphas)}")
    diag, off = lanczos_tridiagonal(alphas, betas)
    ev = eigvalsh_tridiagonal(diag, off)
    return float(ev[-1] / ev[0])


def pcg(A, b, B=None, tol=1e-6, maxit=DEFAULT_MAXIT, estimate_cond=False, x0=None):
    """Preconditioned conjugate gradients.

    Stops when ``sqrt(r.T B r) / sqrt(r0.T B r0) <= tol``.  Raises
    :class:`BreakdownError` if ``p.T A p`` or ``r.T B r`` turns non-positive.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    apply_A = as_apply(A, n)
    apply_B = as_apply(B, n)
    t0 = time.perf_counter()

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply_A(x) if x0 is not None else b.copy()
    z = apply_B(r)
    rz = float(r @ z)
    if rz < 0:
        raise BreakdownError("r.T B r", rz)
    history = [np.sqrt(rz)]
    alphas, betas = [], []
    if rz == 0.0:
        return SolveReport(x, 0, np.array(history), True, solve_seconds=time.perf_counter() - t0)
    stop = tol * history[0]
    p = z.copy()
    converged = False
    it = 0
    while it < maxit:
        Ap = apply_A(p)
        pAp = float(p @ Ap)
        if pAp <= _TINY:
            raise BreakdownError("p.T A p", pAp)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = apply_B(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise BreakdownError("r.T B r", rz_new)
        it += 1
        history.append(np.sqrt(rz_new))
        beta = rz_new / rz
        if estimate_cond:
            alphas.append(alpha)
            betas.append(beta)
        if history[-1] <= stop:
            converged = True
            break
        rz = rz_new
        p = z + beta * p
    cond = None
    if estimate_cond and len(alphas) >= 2:
        cond = lanczos_cond_estimate(alphas, betas)
    elif estimate_cond and len(alphas) == 1:
        cond = 1.0
    report = SolveReport(
        solution=x,
        iterations=it,
        residual_history=np.array(history),
        converged=converged,
        cond_estimate=cond,
        solve_seconds=time.perf_counter() - t0,
    )
    report.alphas, report.betas = alphas, betas
    return report


def minres(A, b, B=None, tol=1e-6, maxit=DEFAULT_MAXIT):
    """Preconditioned MINRES for symmetric (possibly indefinite) ``A``.

    ``B`` must be SPD.  The recorded residual is the ``B``-norm of ``b - A x``.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    apply_A = as_apply(A, n)
    apply_B = as_apply(B, n)
    t0 = time.perf_counter()
    eps = np.finfo(np.float64).eps

    x = np.zeros(n)
    r1 = b.copy()
    y = apply_B(r1)
    ry = float(r1 @ y)
    if ry < 0:
        raise BreakdownError("r.T B r", ry)
    beta1 = np.sqrt(ry)
    history = [beta1]
    if beta1 == 0.0:
        return SolveReport(x, 0, np.array(history), True, solve_seconds=time.perf_counter() - t0)

    oldb, beta, dbar, epsln, phibar = 0.0, beta1, 0.0, 0.0, beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1
    converged = False
    it = 0
    while it < maxit:
        it += 1
        v = y / beta
        y = apply_A(v)
        if it >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = apply_B(r2)
        oldb = beta
        ry = float(r2 @ y)
        if ry < 0:
            raise BreakdownError("r.T B r", ry)
        beta = np.sqrt(ry)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x += phi * w
        history.append(abs(phibar))
        if abs(phibar) <= tol * beta1:
            converged = True
            break
        if beta == 0.0:
            # invariant subspace found; x is exact
            converged = True
            break
    return SolveReport(
        solution=x,
        iterations=it,
        residual_history=np.array(history),
        converged=converged,
        solve_seconds=time.perf_counter() - t0,
    )
