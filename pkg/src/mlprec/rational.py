"""Rational-approximation preconditioners for sums of fractional powers.

Applies ``f(A) = (alpha A^s + beta A^t)^{-1}`` for SPD ``A`` with mass ``M``
through a partial-fraction expansion

    f(A) ~= c0 M^{-1} + sum_i rho c_i (A - rho p_i M)^{-1}

whose poles and residues come from an AAA fit of ``g(lam) = f(rho lam)`` on
the unit interval, ``rho`` bounding the spectrum of ``M^{-1} A``.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .amg import AmgParams, setup_hierarchy
from .errors import ComplexPolesError, DimensionError, NotSPDError, NumericalError
from .krylov import pcg
from .sparse import canonicalize, dense_gen_eig

__all__ = [
    "Barycentric",
    "PoleResidueForm",
    "RationalPrecond",
    "aaa",
    "poles_residues",
    "spectral_bound",
    "lower_spectral_bound",
    "fractional_function",
    "ra_setup",
    "ra_apply",
    "dense_fractional_operator",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
N_SAMPLES = 100_000
COMPLEX_RETRIES = 5


@dataclass
class Barycentric:
    """``r(x) = sum(w f / (x - z)) / sum(w / (x - z))``."""

    support_points: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    max_error: float
    converged: bool = True
    errors: list = field(default_factory=list, repr=False)

    @property
    def degree(self):
        return len(self.support_points) - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        xv = np.atleast_1d(x).ravel()
        z, f, w = self.support_points, self.values, self.weights
        with np.errstate(divide="ignore", invalid="ignore"):
            C = 1.0 / (xv[:, None] - z[None, :])
            r = (C @ (w * f)) / (C @ w)
        # exact values at support points
        hit = np.isinf(C)
        if hit.any():
            rows, cols = np.nonzero(hit)
            r[rows] = f[cols]
        return r.reshape(x.shape) if x.ndim else r[0]


@dataclass
class PoleResidueForm:
    """``R(x) = c0 + sum(c_i / (x - p_i))``."""

    c0: float
    residues: np.ndarray
    poles: np.ndarray

    @property
    def n_poles(self):
        return len(self.poles)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        xv = np.atleast_1d(x).ravel()
        r = self.c0 + (self.residues[None, :] / (xv[:, None] - self.poles[None, :])).sum(axis=1)
        return r.reshape(x.shape) if x.ndim else r[0]

    def scaled(self, rho):
        """Representation of ``x -> R(x / rho)``."""
        return PoleResidueForm(self.c0, rho * self.residues, rho * self.poles)


def aaa(xs, fs, tol=1e-12, max_terms=100):
    """Adaptive Antoulas-Anderson rational fit on a real sample set.

    Greedily adds the worst-approximated sample as a support point and
    recomputes barycentric weights as the right singular vector of the
    Loewner matrix belonging to its smallest singular value.  Stops once the
    sample error is at most ``tol * max|f|`` or ``max_terms`` support points
    are in use; in the latter case ``converged`` is ``False``.
    """
    Z = np.asarray(xs, dtype=np.float64).ravel()
    F = np.asarray(fs, dtype=np.float64).ravel()
    if Z.shape != F.shape:
        raise DimensionError("sample points and values differ in length")
    if len(Z) < 2:
        raise ValueError("AAA needs at least two samples")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(F))):
        raise ValueError("AAA samples must be finite")
    if len(np.unique(Z)) != len(Z):
        raise ValueError("AAA sample points must be distinct")

    scale = np.max(np.abs(F))
    target = tol * scale
    n_terms = min(max_terms, len(Z) - 1)
    free = np.ones(len(Z), dtype=bool)
    R = np.full_like(F, F.mean())
    C = np.empty((len(Z), n_terms))
    loewner = np.empty((len(Z), n_terms))
    support = []
    errors = []
    best = None
    for m in range(n_terms):
        j = int(np.argmax(np.abs(F - R) * free))
        support.append(j)
        free[j] = False
        with np.errstate(divide="ignore", invalid="ignore"):
            C[:, m] = 1.0 / (Z - Z[j])
            # subtracting first avoids cancellation when C is large
            loewner[:, m] = (F - F[j]) * C[:, m]
        _, _, Vh = scipy.linalg.svd(loewner[free, : m + 1], full_matrices=False, check_finite=False)
        w = Vh[-1]
        R = F.copy()
        Cf = C[free, : m + 1]
        R[free] = (Cf @ (w * F[support])) / (Cf @ w)
        err = float(np.max(np.abs(F - R)))
        errors.append(err)
        if best is None or err < best[0]:
            best = (err, Z[support].copy(), F[support].copy(), w.copy())
        if err <= target:
            return Barycentric(Z[support], F[support], w, err, True, errors)
    err, z, f, w = best
    return Barycentric(z, f, w, err, err <= target, errors)


def poles_residues(bary, xs=None, imag_tol=1e-8, newton_steps=3):
    """Partial-fraction form of a barycentric rational function.

    Poles are the finite eigenvalues of the arrowhead pencil
    ``([[0, w^T], [1, diag(z)]], diag(0, 1, ..., 1))``, polished by Newton
    steps on the barycentric denominator.  ``c0`` and the residues are then
    fitted to ``bary`` on ``xs`` by linear least squares, which keeps the
    two forms in agreement far better than the residue formula
    ``N(p) / D'(p)`` when a pole sits close to the samples.

    Parameters
    ----------
    bary : Barycentric
    xs : ndarray, optional
        Points where the forms are matched; defaults to a dense geometric
        or linear grid over the support range.
    imag_tol : float
        Relative imaginary part above which a pole counts as complex.
    newton_steps : int

    Raises
    ------
    ComplexPolesError
        If any pole is not real.
    NumericalError
        If a pole coincides with a matching point.
    """
    z, f, w = bary.support_points, bary.values, bary.weights
    m = len(z)
    if m == 1:
        return PoleResidueForm(float(f[0]), np.zeros(0), np.zeros(0))
    E = np.zeros((m + 1, m + 1))
    E[0, 1:] = w
    E[1:, 0] = 1.0
    E[1:, 1:] = np.diag(z)
    Bm = np.eye(m + 1)
    Bm[0, 0] = 0.0
    ev = scipy.linalg.eigvals(E, Bm)
    ev = ev[np.isfinite(ev)]
    # spurious huge eigenvalues stand in for the infinite ones
    span = max(1.0, np.max(np.abs(z)))
    ev = ev[np.abs(ev) < 1e12 * span]
    if np.any(np.abs(ev.imag) > imag_tol * np.maximum(1.0, np.abs(ev.real))):
        raise ComplexPolesError(m - 1, ev)
    poles = np.sort(ev.real)

    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(newton_steps):
            Cp = 1.0 / (poles[:, None] - z[None, :])
            step = (Cp @ w) / ((Cp**2) @ w)
            ok = np.isfinite(step) & (np.abs(step) < 1e-2 * np.maximum(np.abs(poles), 1e-300))
            poles = np.where(ok, poles + step, poles)
    poles = np.sort(poles)

    if xs is None:
        lo, hi = z.min(), z.max()
        xs = np.geomspace(lo, hi, 200 * m) if lo > 0 else np.linspace(lo, hi, 200 * m)
    xs = np.union1d(np.asarray(xs, dtype=np.float64).ravel(), z)
    return _fit_residues(xs, bary(xs), poles)


def _fit_residues(xs, fs, poles):
    """Least-squares ``c0`` and residues for fixed poles."""
    with np.errstate(divide="ignore"):
        design = np.empty((len(xs), len(poles) + 1))
        design[:, 0] = 1.0
        design[:, 1:] = 1.0 / (xs[:, None] - poles[None, :])
    if not np.all(np.isfinite(design)):
        raise NumericalError("a pole coincides with a sample point")
    # unit columns so the rank cutoff does not discard near-singular poles
    norms = np.linalg.norm(design, axis=0)
    coef, *_ = scipy.linalg.lstsq(design / norms, fs, check_finite=False)
    coef = coef / norms
    return PoleResidueForm(float(coef[0]), coef[1:], poles)


def spectral_bound(A, M, dim):
    """Upper bound ``d (d + 1) ||A||_inf / min(diag(M))`` on ``rho(M^{-1} A)``.

    Valid for P1 mass matrices in topological dimension ``dim``.
    """
    d = M.diagonal()
    if np.any(d <= 0):
        raise NotSPDError("mass matrix has a non-positive diagonal entry")
    norm_inf = float(np.max(np.abs(A).sum(axis=1)))
    return dim * (dim + 1) * norm_inf / float(d.min())


def lower_spectral_bound(A, M):
    """Lower estimate of ``lambda_min(M^{-1} A)``.

    Exact (dense) for small systems, otherwise half of a shift-invert
    Lanczos estimate.
    """
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        lam, _ = dense_gen_eig(A.toarray(), M.toarray())
        return float(lam[0])
    from scipy.sparse.linalg import eigsh

    lam = eigsh(sp.csc_matrix(A), k=1, M=sp.csc_matrix(M), sigma=0.0, which="LM",
                return_eigenvectors=False)
    return 0.5 * float(lam.min())


def fractional_function(alpha, beta, s, t):
    """``x -> 1 / (alpha x^s + beta x^t)``."""
    return lambda x: 1.0 / (alpha * np.power(x, s) + beta * np.power(x, t))


def _pcg_jacobi(M, r, tol, maxit):
    d = M.diagonal()
    return pcg(M, r, lambda v: v / d, tol=tol, maxit=maxit)


class RationalPrecond(LinearOperator):
    """Applies ``(alpha A^s + beta A^t)^{-1}`` through shifted AMG-PCG solves."""

    def __init__(self, form, rho, A, M, inner, inner_tol=1e-6, inner_maxit=100,
                 unscaled=None, fit=None, form_error=None, params=None):
        super().__init__(dtype=np.float64, shape=A.shape)
        self.form = form
        self.rho = rho
        self.A = A
        self.M = M
        self.inner = inner
        self.inner_tol = inner_tol
        self.inner_maxit = inner_maxit
        self.unscaled = unscaled
        self.fit = fit
        self.form_error = form_error
        self.params = params or {}
        self.warnings = []

    @property
    def n_poles(self):
        return self.form.n_poles

    def _matvec(self, r):
        return ra_apply(self, np.asarray(r, dtype=np.float64).ravel())

    def _adjoint(self):
        return self


def ra_setup(A, M, s, t, alpha, beta, dim, aaa_tol=1e-12, amg_params=None,
             inner_tol=1e-6, inner_maxit=100, max_terms=40, n_samples=N_SAMPLES):
    """Fit, scale and factor the rational preconditioner for ``(A, M)``."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    if alpha == 0 and beta == 0:
        raise ValueError("alpha and beta cannot both be zero")
    if not (-1.0 <= s <= 1.0 and -1.0 <= t <= 1.0):
        raise ValueError("powers s, t must lie in [-1, 1]")
    A = canonicalize(A)
    M = canonicalize(M)
    if A.shape != M.shape:
        raise DimensionError(f"A is {A.shape}, M is {M.shape}")

    rho = spectral_bound(A, M, dim)
    lam_lo = max(lower_spectral_bound(A, M) / rho, 1e-14)
    xs = np.logspace(np.log10(lam_lo), 0.0, n_samples)
    f = fractional_function(alpha, beta, s, t)
    fs = f(rho * xs)

    terms = max_terms
    for attempt in range(COMPLEX_RETRIES + 1):
        bary = aaa(xs, fs, tol=aaa_tol, max_terms=terms)
        try:
            form = poles_residues(bary, xs)
        except ComplexPolesError as exc:
            if attempt == COMPLEX_RETRIES:
                raise
            log.info("complex poles at degree %d; retrying with fewer terms", exc.degree)
            terms = len(bary.support_points) - 1
            continue
        break
    if not bary.converged:
        log.warning("AAA stopped at %d terms with error %.3e", len(bary.support_points), bary.max_error)
    if np.any(form.poles > 0):
        # a real pole right of the origin lies below the sampled interval;
        # pinning it at zero keeps every shifted matrix SPD
        log.info("clipping %d positive poles to zero", int(np.sum(form.poles > 0)))
        poles = np.unique(np.minimum(form.poles, 0.0))
        form = _fit_residues(xs, fs, poles)
    form_error = float(np.max(np.abs(form(xs) - fs)))

    scaled = form.scaled(rho)
    amg_params = amg_params or AmgParams()
    inner = [setup_hierarchy(canonicalize(A - p * M), params=amg_params) for p in scaled.poles]
    return RationalPrecond(
        scaled, rho, A, M, inner, inner_tol, inner_maxit, unscaled=form, fit=bary, form_error=form_error,
        params=dict(alpha=alpha, beta=beta, s=s, t=t, dim=dim, aaa_tol=aaa_tol, lam_lo=lam_lo),
    )


def ra_apply(rp, r):
    """``z = c0 M^{-1} r + sum_i rho c_i (A - rho p_i M)^{-1} r``.

    Inner solves that miss their tolerance are logged in ``rp.warnings``; the
    partial result is still used.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (rp.shape[0],):
        raise DimensionError(f"preconditioner of size {rp.shape[0]} applied to shape {r.shape}")
    z = np.zeros_like(r)
    form = rp.form
    if abs(form.c0) > 0.0:
        rep = _pcg_jacobi(rp.M, r, rp.inner_tol, rp.inner_maxit)
        if not rep.converged:
            rp.warnings.append(f"mass solve stopped at {rep.relative_residual:.2e}")
        z += form.c0 * rep.solution
    for c, p, h in zip(form.residues, form.poles, rp.inner):
        shifted = h.levels[0].A
        rep = pcg(shifted, r, h, tol=rp.inner_tol, maxit=rp.inner_maxit)
        if not rep.converged:
            rp.warnings.append(f"shifted solve (pole {p:.3e}) stopped at {rep.relative_residual:.2e}")
        z += c * rep.solution
    return z


def dense_fractional_operator(A, M, alpha, beta, s, t):
    """Dense ``M U (alpha L^s + beta L^t) U^T M`` from ``A U = M U L``."""
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M)
    lam, U = dense_gen_eig(Ad, Md)
    F = alpha * np.power(lam, s) + beta * np.power(lam, t)
    MU = Md @ U
    return (MU * F) @ MU.T
