import numpy as np
import pytest
import scipy.sparse as sp

from mlprec.problems import coupled_3d1d, elliptic_3d, fractional_pair, p1_load, p1_matrices
from mlprec.sparse import dense_gen_eig, dense_sym_eig


def _sym_err(A):
    return abs(A - A.T).max()


def test_elliptic_dims():
    assert elliptic_3d(8).n_dofs == 729
    assert elliptic_3d(2).n_dofs == 27


@pytest.mark.parametrize("n", [2, 4])
def test_elliptic_neumann_identity(n):
    es = elliptic_3d(n)
    one = np.ones(es.n_dofs)
    assert np.max(np.abs(es.A @ one - es.M @ one)) <= 1e-12
    assert _sym_err(es.A) == 0.0


def test_elliptic_spd_oracle():
    lam, _ = dense_sym_eig(elliptic_3d(4).A.toarray())
    assert lam[0] > 0


def test_stiffness_rows_sum_zero():
    K, M = p1_matrices(3, 4)
    assert np.max(np.abs(K @ np.ones(K.shape[0]))) <= 1e-12
    assert np.isclose(M.sum(), 1.0, rtol=1e-13)


def test_load_integrates_constant():
    # <1, phi_i> summed over i is the domain volume
    for dim in (1, 2, 3):
        b = p1_load(dim, 3, lambda x: np.ones(x.shape[0]))
        assert np.isclose(b.sum(), 1.0, rtol=1e-13)


def test_load_matches_mass_for_linear():
    # the rule is exact for products of linears, so <x0, phi> = M x0
    from mlprec.problems import grid_mesh

    coords, _ = grid_mesh(3, 3)
    _, M = p1_matrices(3, 3)
    b = p1_load(3, 3, lambda x: x[:, 0])
    assert np.allclose(b, M @ coords[:, 0], rtol=0, atol=1e-14)


def test_fractional_pair_examples():
    A, M = fractional_pair(1, 3)
    assert A.shape == (4, 4)
    D = A.toarray()
    assert np.all(np.triu(D, 2) == 0) and np.all(np.tril(D, -2) == 0)
    A2, _ = fractional_pair(2, 4)
    assert A2.shape == (25, 25)


@pytest.mark.parametrize("dim,n", [(1, 16), (2, 6)])
def test_fractional_pair_spectrum_above_one(dim, n):
    A, M = fractional_pair(dim, n)
    lam, _ = dense_gen_eig(A.toarray(), M.toarray())
    assert lam[0] >= 1.0 - 1e-10
    assert _sym_err(A) == 0.0 and _sym_err(M) == 0.0


def test_fractional_pair_rejects():
    with pytest.raises(ValueError):
        fractional_pair(3, 4)
    with pytest.raises(ValueError):
        fractional_pair(1, 1)


def test_coupled_kernel_and_split(rng):
    cs = coupled_3d1d(4, rho_t=3.5)
    q3 = rng.standard_normal(cs.n3)
    x = np.concatenate([q3, cs.Pi @ q3])
    assert np.array_equal(cs.Mc @ x, np.zeros(cs.n_dofs))
    A, AD, Mc = cs.A.flatten(), cs.AD.flatten(), cs.Mc.flatten()
    assert abs(A - AD - 3.5 * Mc).max() <= 1e-14 * abs(A).max()
    assert np.allclose(cs.Pi.sum(axis=1), 1.0, rtol=0, atol=0)


def test_coupled_zero_coupling_exact():
    cs = coupled_3d1d(4, rho_t=0.0)
    assert (cs.A.flatten() != cs.AD.flatten()).nnz == 0


def test_coupled_metric_quadratic_form(rng):
    cs = coupled_3d1d(4)
    Mc = cs.Mc.flatten()
    for _ in range(10):
        x = rng.standard_normal(cs.n_dofs)
        d = cs.Pi @ x[: cs.n3] - x[cs.n3:]
        assert np.isclose(x @ (Mc @ x), d @ d, rtol=1e-12)
        assert d @ d > 0


def test_coupled_symmetric_positive():
    cs = coupled_3d1d(4, rho_t=10.0)
    A = cs.A.flatten()
    assert _sym_err(A) == 0.0
    lam, _ = dense_sym_eig(A.toarray())
    assert lam[0] > 0


def test_coupled_matvec_matches_flat(rng):
    cs = coupled_3d1d(4, rho_t=1e3)
    x = rng.standard_normal(cs.n_dofs)
    ref = cs.A.flatten() @ x
    assert np.linalg.norm(cs.matvec(x) - ref) <= 1e-13 * np.linalg.norm(ref)
    assert np.allclose(cs.A @ x, ref, rtol=1e-13, atol=1e-10)


def test_generators_deterministic():
    a, b = elliptic_3d(3), elliptic_3d(3)
    assert np.array_equal(a.A.data, b.A.data) and np.array_equal(a.b, b.b)
    c, d = coupled_3d1d(3, rho_t=2.0), coupled_3d1d(3, rho_t=2.0)
    assert (c.A.flatten() != d.A.flatten()).nnz == 0 and np.array_equal(c.b, d.b)
