"""Acceptance criteria; each test reports one ``CRITERION <id>: PASS|FAIL`` line.

Run ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""
import sys
import time

import numpy as np
import pytest
import scipy.sparse as sp

from mlprec.amg import ELLIPTIC_PARAMS, AmgParams, aggregate, setup_hierarchy
from mlprec.krylov import lanczos_cond_estimate, pcg
from mlprec.metric import build_schwarz_blocks, kernel_frames, metric_amg_setup, solve_coupled
from mlprec.problems import coupled_3d1d, elliptic_3d, fractional_pair
from mlprec.rational import aaa, dense_fractional_operator, fractional_function, poles_residues, ra_setup, spectral_bound
from mlprec.sparse import canonicalize, dense_gen_eig, laplacian_1d

ELLIPTIC_N = [8, 16, 32, 64]
COEFS = [1.0, 1e-3, 1e-6]
RHOS = [1.0, 1e2, 1e4, 1e6, 1e8]
# --- shared runs ------------------------------------------------------------------

def _elliptic_run(n, repeats=1):
    es = elliptic_3d(n)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        h = setup_hierarchy(es.A, params=ELLIPTIC_PARAMS)
        setup = time.perf_counter() - t0
        rep = pcg(es.A, es.b, h, tol=1e-6, estimate_cond=True)
        times.append(setup + rep.solve_seconds)
    res = np.linalg.norm(es.A @ rep.solution - es.b) / np.linalg.norm(es.b)
    return dict(n=n, dofs=es.n_dofs, iters=rep.iterations, converged=rep.converged,
                seconds=float(np.median(times)), residual=res, hierarchy=h)


@pytest.fixture(scope="module")
def elliptic_runs():
    _elliptic_run(3)  # compile the numba kernels outside the timings
    t0 = time.perf_counter()
    runs = [_elliptic_run(n, repeats=5 if n < 64 else 3) for n in ELLIPTIC_N]
    # wall time of one pass of setup+solve over all sizes, assembly included
    wall = time.perf_counter() - t0
    return runs, wall


@pytest.fixture(scope="module")
def fractional_runs():
    runs = []
    for n in (64, 256):
        A, M = fractional_pair(1, n)
        b = np.random.default_rng(n).standard_normal(A.shape[0])
        for alpha in COEFS:
            for beta in COEFS:
                rp = ra_setup(A, M, -0.5, 0.5, alpha, beta, dim=1, aaa_tol=1e-12)
                F = dense_fractional_operator(A, M, alpha, beta, -0.5, 0.5)
                rep = pcg(F, b, rp, tol=1e-8, estimate_cond=True)
                runs.append(dict(n=n, alpha=alpha, beta=beta, rp=rp, rep=rep))
    return runs


@pytest.fixture(scope="module")
def coupled_runs():
    t0 = time.perf_counter()
    runs = []
    for rho in RHOS:
        cs = coupled_3d1d(8, rho_t=rho)
        rep = solve_coupled(cs, tol=1e-6)
        res = np.linalg.norm(cs.matvec(rep.solution) - cs.b) / np.linalg.norm(cs.b)
        runs.append(dict(rho=rho, rep=rep, residual=res))
    return runs, time.perf_counter() - t0


# --- criteria ---------------------------------------------------------------------

def test_criterion_1_elliptic_iterations(elliptic_runs, acceptance_report):
    runs, wall = elliptic_runs
    its = [r["iters"] for r in runs]
    ok = (all(r["converged"] and r["iters"] <= 13 and r["residual"] <= 1e-4 for r in runs)
          and max(its) - min(its) <= 3 and wall < 30.0)
    detail = ", ".join(f"{r['dofs']}:{r['iters']}" for r in runs)
    assert acceptance_report(1, ok, f"iterations {detail}; growth {max(its) - min(its)} (<=3); <=13 each; "
                         f"max rel. residual {max(r['residual'] for r in runs):.1e}; wall {wall:.1f}s (<30s)")


def test_criterion_2_elliptic_scaling(elliptic_runs, acceptance_report):
    runs, _ = elliptic_runs
    by = {r["dofs"]: r for r in runs}
    parts, ok = [], True
    for a, b in [(4913, 35937), (35937, 274625)]:
        t_ratio = by[b]["seconds"] / by[a]["seconds"]
        limit = 1.4 * b / a
        ok &= t_ratio <= limit
        parts.append(f"{a}->{b}: time x{t_ratio:.2f} (limit x{limit:.2f})")
    assert acceptance_report(2, ok, "; ".join(parts))


def test_criterion_3_aaa_pole_count(fractional_runs, acceptance_report):
    worst_np, worst_ratio, ok = 0, 0.0, True
    for run in fractional_runs:
        if run["n"] != 64:
            continue
        rp = run["rp"]
        lam_lo = rp.params["lam_lo"]
        g = fractional_function(run["alpha"], run["beta"], -0.5, 0.5)
        probe = np.logspace(np.log10(lam_lo), 0.0, 10**6)
        err = np.max(np.abs(rp.fit(probe) - g(rp.rho * probe)))
        ratio = err / rp.fit.max_error
        ok &= rp.n_poles <= 25 and ratio <= 1.01 and np.all(rp.form.poles <= 0)
        worst_np, worst_ratio = max(worst_np, rp.n_poles), max(worst_ratio, ratio)
    assert acceptance_report(3, ok, f"max n_p {worst_np} (<=25) over 3x3 (alpha,beta) at tol 1e-12; "
                         f"max dense-probe/reported error {worst_ratio:.4f} (<=1.01)")


def test_criterion_4_ra_robustness(fractional_runs, acceptance_report):
    its = [r["rep"].iterations for r in fractional_runs]
    ok = all(r["rep"].converged for r in fractional_runs) and max(its) <= 15 and max(its) - min(its) <= 5
    kap = max(r["rep"].cond_estimate or 1.0 for r in fractional_runs)
    assert acceptance_report(4, ok, f"iterations {min(its)}..{max(its)} (<=15, spread <=5) over 18 runs "
                         f"n in {{64,256}}; max kappa {kap:.3f}")


def test_criterion_5_metric_robustness(coupled_runs, acceptance_report):
    runs, wall = coupled_runs
    its = [r["rep"].iterations for r in runs]
    kap = [r["rep"].cond_estimate for r in runs]
    ok = (all(r["rep"].converged and r["residual"] <= 1e-4 for r in runs)
          and max(its) / min(its) <= 2 and max(kap) <= 10 and wall < 60.0)
    detail = ", ".join(f"{r['rho']:.0e}:{r['rep'].iterations}" for r in runs)
    assert acceptance_report(5, ok, f"iterations {detail}; ratio {max(its) / min(its):.2f} (<=2); "
                         f"max kappa {max(kap):.2f} (<=10); wall {wall:.1f}s (<60s)")


def _vcycle_defect(h, rng, probes=10):
    n = h.shape[0]
    sym, pos = 0.0, True
    for _ in range(probes):
        g1, g2 = rng.standard_normal(n), rng.standard_normal(n)
        b1, b2 = h.vcycle(g1), h.vcycle(g2)
        sym = max(sym, abs(b1 @ g2 - g1 @ b2) / (np.linalg.norm(b1) * np.linalg.norm(g2)))
        pos &= bool(g1 @ b1 > 0)
    return sym, pos


def _galerkin_defect(h):
    worst = 0.0
    for fine, coarse in zip(h.levels, h.levels[1:]):
        ref = (fine.P.T @ fine.A) @ fine.P
        worst = max(worst, abs(coarse.A - ref).max() / abs(ref).max())
    return worst


def test_criterion_6_operator_properties(elliptic_runs, fractional_runs, coupled_runs, acceptance_report):
    rng = np.random.default_rng(6)
    hierarchies = [r["hierarchy"] for r in elliptic_runs[0]]
    hierarchies += [h for run in fractional_runs if run["alpha"] == run["beta"] == 1.0 for h in run["rp"].inner]
    hierarchies += [metric_amg_setup(coupled_3d1d(8, rho_t=rho)).global_hierarchy for rho in RHOS]

    # (a) V-cycle symmetry and positivity on probes
    sym, pos = 0.0, True
    for h in hierarchies:
        s, p = _vcycle_defect(h, rng)
        sym, pos = max(sym, s), pos and p
    ok_a = sym <= 1e-11 and pos

    # (b) Galerkin products on every level
    gal = max(_galerkin_defect(h) for h in hierarchies)
    ok_b = gal <= 1e-12

    # (c) kernel containment, exhaustively
    ok_c = True
    for n in (4, 8):
        cs = coupled_3d1d(n)
        blocks = [set(b.tolist()) for b in build_schwarz_blocks(cs).blocks]
        ok_c &= all(set(f.tolist()) <= blocks[i] for i, f in enumerate(kernel_frames(cs)))

    # (d) aggregate partition on random sparse SPD graphs
    ok_d, r = True, np.random.default_rng(1000)
    for _ in range(1000):
        n = int(r.integers(1, 201))
        G = sp.random(n, n, density=float(r.uniform(0, 0.05)), random_state=r, format="csr")
        A = canonicalize(G + G.T + sp.diags(np.full(n, 1.0 + 2 * abs(G).sum(axis=1).A1.max(initial=0))))
        max_agg = int(r.integers(2, 20))
        labels, nc = aggregate(A, max_agg)
        sizes = np.bincount(labels, minlength=nc)
        good = labels.shape == (n,) and labels.min() >= 0 and labels.max() == nc - 1
        good = good and sizes.min() >= 1 and sizes.max() <= max_agg
        if good:
            _, comp = sp.csgraph.connected_components(A, directed=False)
            for a in range(nc):
                members = np.flatnonzero(labels == a)
                ncomp, _ = sp.csgraph.connected_components(A[members][:, members], directed=False)
                good &= ncomp == 1
        ok_d &= bool(good)

    # (e) spectral bound against the dense oracle
    ok_e, slack = True, []
    for dim, n in ((1, 64), (2, 16)):
        A, M = fractional_pair(dim, n)
        lam, _ = dense_gen_eig(A.toarray(), M.toarray())
        bound = spectral_bound(A, M, dim)
        ok_e &= bound >= lam[-1]
        slack.append(bound / lam[-1])

    # (f) CG-Lanczos condition estimate, Jacobi preconditioner
    ok_f, errs = True, []
    for A in (laplacian_1d(32), canonicalize(sum(fractional_pair(1, 31)[:1]))):
        d = A.diagonal()
        lam = np.linalg.eigvals(A.toarray() / d[:, None]).real
        kappa = lam.max() / lam.min()
        rep = pcg(A, rng.standard_normal(32), lambda v: v / d, tol=1e-14, estimate_cond=True)
        errs.append(abs(rep.cond_estimate / kappa - 1))
        ok_f &= errs[-1] <= 0.10

    ok = ok_a and ok_b and ok_c and ok_d and ok_e and ok_f
    flags = dict(a=ok_a, b=ok_b, c=ok_c, d=ok_d, e=ok_e, f=ok_f)
    assert acceptance_report(6, ok, " ".join(f"({k}){'ok' if v else 'FAIL'}" for k, v in flags.items())
                  + f"; sym {sym:.1e} (<=1e-11), galerkin {gal:.1e} (<=1e-12), "
                    f"bound/rho {min(slack):.2f}..{max(slack):.2f}, kappa err {max(errs):.1e} (<=0.10); "
                    f"{len(hierarchies)} hierarchies")


def test_criterion_7_oracle_equivalence(acceptance_report):
    rng = np.random.default_rng(7)
    # single-level AMG is the direct solve
    A = laplacian_1d(60, shift=0.3)
    h = setup_hierarchy(A, params=AmgParams(coarse_min_dim=100))
    g = rng.standard_normal(60)
    direct = np.linalg.solve(A.toarray(), g)
    err_amg = np.linalg.norm(h.vcycle(g) - direct) / np.linalg.norm(direct)
    ok_amg = len(h.levels) == 1 and err_amg <= 1e-10

    # AAA recovers degree-1 rationals
    xs = np.linspace(0, 1, 400)
    ok_aaa, worst = True, 0.0
    for _ in range(20):
        a, c, d = rng.uniform(-2, 2), rng.uniform(0.2, 3) * rng.choice([-1, 1]), rng.uniform(0.1, 5)
        b = aaa(xs, a + c / (xs + d))
        form = poles_residues(b)
        e = max(abs(form.poles[0] + d) / d, abs(form.residues[0] - c) / abs(c), abs(form.c0 - a))
        worst = max(worst, e)
        ok_aaa &= len(b.support_points) == 2 and form.n_poles == 1 and e <= 1e-10

    # finite termination on k distinct eigenvalues
    ok_cg = True
    for k in range(1, 9):
        vals = rng.uniform(1, 100, k)
        dvec = np.concatenate([vals, vals[rng.integers(0, k, 100 - k)]])
        rep = pcg(sp.diags(dvec), rng.standard_normal(100), tol=1e-12)
        ok_cg &= rep.converged and rep.iterations <= k

    ok = ok_amg and ok_aaa and ok_cg
    assert acceptance_report(7, ok, f"single-level AMG vs direct {err_amg:.1e} (<=1e-10); "
                         f"AAA degree-1 recovery worst {worst:.1e} (<=1e-10); "
                         f"CG finite termination k=1..8 {'ok' if ok_cg else 'FAIL'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
