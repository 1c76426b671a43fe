"""Command-line driver: benchmark sweeps and solves of Matrix Market systems.

Every subcommand prints one report row per solve, as CSV (default) or JSON
lines.  Exit codes: 0 success, 1 other solver errors, 2 malformed input or
arguments, 3 dimension mismatch, 4 a solve did not converge.
"""

import argparse
import csv
from dataclasses import asdict
import io
import json
import sys
import time

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .amg import ELLIPTIC_PARAMS, AmgParams, AmgType, Smoother, setup_hierarchy, smoother_apply
from .errors import DimensionError, ParseError, SolverError
from .krylov import pcg
from .metric import DEFAULT_GLOBAL_PARAMS, DEFAULT_LINE_WIDTH, build_metric_amg, field_constants, solve_coupled
from .mmio import read_matrix_market, read_vector, write_vector
from .problems import coupled_3d1d, elliptic_3d, fractional_pair
from .rational import DENSE_LIMIT, dense_fractional_operator, ra_setup

COLUMNS = ["problem", "n_dofs", "solver", "params", "iters", "converged", "kappa", "setup_s", "solve_s"]

EXIT_OK, EXIT_ERROR, EXIT_PARSE, EXIT_DIMENSION, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4

AMG_FIELDS = [
    ("amg_type", str, "UA or SA"),
    ("max_levels", int, "maximum number of levels"),
    ("strong_coupled", float, "strength threshold theta"),
    ("max_aggregation", int, "largest aggregate size"),
    ("smoother", str, "jacobi, gs, gs_backward or sgs"),
    ("presmooth_steps", int, "pre-smoothing sweeps"),
    ("postsmooth_steps", int, "post-smoothing sweeps"),
    ("coarse_min_dim", int, "stop coarsening at this size"),
    ("jacobi_weight", float, "Jacobi damping / SA smoothing weight"),
    ("coarse_scale", float, "coarse correction scaling"),
]


class UsageError(ValueError):
    """Invalid combination of arguments."""


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config(path):
    """Parse ``key = value`` lines; ``#`` and ``%`` start comments.

    Keys are normalized to use underscores.  Raises :class:`ParseError`
    with the offending line number on malformed lines or repeated keys.
    """
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw
            for mark in ("#", "%"):
                line = line.split(mark, 1)[0]
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}: expected 'key = value', got {raw.strip()!r}", lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise ParseError(f"{path}: empty key or value", lineno)
            key = key.replace("-", "_").lower()
            if key in values:
                raise ParseError(f"{path}: key {key!r} given twice", lineno)
            values[key] = value
    return values


def _add_amg_flags(parser, defaults):
    group = parser.add_argument_group("AMG", f"defaults: {_params_dict(defaults)}")
    for name, typ, text in AMG_FIELDS:
        group.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None, help=text)


def _amg_params(args, base):
    changes = {name: getattr(args, name) for name, _, _ in AMG_FIELDS if getattr(args, name) is not None}
    try:
        return base.with_(**changes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _params_dict(params):
    out = asdict(params)
    out["amg_type"] = AmgType(out["amg_type"]).value
    out["smoother"] = Smoother(out["smoother"]).value
    return out


def _common(tol):
    # a fresh parent per subcommand: argparse shares parent actions, so
    # per-subcommand defaults would otherwise leak between them
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; command-line flags take precedence")
    common.add_argument("--output", choices=["csv", "jsonl"], default="csv", help="report format")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--tol", type=float, default=tol, help="relative preconditioned residual tolerance")
    common.add_argument("--maxit", type=int, default=1000, help="iteration cap")
    return common


def build_parser():
    parser = argparse.ArgumentParser(prog="mlprec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("elliptic", parents=[_common(1e-6)], help="PCG + AMG on the 3d diffusion-reaction problem")
    p.add_argument("--n", type=_int_list, default="8,16,32", help="cells per axis, comma-separated")
    _add_amg_flags(p, ELLIPTIC_PARAMS)

    p = sub.add_parser("fractional", parents=[_common(1e-8)], help="PCG + rational preconditioner on a dense fractional operator")
    p.add_argument("--dim", type=int, default=1, choices=[1, 2])
    p.add_argument("--n", type=int, default=64, help="cells per axis")
    p.add_argument("--alpha", type=_float_list, default="1", help="coefficient(s) of the s power")
    p.add_argument("--beta", type=_float_list, default="1e-3", help="coefficient(s) of the t power")
    p.add_argument("--s", type=float, default=-0.5)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--aaa-tol", dest="aaa_tol", type=float, default=1e-12)
    p.add_argument("--inner-tol", dest="inner_tol", type=float, default=1e-6)
    p.add_argument("--inner-maxit", dest="inner_maxit", type=int, default=100)
    p.add_argument("--seed", type=int, default=0, help="seed of the random right-hand side")
    _add_amg_flags(p, AmgParams())

    p = sub.add_parser("coupled", parents=[_common(1e-6)], help="PCG + metric AMG on the 3d-1d coupled problem")
    p.add_argument("--n", type=int, default=8, help="cells per axis")
    p.add_argument("--rho-t", dest="rho_t", type=_float_list, default="1,1e2,1e4,1e6,1e8")
    p.add_argument("--sigma3", type=float, default=1.0)
    p.add_argument("--sigma1", type=float, default=1.0)
    p.add_argument("--rings", type=int, default=1, help="layers of 3d neighbours in each Schwarz block")
    p.add_argument("--line-width", dest="line_width", type=int, default=DEFAULT_LINE_WIDTH,
                   help="neighbouring 1d dofs per side sharing a Schwarz block")
    p.add_argument("--baseline", type=_bool, nargs="?", const=True, default=False,
                   help="also report plain AMG on the same systems")
    _add_amg_flags(p, DEFAULT_GLOBAL_PARAMS)

    p = sub.add_parser("solve", parents=[_common(1e-6)], help="solve a Matrix Market system")
    p.add_argument("matrix", help="symmetric matrix A (.mtx)")
    p.add_argument("--rhs", help="right-hand side vector (.mtx array); default all ones")
    p.add_argument("--precond", choices=["none", "jacobi", "gs", "amg", "ra", "metric"], default="amg")
    p.add_argument("--solution", help="write the solution vector here")
    p.add_argument("--mass", help="mass matrix M for --precond ra")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1e-3)
    p.add_argument("--s", type=float, default=-0.5)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--dim", type=int, default=1, help="topological dimension for the spectral bound")
    p.add_argument("--aaa-tol", dest="aaa_tol", type=float, default=1e-12)
    p.add_argument("--pi", help="coupling operator Pi (n1 x n3) for --precond metric")
    p.add_argument("--rho-t", dest="rho_t", type=float, default=0.0, help="coupling weight in A for --precond metric")
    p.add_argument("--line-width", dest="line_width", type=int, default=DEFAULT_LINE_WIDTH)
    _add_amg_flags(p, ELLIPTIC_PARAMS)
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv=None):
    """Parse flags, then fold in ``--config`` values that flags do not override."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = read_config(args.config)
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise UsageError(f"unknown config key(s) for '{args.command}': {', '.join(unknown)}")
    defaults = {}
    for key, text in values.items():
        action = actions[key]
        if action.type is None:
            if action.choices is not None and text not in action.choices:
                raise UsageError(f"config key {key!r}: {text!r} not in {sorted(action.choices)}")
            defaults[key] = text
            continue
        try:
            defaults[key] = action.type(text)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and defaults[key] not in action.choices:
            raise UsageError(f"config key {key!r}: {text!r} not in {sorted(action.choices)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _row(problem, n_dofs, solver, params, rep, setup_s):
    return {
        "problem": problem,
        "n_dofs": int(n_dofs),
        "solver": solver,
        "params": json.dumps(params, sort_keys=True, separators=(",", ":")),
        "iters": int(rep.iterations),
        "converged": bool(rep.converged),
        "kappa": None if rep.cond_estimate is None else float(rep.cond_estimate),
        "setup_s": round(float(setup_s), 3),
        "solve_s": round(float(rep.solve_seconds), 3),
    }


def format_rows(rows, fmt):
    buf = io.StringIO()
    if fmt == "jsonl":
        for row in rows:
            buf.write(json.dumps(row) + "\n")
        return buf.getvalue()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()


def cmd_elliptic(args):
    params = _amg_params(args, ELLIPTIC_PARAMS)
    rows = []
    for n in args.n:
        if n < 2:
            raise UsageError(f"--n values must be at least 2, got {n}")
        es = elliptic_3d(n)
        t0 = time.perf_counter()
        h = setup_hierarchy(es.A, params=params)
        setup = time.perf_counter() - t0
        rep = pcg(es.A, es.b, h, tol=args.tol, maxit=args.maxit, estimate_cond=True)
        info = {"n": n, "tol": args.tol, "levels": len(h.levels), "amg": _params_dict(params)}
        rows.append(_row("elliptic_3d", es.n_dofs, "pcg+amg", info, rep, setup))
    return rows


def cmd_fractional(args):
    params = _amg_params(args, AmgParams())
    A, M = fractional_pair(args.dim, args.n)
    if A.shape[0] > DENSE_LIMIT:
        raise UsageError(f"dense fractional operator limited to {DENSE_LIMIT} dofs, got {A.shape[0]}")
    rng = np.random.default_rng(args.seed)
    b = rng.standard_normal(A.shape[0])
    rows = []
    for alpha in args.alpha:
        for beta in args.beta:
            F = dense_fractional_operator(A, M, alpha, beta, args.s, args.t)
            t0 = time.perf_counter()
            rp = ra_setup(A, M, args.s, args.t, alpha, beta, args.dim, aaa_tol=args.aaa_tol,
                          amg_params=params, inner_tol=args.inner_tol, inner_maxit=args.inner_maxit)
            setup = time.perf_counter() - t0
            rep = pcg(F, b, rp, tol=args.tol, maxit=args.maxit, estimate_cond=True)
            info = {
                "dim": args.dim, "n": args.n, "alpha": alpha, "beta": beta, "s": args.s, "t": args.t,
                "tol": args.tol, "aaa_tol": args.aaa_tol, "n_poles": rp.n_poles,
                "fit_rel_error": rp.form_error / np.max(np.abs(rp.fit.values)),
                "inner_warnings": len(rp.warnings),
            }
            rows.append(_row(f"fractional_pair_{args.dim}d", A.shape[0], "pcg+ra", info, rep, setup))
    return rows


def cmd_coupled(args):
    params = _amg_params(args, DEFAULT_GLOBAL_PARAMS)
    rows = []
    for rho_t in args.rho_t:
        cs = coupled_3d1d(args.n, sigma3=args.sigma3, sigma1=args.sigma1, rho_t=rho_t)
        info = {"n": args.n, "rho_t": rho_t, "sigma3": args.sigma3, "sigma1": args.sigma1,
                "tol": args.tol, "amg": _params_dict(params)}
        rep = solve_coupled(cs, tol=args.tol, params=params, maxit=args.maxit,
                            rings=args.rings, line_width=args.line_width)
        rows.append(_row("coupled_3d1d", cs.n_dofs, "pcg+metric-amg",
                         dict(info, rings=args.rings, line_width=args.line_width), rep, rep.setup_seconds))
        if args.baseline:
            t0 = time.perf_counter()
            h = setup_hierarchy(cs.A.flatten(), near_kernel=field_constants(cs.n3, cs.n1), params=params)
            setup = time.perf_counter() - t0
            rep = pcg(cs.matvec, cs.b, h, tol=args.tol, maxit=args.maxit, estimate_cond=True)
            rows.append(_row("coupled_3d1d", cs.n_dofs, "pcg+amg", info, rep, setup))
    return rows


def _jacobi(A):
    d = A.diagonal()
    if np.any(d <= 0):
        raise UsageError("Jacobi preconditioner needs a positive diagonal")
    return LinearOperator(A.shape, matvec=lambda r: np.ravel(r) / d, dtype=np.float64)


def _sym_gs(A):
    d = A.diagonal()

    def apply(r):
        return smoother_apply(Smoother.SYM_GS, A, np.ascontiguousarray(np.ravel(r), dtype=np.float64),
                              np.zeros(A.shape[0]), 1, d)

    return LinearOperator(A.shape, matvec=apply, dtype=np.float64)


def cmd_solve(args):
    A = read_matrix_market(args.matrix)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"matrix must be square, got {A.shape}")
    asym = abs(A - A.T).max() if A.nnz else 0.0
    if asym > 1e-12 * max(abs(A).max(), 1e-300):
        raise UsageError("matrix is not symmetric")
    n = A.shape[0]
    b = read_vector(args.rhs) if args.rhs else np.ones(n)
    if b.shape != (n,):
        raise DimensionError(f"right-hand side has length {b.shape[0]}, matrix is {n} x {n}")

    info = {"tol": args.tol, "precond": args.precond}
    system = A
    t0 = time.perf_counter()
    if args.precond == "none":
        B = None
    elif args.precond == "jacobi":
        B = _jacobi(A)
    elif args.precond == "gs":
        B = _sym_gs(A)
    elif args.precond == "amg":
        params = _amg_params(args, ELLIPTIC_PARAMS)
        B = setup_hierarchy(A, params=params)
        info["amg"] = _params_dict(params)
    elif args.precond == "ra":
        if not args.mass:
            raise UsageError("--precond ra needs --mass")
        M = read_matrix_market(args.mass)
        if M.shape != A.shape:
            raise DimensionError(f"mass matrix is {M.shape}, A is {A.shape}")
        if n > DENSE_LIMIT:
            raise UsageError(f"dense fractional operator limited to {DENSE_LIMIT} dofs, got {n}")
        system = dense_fractional_operator(A, M, args.alpha, args.beta, args.s, args.t)
        B = ra_setup(A, M, args.s, args.t, args.alpha, args.beta, args.dim, aaa_tol=args.aaa_tol,
                     amg_params=_amg_params(args, AmgParams()))
        info.update(alpha=args.alpha, beta=args.beta, s=args.s, t=args.t, n_poles=B.n_poles)
    else:
        if not args.pi:
            raise UsageError("--precond metric needs --pi")
        Pi = read_matrix_market(args.pi)
        if Pi.shape[0] + Pi.shape[1] != n:
            raise DimensionError(f"Pi is {Pi.shape}, which does not split a {n} x {n} matrix")
        G = sp.hstack([Pi, -sp.identity(Pi.shape[0])]).tocsr()
        AD = A - args.rho_t * (G.T @ G) if args.rho_t else A
        params = _amg_params(args, DEFAULT_GLOBAL_PARAMS)
        B = build_metric_amg(AD, Pi, args.rho_t, params=params, line_width=args.line_width)
        info.update(rho_t=args.rho_t, amg=_params_dict(params))
    setup = time.perf_counter() - t0
    rep = pcg(system, b, B, tol=args.tol, maxit=args.maxit, estimate_cond=True)
    if args.solution:
        write_vector(rep.solution, args.solution)
    return [_row(args.matrix, n, f"pcg+{args.precond}", info, rep, setup)]


COMMANDS = {"elliptic": cmd_elliptic, "fractional": cmd_fractional, "coupled": cmd_coupled, "solve": cmd_solve}


def main(argv=None):
    try:
        args = parse_args(argv)
        rows = COMMANDS[args.command](args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_PARSE
    except (ParseError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (SolverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = format_rows(rows, args.output)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not all(row["converged"] for row in rows):
        print("error: at least one solve did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
