"""Multilevel and rational-approximation preconditioners for sparse SPD systems.

Submodules
----------
sparse
    Canonical CSR helpers and small dense factorizations.
mmio
    Matrix Market input and output.
problems
    P1 finite element test problems on structured meshes.
krylov
    Preconditioned CG and MINRES with condition estimates.
amg
    Unsmoothed and smoothed aggregation AMG.
rational
    AAA fitting and the rational-function preconditioner.
metric
    Metric-perturbed AMG for coupled 3d-1d systems.
"""

from .amg import ELLIPTIC_PARAMS, AmgHierarchy, AmgParams, AmgType, Smoother, setup_hierarchy
from .errors import (
    BreakdownError,
    ComplexPolesError,
    DimensionError,
    InsufficientDataError,
    NotSPDError,
    NumericalError,
    ParseError,
    RankDeficiencyError,
    SolverError,
    StructuralError,
)
from .krylov import SolveReport, minres, pcg
from .metric import MetricAmgPrecond, metric_amg_setup, solve_coupled
from .problems import coupled_3d1d, elliptic_3d, fractional_pair
from .rational import RationalPrecond, aaa, poles_residues, ra_setup

__version__ = "0.1.0"
