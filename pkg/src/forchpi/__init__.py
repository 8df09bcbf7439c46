"""Productivity index of generalized Forchheimer flows in porous media.

Finite-volume solvers for the basic profile, the transient slightly
compressible and ideal-gas problems, and diagnostics of the boundary data
that control convergence of the productivity index.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DegenerateDataError,
    DomainError,
    ExpressionError,
    ForchError,
    QuadratureError,
    SolverError,
)
from .expr import Expr, expression_eval  # noqa: E402
from .grid import Grid, Region, ScalarField, build_annulus2d, build_radial  # noqa: E402
from .kernel import GPolynomial, Kernel, kappa, kappa_h, kappa_prime, two_term  # noqa: E402
from .pss import PssProblem, pss_pi, radial_darcy_profile, solve_basic_profile  # noqa: E402
from .transient import BoundaryProgram, PiTrajectory, run_ibvp1, run_ibvp2  # noqa: E402

__all__ = [
    "__version__",
    "ConfigError",
    "DegenerateDataError",
    "DomainError",
    "ExpressionError",
    "ForchError",
    "QuadratureError",
    "SolverError",
    "Expr",
    "expression_eval",
    "Grid",
    "Region",
    "ScalarField",
    "build_annulus2d",
    "build_radial",
    "GPolynomial",
    "Kernel",
    "kappa",
    "kappa_h",
    "kappa_prime",
    "two_term",
    "PssProblem",
    "pss_pi",
    "radial_darcy_profile",
    "solve_basic_profile",
    "BoundaryProgram",
    "PiTrajectory",
    "run_ibvp1",
    "run_ibvp2",
]
