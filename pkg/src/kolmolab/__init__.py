"""kolmolab: discrete experiments on Kolmogorov operators with form-bounded drift.

The functional API lives in the submodules; the estimator-style wrappers
(:class:`FormBoundEstimator`, :class:`FriedrichsMollifier`,
:class:`KolmogorovSolver`, :class:`ApproximationScheme`,
:class:`RegularityProfiler`) follow the scikit-learn ``fit`` conventions.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .approximation import ApproximationReport, ApproximationScheme, run_scheme
from .cutoff import eta, verify_cutoff_bounds, zeta_family
from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    DegenerateInputError,
    DomainError,
    HypothesisViolation,
    KolmolabError,
    ResolutionError,
    SingularityError,
    SolveError,
)
from .fields import BoundarySpec, DriftSpec, MatrixSpec, make_boundary, make_drift, make_matrix
from .formbounds import FormBoundEstimator, estimate_mf_delta, estimate_quadratic_bound, hardy_reference
from .grid import GridDomain, MatrixField, ScalarField, VectorField, build_domain
from .mollify import FriedrichsMollifier, friedrichs_kernel, mollify_drift, mollify_field, verify_mollification
from .regularity import RegularityProfiler, RegularityReport, profile
from .solver import KolmogorovSolver, assemble, solve_dirichlet, weak_residual

__all__ = [
    "__version__",
    "ApproximationReport",
    "ApproximationScheme",
    "BoundarySpec",
    "ConfigurationError",
    "ConvergenceError",
    "DegenerateInputError",
    "DomainError",
    "DriftSpec",
    "FormBoundEstimator",
    "FriedrichsMollifier",
    "GridDomain",
    "HypothesisViolation",
    "KolmogorovSolver",
    "KolmolabError",
    "MatrixField",
    "MatrixSpec",
    "RegularityProfiler",
    "RegularityReport",
    "ResolutionError",
    "ScalarField",
    "SingularityError",
    "SolveError",
    "VectorField",
    "assemble",
    "build_domain",
    "estimate_mf_delta",
    "estimate_quadratic_bound",
    "eta",
    "friedrichs_kernel",
    "hardy_reference",
    "make_boundary",
    "make_drift",
    "make_matrix",
    "mollify_drift",
    "mollify_field",
    "profile",
    "run_scheme",
    "solve_dirichlet",
    "verify_cutoff_bounds",
    "verify_mollification",
    "weak_residual",
    "zeta_family",
]
