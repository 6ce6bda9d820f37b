"""Quasi-Newton methods for nonlinear eigenvalue problems M(lam) v = 0.

Submodules: ``core`` (problem abstraction, augmented system, shift
factorization), ``problems`` (benchmarks and spectrum enumeration),
``solvers`` (QN1-QN4), ``analysis`` (convergence factors), ``keldysh``
(partial-fraction form of M^{-1}) and ``cli``.
"""

from .core import (
    AugmentedVector, Breakdown, DomainError, Eigentriplet, FactorizationError, NepError,
    NepProblem, ShiftFactorization, adjoint_solve, augmented_residual, derivative,
    divided_difference, evaluate, exact_jacobian, factorize, newton_refine, solve,
)
from .problems import (
    SpectrumReport, circle_quadratic, counterexample, enumerate_spectrum, linear,
    loaded_string, polynomial, rational,
)
from .solvers import IterationTrace, SolverConfig, run
from .analysis import (
    clustering_bound, condition_numbers, estimated_factors, matrix_A1, matrix_A2, matrix_B,
    spectral_radius,
)
from .keldysh import Contour, contour_remainder, decompose, partial_fraction, remainder_decay

__version__ = "0.1.0"
