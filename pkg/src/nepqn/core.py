"""Holomorphic matrix families, the augmented eigenvector system and shift solves."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

__all__ = [
    "NepError", "DomainError", "FactorizationError", "Breakdown",
    "NepProblem", "Eigentriplet", "AugmentedVector", "ShiftFactorization",
    "evaluate", "derivative", "divided_difference", "augmented_residual",
    "exact_jacobian", "factorize", "solve", "adjoint_solve", "newton_refine",
    "DD_SWITCH", "COND_WARN",
]

#: |lambda - mu| <= DD_SWITCH * (1 + |lambda|) selects the derivative branch.
DD_SWITCH = 1e-12
#: 1-norm condition estimate above which a factorization warns.
COND_WARN = 1e14


class NepError(Exception):
    """Base class for errors raised by this package."""


class DomainError(NepError, ValueError):
    """Raised when M is evaluated outside its domain (e.g. at a pole)."""


class FactorizationError(NepError):
    """Raised when M(sigma) is singular to working precision.

    ``rcond`` holds the reciprocal 1-norm condition estimate.
    """

    def __init__(self, msg, rcond=0.0):
        super().__init__(msg)
        self.rcond = rcond


class Breakdown(NepError):
    """Division by a scalar that is zero to working precision."""


@dataclass(frozen=True)
class NepProblem:
    """A holomorphic family ``M: Omega -> C^{n x n}``.

    ``eval`` and ``deriv`` return M(lam) and M'(lam). ``higher_deriv(j, lam)``
    is optional and only used by diagnostics. ``domain_hint`` is free-form
    (e.g. ``{"center": 0, "radius": inf}``); ``poles`` lists points where the
    defining formula is singular.
    """

    dimension: int
    eval: Callable[[complex], np.ndarray]
    deriv: Callable[[complex], np.ndarray]
    higher_deriv: Optional[Callable[[int, complex], np.ndarray]] = None
    domain_hint: Optional[dict] = None
    name: str = "generic"
    poles: tuple = ()
    #: coefficient data used for linearization (see ``problems``)
    data: Optional[dict] = None

    @property
    def n(self):
        return self.dimension

    def __call__(self, lam):
        return evaluate(self, lam)


@dataclass(frozen=True)
class Eigentriplet:
    """Eigenvalue with right and left eigenvectors.

    ``normalization`` is ``"unit"`` (unit 2-norm vectors) or ``"c"``
    (right vector scaled so that c^H v = 1).
    """

    lam: complex
    right_vec: np.ndarray
    left_vec: np.ndarray
    normalization: str = "unit"

    def c_normalized(self, c):
        """Return a copy with ``c^H v = 1``."""
        s = np.vdot(c, self.right_vec)
        if abs(s) < 1e-14 * np.linalg.norm(c) * np.linalg.norm(self.right_vec):
            raise Breakdown("c is orthogonal to the eigenvector")
        return Eigentriplet(self.lam, self.right_vec / s, self.left_vec, "c")


@dataclass(frozen=True)
class AugmentedVector:
    """Stacked vector ``[x; mu]``; also used for errors ``[x - v; mu - lam]``."""

    vec_part: np.ndarray
    scalar_part: complex

    def stacked(self):
        return np.append(self.vec_part, self.scalar_part)

    def norm(self):
        return float(np.linalg.norm(self.stacked()))

    def __sub__(self, other):
        return AugmentedVector(self.vec_part - other.vec_part,
                               self.scalar_part - other.scalar_part)


def _as_vec(x):
    return np.asarray(x, dtype=complex).reshape(-1)


def _check_domain(problem, lam):
    for p in problem.poles:
        if abs(lam - p) <= 1e-14 * (1.0 + abs(p)):
            raise DomainError(f"{problem.name}: lambda={lam} is a pole of M")


def evaluate(problem, lam):
    """M(lam) as a complex ndarray."""
    lam = complex(lam)
    _check_domain(problem, lam)
    return np.asarray(problem.eval(lam), dtype=complex)


def derivative(problem, lam, order=1):
    """M^(order)(lam). Orders above one need ``higher_deriv``."""
    lam = complex(lam)
    if order == 0:
        return evaluate(problem, lam)
    _check_domain(problem, lam)
    if order == 1:
        return np.asarray(problem.deriv(lam), dtype=complex)
    if problem.higher_deriv is None:
        raise NotImplementedError(f"{problem.name} has no higher derivatives")
    return np.asarray(problem.higher_deriv(order, lam), dtype=complex)


def divided_difference(problem, lam, mu):
    """M[lam, mu]; falls back to M'(lam) when the points (nearly) coincide."""
    lam, mu = complex(lam), complex(mu)
    if abs(lam - mu) <= DD_SWITCH * (1.0 + abs(lam)):
        return derivative(problem, lam)
    return (evaluate(problem, lam) - evaluate(problem, mu)) / (lam - mu)


def augmented_residual(problem, mu, x, c):
    """F([x; mu]) = [M(mu) x; c^H x - 1]."""
    x, c = _as_vec(x), _as_vec(c)
    return AugmentedVector(evaluate(problem, mu) @ x, np.vdot(c, x) - 1.0)


def exact_jacobian(problem, mu, x, c):
    """Jacobian [[M(mu), M'(mu) x], [c^H, 0]] of ``augmented_residual``."""
    x, c = _as_vec(x), _as_vec(c)
    n = problem.dimension
    J = np.zeros((n + 1, n + 1), dtype=complex)
    J[:n, :n] = evaluate(problem, mu)
    J[:n, n] = derivative(problem, mu) @ x
    J[n, :n] = c.conj()
    return J


@dataclass(frozen=True, eq=False)
class ShiftFactorization:
    """LU factors of M(sigma), reused for every solve with that shift."""

    shift: complex
    lu: np.ndarray
    piv: np.ndarray
    rcond: float

    def solve(self, b):
        return scipy.linalg.lu_solve((self.lu, self.piv), np.asarray(b, dtype=complex))

    def adjoint_solve(self, d):
        return scipy.linalg.lu_solve((self.lu, self.piv), np.asarray(d, dtype=complex),
                                     trans=2)


def factorize(problem, sigma):
    """LU-factorize M(sigma).

    Raises FactorizationError if M(sigma) is numerically singular and warns
    when the condition estimate exceeds ``COND_WARN``.
    """
    M = evaluate(problem, sigma)
    anorm = np.linalg.norm(M, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv, info = scipy.linalg.lapack.zgetrf(M)
    if info > 0 or anorm == 0.0:
        raise FactorizationError(f"M({sigma}) is exactly singular", 0.0)
    rcond, _ = scipy.linalg.lapack.zgecon(lu, anorm, norm="1")
    if rcond < np.finfo(float).eps:
        raise FactorizationError(
            f"M({sigma}) is singular to working precision (rcond={rcond:.3e})", rcond)
    if rcond < 1.0 / COND_WARN:
        warnings.warn(f"M({sigma}) is ill-conditioned (rcond={rcond:.3e})",
                      RuntimeWarning, stacklevel=2)
    return ShiftFactorization(complex(sigma), lu, piv, float(rcond))


def solve(fact, b):
    """M(sigma)^{-1} b."""
    return fact.solve(b)


def adjoint_solve(fact, d):
    """M(sigma)^{-H} d."""
    return fact.adjoint_solve(d)


def newton_refine(problem, lam, v, c=None, steps=1):
    """Full Newton steps on the augmented system; returns (lam, v) with c^H v = 1."""
    v = _as_vec(v)
    c = v / np.vdot(v, v) if c is None else _as_vec(c)
    v = v / np.vdot(c, v)
    n = problem.dimension
    for _ in range(steps):
        F = augmented_residual(problem, lam, v, c).stacked()
        J = exact_jacobian(problem, lam, v, c)
        try:
            d = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(d)):
            break
        v = v + d[:n]
        lam = lam + d[n]
    return complex(lam), v
