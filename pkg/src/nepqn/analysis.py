"""A-priori convergence factors and clustering diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Breakdown, Eigentriplet, derivative, evaluate, factorize

__all__ = [
    "ConvergenceMatrix", "ConditionReport", "matrix_A1", "matrix_A2", "matrix_B",
    "spectral_radius", "nonzero_eigenvalues", "match_multisets", "spectra_distance", "estimated_factors",
    "condition_numbers", "clustering_bound", "fitted_order", "ERROR_FLOOR",
]

#: error norms below this are round-off dominated and excluded from ratios
ERROR_FLOOR = 1e-13


@dataclass(frozen=True)
class ConvergenceMatrix:
    kind: str
    matrix: np.ndarray
    sigma: complex
    c: np.ndarray
    triplet: Eigentriplet

    def spectral_radius(self):
        return spectral_radius(self.matrix)

    def nonzero_eigenvalues(self):
        return nonzero_eigenvalues(self.matrix)


@dataclass(frozen=True)
class ConditionReport:
    eigenvalues: np.ndarray
    kappa: np.ndarray
    defective: tuple
    shift_distance: np.ndarray = None
    bound: float = None


def spectral_radius(m):
    """Largest eigenvalue modulus (dense eigensolver)."""
    if isinstance(m, ConvergenceMatrix):
        m = m.matrix
    m = np.asarray(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def nonzero_eigenvalues(m, rel=1e-10):
    """Eigenvalues with modulus above ``rel * ||m||``."""
    if isinstance(m, ConvergenceMatrix):
        m = m.matrix
    ev = np.linalg.eigvals(m)
    return ev[np.abs(ev) > rel * np.linalg.norm(m, 2)]


def match_multisets(a, b):
    """Greedy nearest pairing of two eigenvalue lists.

    Returns the largest pairwise distance, or inf when the sizes differ.
    """
    a, b = list(np.asarray(a)), list(np.asarray(b))
    if len(a) != len(b):
        return np.inf
    worst = 0.0
    for x in sorted(a, key=abs, reverse=True):
        j = int(np.argmin([abs(x - y) for y in b]))
        worst = max(worst, abs(x - b.pop(j)))
    return worst


def spectra_distance(m1, m2, rel=1e-10):
    """Multiset distance between the nonzero spectra of two matrices.

    One threshold ``rel * max(||m1||, ||m2||)`` decides "nonzero" for both,
    so a matrix with a much larger norm cannot shift the count.
    """
    m1 = m1.matrix if isinstance(m1, ConvergenceMatrix) else np.asarray(m1)
    m2 = m2.matrix if isinstance(m2, ConvergenceMatrix) else np.asarray(m2)
    t = rel * max(np.linalg.norm(m1, 2), np.linalg.norm(m2, 2))
    e1, e2 = np.linalg.eigvals(m1), np.linalg.eigvals(m2)
    return match_multisets(e1[np.abs(e1) > t], e2[np.abs(e2) > t])


def _setup(problem, sigma, c, triplet):
    c = np.asarray(c, dtype=complex)
    trip = triplet.c_normalized(c)
    fact = factorize(problem, sigma)
    n = problem.dimension
    Ms = evaluate(problem, sigma)
    Ml = evaluate(problem, trip.lam)
    Mpv = derivative(problem, trip.lam) @ trip.right_vec
    # M(sigma)^{-1} (M(sigma) - M(lam))
    D = fact.solve(Ms - Ml)
    return c, trip, fact, n, Ml, Mpv, D


def _check(d, scale, what):
    if abs(d) < 1e-14 * scale or not np.isfinite(d):
        raise Breakdown(f"{what} vanishes")


def matrix_A1(problem, sigma, x0, c, triplet):
    """First-order error map of the frozen-Jacobian iteration (QN1).

    ``x0`` is scaled to c^H x0 = 1, as in :func:`nepqn.solvers.run`. The
    result equals J1^{-1} (J1 - J_*) with J1 = [[M(sigma), M'(sigma) x0],
    [c^H, 0]] and J_* the exact Jacobian at the eigenpair.
    """
    c, trip, fact, n, Ml, Mpv, D = _setup(problem, sigma, c, triplet)
    x0 = np.asarray(x0, dtype=complex)
    x0 = x0 / np.vdot(c, x0)
    q0 = fact.solve(derivative(problem, sigma) @ x0)
    d = np.vdot(c, q0)
    _check(d, np.linalg.norm(c) * np.linalg.norm(q0), "c^H q0")
    a0 = 1.0 / d
    P = np.eye(n) - a0 * np.outer(q0, c.conj())
    g = fact.solve(Mpv)
    A = np.zeros((n + 1, n + 1), dtype=complex)
    A[:n, :n] = P @ D
    A[:n, n] = -P @ g
    A[n, :n] = a0 * (c.conj() @ D)
    A[n, n] = 1.0 - a0 * np.vdot(c, g)
    return ConvergenceMatrix("A1", A, complex(sigma), c, trip)


def matrix_A2(problem, sigma, c, triplet):
    """First-order error map of QN2; its last column is zero."""
    c, trip, fact, n, Ml, Mpv, D = _setup(problem, sigma, c, triplet)
    q = fact.solve(Mpv)
    d = np.vdot(c, q)  # = w_sigma^H M'(lam) v
    _check(d, np.linalg.norm(c) * np.linalg.norm(q), "w_sigma^H M'(lam) v")
    alpha = 1.0 / d
    A = np.zeros((n + 1, n + 1), dtype=complex)
    A[:n, :n] = (np.eye(n) - alpha * np.outer(q, c.conj())) @ D
    A[n, :n] = alpha * (c.conj() @ D)
    return ConvergenceMatrix("A2", A, complex(sigma), c, trip)


def _bracket(problem, sigma, c, trip, fact, Ml, Mpv):
    # M(sigma) - M(lam) + M'(lam) v w^H M(lam) / (w^H M'(lam) v)
    w = fact.adjoint_solve(c)
    d = np.vdot(w, Mpv)
    _check(d, np.linalg.norm(w) * np.linalg.norm(Mpv), "w_sigma^H M'(lam) v")
    return evaluate(problem, sigma) - Ml + np.outer(Mpv, w.conj() @ Ml) / d


def matrix_B(problem, sigma, c, triplet):
    """Residual-inverse-iteration factor matrix (n x n).

    B = (I - v c^H) M(sigma)^{-1} [M(sigma) - M(lam) + M'(lam) v w^H M(lam) / (w^H M'(lam) v)]
    with w^H = c^H M(sigma)^{-1}.
    """
    c, trip, fact, n, Ml, Mpv, _ = _setup(problem, sigma, c, triplet)
    X = _bracket(problem, sigma, c, trip, fact, Ml, Mpv)
    P = np.eye(n) - np.outer(trip.right_vec, c.conj())
    return ConvergenceMatrix("B", P @ fact.solve(X), complex(sigma), c, trip)


def estimated_factors(trace, reference, floor=ERROR_FLOOR):
    """rho_k = ||w_k - w_*|| / ||w_{k-1} - w_*||; NaN where the denominator is below ``floor``."""
    ref = reference.c_normalized(trace.c)
    errs = np.array([np.linalg.norm(np.append(r.x - ref.right_vec, r.mu - ref.lam))
                     for r in trace.records])
    rho = np.full(max(len(errs) - 1, 0), np.nan)
    for k in range(1, len(errs)):
        if errs[k - 1] >= floor:
            rho[k - 1] = errs[k] / errs[k - 1]
    return rho


def condition_numbers(spectrum, problem, sigma=None):
    """kappa_i = ||u_i|| ||v_i|| / |u_i^H M'(lam_i) v_i| for each triplet."""
    lams, kap, bad = [], [], []
    for i, t in enumerate(spectrum.triplets):
        Mp = derivative(problem, t.lam)
        d = abs(np.vdot(t.left_vec, Mp @ t.right_vec))
        nn = np.linalg.norm(t.left_vec) * np.linalg.norm(t.right_vec)
        lams.append(t.lam)
        if d < 1e-14 * nn * max(np.linalg.norm(Mp, 2), 1e-300):
            bad.append(i)
            kap.append(np.inf)
        else:
            kap.append(nn / d)
    lams = np.array(lams)
    dist = None if sigma is None else np.abs(complex(sigma) - lams)
    return ConditionReport(lams, np.array(kap), tuple(bad), dist)


def clustering_bound(problem, sigma, c, spectrum, target, remainder_norm=0.0):
    """Upper bound on rho(B) from the partial-fraction form of M(sigma)^{-1}.

    ||P_1|| ||X|| (sum_{i != target} kappa_i / |sigma - lam_i| + remainder_norm)
    with P_1 = I - v_1 c^H and X the bracket of :func:`matrix_B`.
    """
    c = np.asarray(c, dtype=complex)
    trip = spectrum.triplets[target].c_normalized(c)
    fact = factorize(problem, sigma)
    Ml = evaluate(problem, trip.lam)
    Mpv = derivative(problem, trip.lam) @ trip.right_vec
    X = _bracket(problem, sigma, c, trip, fact, Ml, Mpv)
    n = problem.dimension
    P = np.eye(n) - np.outer(trip.right_vec, c.conj())
    rep = condition_numbers(spectrum, problem, sigma)
    others = [i for i in range(len(rep.kappa)) if i != target]
    total = sum(rep.kappa[i] / rep.shift_distance[i] for i in others) + remainder_norm
    return float(np.linalg.norm(P, 2) * np.linalg.norm(X, 2) * total)


def fitted_order(errors):
    """Least-squares slope of log e_{k+1} against log e_k."""
    e = np.asarray(errors, dtype=float)
    if e.size < 3:
        return np.nan
    a, b = np.log(e[:-1]), np.log(e[1:])
    return float(np.polyfit(a, b, 1)[0])
