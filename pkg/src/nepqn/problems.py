"""Benchmark problems and small-problem spectrum enumeration.

Every builder returns a :class:`~nepqn.core.NepProblem` whose ``data`` dict
records the coefficients, so that polynomial and rational problems can be
linearized by :func:`enumerate_spectrum`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import Eigentriplet, NepError, NepProblem, evaluate, derivative, newton_refine

__all__ = [
    "polynomial", "rational", "linear", "loaded_string", "loaded_string_matrices",
    "circle_quadratic", "circle_points", "counterexample",
    "SpectrumReport", "enumerate_spectrum", "cleared_coefficients",
]


def _falling(i, j):
    # i * (i-1) * ... * (i-j+1)
    out = 1
    for t in range(j):
        out *= i - t
    return out


def _poly_eval(coeffs, lam, order=0):
    n = coeffs[0].shape[0]
    out = np.zeros((n, n), dtype=complex)
    for i in range(len(coeffs) - 1, order - 1, -1):
        out = out * lam + _falling(i, order) * coeffs[i]
    return out


def polynomial(coeffs, name="polynomial"):
    """M(lam) = sum_i A_i lam^i with ``coeffs = [A_0, ..., A_N]``."""
    coeffs = [np.atleast_2d(np.asarray(A, dtype=complex)) for A in coeffs]
    n = coeffs[0].shape[0]
    if any(A.shape != (n, n) for A in coeffs):
        raise ValueError("coefficients must be square and of equal size")

    def higher(j, lam):
        return _poly_eval(coeffs, lam, j)

    return NepProblem(
        dimension=n,
        eval=lambda lam: _poly_eval(coeffs, lam),
        deriv=lambda lam: _poly_eval(coeffs, lam, 1),
        higher_deriv=higher,
        domain_hint={"center": 0.0, "radius": math.inf},
        name=name,
        data={"kind": "polynomial", "coeffs": coeffs},
    )


def linear(A):
    """M(lam) = A - lam I."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    return polynomial([A, -np.eye(A.shape[0])], name="linear")


def _weight(form, pole, lam, order=0):
    # lam/(lam - s) = 1 + s/(lam - s); lam/(s - lam) is its negative
    sign = 1.0 if form == "lam/(lam-s)" else -1.0
    if order == 0:
        return sign * lam / (lam - pole)
    return sign * pole * (-1) ** order * math.factorial(order) / (lam - pole) ** (order + 1)


_FORMS = ("lam/(lam-s)", "lam/(s-lam)")


def rational(base_coeffs, terms, name="rational"):
    """M(lam) = sum_i A_i lam^i + sum_j w_j(lam) C_j.

    ``terms`` is a list of ``(pole, C, form)`` with ``form`` either
    ``"lam/(lam-s)"`` or ``"lam/(s-lam)"``.
    """
    base = [np.atleast_2d(np.asarray(A, dtype=complex)) for A in base_coeffs]
    rterms = []
    for pole, C, form in terms:
        if form not in _FORMS:
            raise ValueError(f"unknown rational form {form!r}")
        rterms.append((complex(pole), np.asarray(C, dtype=complex), form))
    n = base[0].shape[0]

    def ev(lam, order=0):
        out = _poly_eval(base, lam, order) if order < len(base) else np.zeros((n, n), complex)
        for pole, C, form in rterms:
            out = out + _weight(form, pole, lam, order) * C
        return out

    return NepProblem(
        dimension=n,
        eval=ev,
        deriv=lambda lam: ev(lam, 1),
        higher_deriv=lambda j, lam: ev(lam, j),
        domain_hint={"center": 0.0, "radius": math.inf},
        name=name,
        poles=tuple(p for p, _, _ in rterms),
        data={"kind": "rational", "coeffs": base, "terms": rterms},
    )


def loaded_string_matrices(n):
    """(A, B, C) of the NLEVP 'loaded_string' problem with unit stiffness and mass."""
    if n < 2:
        raise ValueError("loaded_string needs n >= 2")
    e = np.ones(n - 1)
    A = n * (np.diag(2.0 * np.ones(n)) - np.diag(e, 1) - np.diag(e, -1))
    A[-1, -1] = n
    B = (np.diag(4.0 * np.ones(n)) + np.diag(e, 1) + np.diag(e, -1)) / (6 * n)
    B[-1, -1] = 2.0 / (6 * n)
    C = np.zeros((n, n))
    C[-1, -1] = 1.0
    return A, B, C


def loaded_string(n=20, c_scale=1.0, pole=1.0):
    """M(lam) = A - lam B + lam/(lam - pole) * c_scale * C."""
    A, B, C = loaded_string_matrices(n)
    terms = [(pole, c_scale * C, "lam/(lam-s)")] if c_scale != 0 else []
    prob = rational([A, -B], terms, name="loaded_string")
    if not terms:
        # the pole still belongs to the defining formula
        prob = NepProblem(prob.dimension, prob.eval, prob.deriv, prob.higher_deriv,
                          prob.domain_hint, prob.name, (complex(pole),), prob.data)
    return prob


def circle_points(r, count=19, extra=0.1):
    """The constructed spectrum: ``extra`` and ``count`` points on |z| = r, sorted."""
    pts = [complex(extra)] + [r * np.exp(2j * np.pi * k / count) for k in range(count)]
    return sorted(pts, key=lambda z: (z.real, z.imag))


def circle_quadratic(r):
    """M(lam) = lam^2 I - lam (A1 + A2) + A1 A2 with diagonal 10x10 A1, A2.

    The 20 eigenvalues are 0.1 and 19 equispaced points on the circle of
    radius ``r``; after sorting, the first ten go to A1 and the rest to A2.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    pts = np.array(circle_points(r))
    d1, d2 = pts[:10], pts[10:]
    prob = polynomial([np.diag(d1 * d2), -np.diag(d1 + d2), np.eye(10)],
                      name="circle_quadratic")
    prob.data["diag"] = (d1, d2)
    return prob


def counterexample(f_coeffs=(1.0,)):
    """The 2x2 family [[lam-1, (lam-1)(lam-2) f(lam)], [0, lam-2]].

    ``f_coeffs`` are the coefficients of the polynomial f in ascending order.
    """
    f = np.polynomial.Polynomial(np.asarray(f_coeffs, dtype=complex))
    g = np.polynomial.Polynomial([2.0, -3.0, 1.0]) * f
    deg = max(1, g.degree())
    coeffs = [np.zeros((2, 2), dtype=complex) for _ in range(deg + 1)]
    coeffs[0][0, 0], coeffs[1][0, 0] = -1.0, 1.0
    coeffs[0][1, 1], coeffs[1][1, 1] = -2.0, 1.0
    for i, gi in enumerate(g.coef):
        coeffs[i][0, 1] = gi
    prob = polynomial(coeffs, name="counterexample")
    prob.data["eigenvalues"] = (1.0, 2.0)
    prob.data["f"] = f
    return prob


# --------------------------------------------------------------------------
# spectrum enumeration


@dataclass(frozen=True)
class SpectrumReport:
    triplets: list
    method: str
    defective: tuple = ()
    discarded: list = field(default_factory=list)

    @property
    def eigenvalues(self):
        return np.array([t.lam for t in self.triplets])

    def __len__(self):
        return len(self.triplets)


def _polymul_matrix(scalar_poly, coeffs):
    out = [np.zeros_like(coeffs[0]) for _ in range(len(coeffs) + len(scalar_poly) - 1)]
    for i, s in enumerate(scalar_poly):
        for j, A in enumerate(coeffs):
            out[i + j] = out[i + j] + s * A
    return out


def cleared_coefficients(problem):
    """Polynomial coefficients of M(lam) * prod_j (lam - pole_j)."""
    data = problem.data or {}
    if data.get("kind") == "polynomial":
        return list(data["coeffs"])
    if data.get("kind") != "rational":
        raise NepError(f"{problem.name}: no polynomial/rational coefficient data")
    terms = data["terms"]
    P = np.polynomial.Polynomial

    def prod(skip=None):
        out = P([1.0])
        for j, (pole, _, _) in enumerate(terms):
            if j != skip:
                out = out * P([-pole, 1.0])
        return out.coef

    total = _polymul_matrix(prod(), data["coeffs"])
    for j, (pole, C, form) in enumerate(terms):
        sign = 1.0 if form == "lam/(lam-s)" else -1.0
        # lam/(lam - s_j) * prod(lam - s) = lam * prod_{i != j}(lam - s_i)
        part = _polymul_matrix(np.concatenate([[0.0], prod(j)]), [sign * C])
        for i, A in enumerate(part):
            if i < len(total):
                total[i] = total[i] + A
            else:
                total.append(A)
    while len(total) > 1 and not np.any(total[-1]):
        total.pop()
    return total


def _companion_eig(coeffs):
    N = len(coeffs) - 1
    n = coeffs[0].shape[0]
    AN = coeffs[-1]
    if N == 0:
        raise NepError("constant problem has no eigenvalues")
    if np.linalg.cond(AN) > 1e12:
        raise NepError("leading coefficient is singular: linearization unsupported")
    monic = [np.linalg.solve(AN, A) for A in coeffs[:-1]]
    Cm = np.zeros((N * n, N * n), dtype=complex)
    for k in range(N - 1):
        Cm[k * n:(k + 1) * n, (k + 1) * n:(k + 2) * n] = np.eye(n)
    for k in range(N):
        Cm[(N - 1) * n:, k * n:(k + 1) * n] = -monic[k]
    w, V = scipy.linalg.eig(Cm)
    return w, V[:n, :]


def _triplet_at(problem, lam, v0):
    lam, v = newton_refine(problem, lam, v0, steps=1)
    M = evaluate(problem, lam)
    U, s, Vh = np.linalg.svd(M)
    return Eigentriplet(complex(lam), _phase_fixed(v), _phase_fixed(U[:, -1])), s


def _phase_fixed(v):
    # unit norm, largest-modulus entry real positive
    v = v / np.linalg.norm(v)
    j = int(np.argmax(np.abs(v)))
    return v * (abs(v[j]) / v[j])


def _in_region(lam, region):
    if region is None:
        return True
    center, radius = region
    return abs(lam - center) < radius


def enumerate_spectrum(problem, region=None, tol=1e-8):
    """All finite eigenvalues of a polynomial or rational problem.

    Rational problems are multiplied by prod(lam - pole) and linearized; roots
    sitting on a pole are discarded. ``region`` is an optional ``(center,
    radius)`` disk. Problems built with a known eigenvalue list (the 2x2
    counterexample) get their vectors from the SVD of M at those points.
    """
    data = problem.data or {}
    triplets, discarded, defective = [], [], []
    if "eigenvalues" in data:
        method = "known"
        candidates = [(complex(l), None) for l in data["eigenvalues"]]
    else:
        method = "companion"
        w, V = _companion_eig(cleared_coefficients(problem))
        candidates = [(w[i], V[:, i]) for i in range(len(w)) if np.isfinite(w[i])]

    for lam, v0 in candidates:
        if any(abs(lam - p) <= 1e-8 * (1 + abs(p)) for p in problem.poles):
            discarded.append(lam)
            continue
        if not _in_region(lam, region):
            continue
        if v0 is None or not np.any(v0):
            v0 = np.linalg.svd(evaluate(problem, lam))[2][-1].conj()
        trip, s = _triplet_at(problem, lam, v0)
        if s[-1] > tol * max(s[0], 1e-300):
            discarded.append(lam)
            continue
        triplets.append(trip)

    triplets.sort(key=lambda t: (round(t.lam.real, 12), round(t.lam.imag, 12)))
    for i, t in enumerate(triplets):
        Mp = derivative(problem, t.lam)
        if abs(np.vdot(t.left_vec, Mp @ t.right_vec)) < 1e-10 * max(np.linalg.norm(Mp), 1e-300):
            defective.append(i)
    return SpectrumReport(triplets, method, tuple(defective), discarded)
