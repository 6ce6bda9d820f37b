"""Partial-fraction (Keldysh) form of M(z)^{-1} and its analytic remainder.

For a circle enclosing simple eigenvalues lam_1..lam_k,

    M(z)^{-1} = sum_i v_i u_i^H / ((z - lam_i) u_i^H M'(lam_i) v_i) + R(z),

with R analytic inside. R is available either as the residual
``M(z)^{-1} - partial_fraction(z)`` or as the contour integral
``(1/2 pi i) \\oint M(lam)^{-1} / (lam - z) dlam`` (trapezoidal rule).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .core import NepError, derivative, evaluate

__all__ = [
    "Contour", "KeldyshDecomposition", "NodeCollision", "PoleError",
    "partial_fraction", "contour_remainder", "contour_remainders", "decompose",
    "remainder_decay", "inverse",
]

log = logging.getLogger(__name__)


class PoleError(NepError, ValueError):
    """z coincides with an eigenvalue."""


class NodeCollision(NepError):
    """M is singular (or undefined) at a quadrature node."""


@dataclass(frozen=True)
class Contour:
    """Circle with ``node_count`` equispaced trapezoidal nodes."""

    center: complex = 0.0
    radius: float = 1.0
    node_count: int = 256

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.node_count < 1:
            raise ValueError("node_count must be positive")

    @property
    def nodes(self):
        t = 2j * np.pi * np.arange(self.node_count) / self.node_count
        return complex(self.center) + self.radius * np.exp(t)

    def inside(self, z):
        return abs(complex(z) - complex(self.center)) < self.radius

    def too_close(self, eigenvalues, rel=1e-6):
        """Eigenvalues within ``rel * radius`` of any node."""
        nodes = self.nodes
        return [lam for lam in eigenvalues
                if np.min(np.abs(nodes - lam)) <= rel * self.radius]

    def guarded(self, eigenvalues):
        """This contour, or one with radius enlarged by 1% if a node hits an eigenvalue."""
        if not self.too_close(eigenvalues):
            return self
        bumped = replace(self, radius=1.01 * self.radius)
        if bumped.too_close(eigenvalues):
            raise NodeCollision("eigenvalue on the contour; change radius or node_count")
        log.info("contour radius moved to %g to avoid an eigenvalue", bumped.radius)
        return bumped


def inverse(problem, z):
    """Dense M(z)^{-1}."""
    M = evaluate(problem, z)
    return np.linalg.solve(M, np.eye(problem.dimension))


def _node_inverses(problem, contour):
    n = problem.dimension
    out = []
    for lam in contour.nodes:
        try:
            M = evaluate(problem, lam)
            inv = np.linalg.solve(M, np.eye(n))
        except (np.linalg.LinAlgError, NepError) as e:
            raise NodeCollision(
                f"M singular at node {lam:.6g}; change node_count or radius") from e
        if not np.all(np.isfinite(inv)) or np.linalg.cond(M) > 1e14:
            raise NodeCollision(
                f"M nearly singular at node {lam:.6g}; change node_count or radius")
        out.append(inv)
    return np.array(out)


def contour_remainders(problem, contour, zs):
    """Trapezoidal (1/2 pi i) \\oint M(lam)^{-1}/(lam - z) dlam for each z in ``zs``.

    The node inverses are computed once and shared by all z.
    """
    zs = [complex(z) for z in np.atleast_1d(zs)]
    for z in zs:
        if not contour.inside(z):
            raise ValueError(f"z={z} is not inside the contour")
    return _quadrature(contour, _node_inverses(problem, contour), zs)


def _quadrature(contour, invs, zs):
    nodes = contour.nodes
    # dlam = i (lam - center) dtheta, dtheta = 2 pi / N
    w = (nodes - contour.center) / contour.node_count
    out = []
    for z in zs:
        coef = w / (nodes - z)
        # fixed summation order for reproducibility
        out.append(np.tensordot(coef, invs, axes=(0, 0)))
    return out


def contour_remainder(problem, contour, z):
    return contour_remainders(problem, contour, [z])[0]


@dataclass(frozen=True, eq=False)
class KeldyshDecomposition:
    problem: object
    contour: Contour
    triplets: list
    #: 1 / (u_i^H M'(lam_i) v_i)
    scalings: np.ndarray
    mode: str = "residual"

    @property
    def eigenvalues(self):
        return np.array([t.lam for t in self.triplets])

    def partial_fraction(self, z):
        return partial_fraction(self, z)

    def remainder(self, z):
        if self.mode == "integral":
            return contour_remainder(self.problem, self.contour, z)
        return inverse(self.problem, z) - partial_fraction(self, z)

    def identity_residual(self, z, remainder=None):
        """||M(z)^{-1} - sum - R(z)||, with R from ``remainder`` if given."""
        R = self.remainder(z) if remainder is None else remainder
        return float(np.linalg.norm(inverse(self.problem, z) - partial_fraction(self, z) - R, 2))


def partial_fraction(decomp, z):
    """sum_i v_i u_i^H / ((z - lam_i) u_i^H M'(lam_i) v_i)."""
    z = complex(z)
    n = decomp.problem.dimension
    out = np.zeros((n, n), dtype=complex)
    for t, s in zip(decomp.triplets, decomp.scalings):
        if abs(z - t.lam) <= 1e-12 * (1.0 + abs(t.lam)):
            raise PoleError(f"z={z} is an eigenvalue")
        out += (s / (z - t.lam)) * np.outer(t.right_vec, t.left_vec.conj())
    return out


def decompose(problem, contour, spectrum, mode="residual"):
    """Keep the triplets inside ``contour`` and attach the remainder evaluator.

    ``mode`` selects how R is evaluated: ``"residual"`` (M^{-1} minus the
    pole terms) or ``"integral"`` (trapezoidal contour integral).
    """
    if mode not in ("residual", "integral"):
        raise ValueError(f"unknown mode {mode!r}")
    contour = contour.guarded([t.lam for t in spectrum.triplets])
    inside = [i for i, t in enumerate(spectrum.triplets) if contour.inside(t.lam)]
    if set(inside) & set(spectrum.defective):
        raise NepError("defective eigenvalue inside the contour is unsupported")
    trips, scal = [], []
    for i in inside:
        t = spectrum.triplets[i]
        d = np.vdot(t.left_vec, derivative(problem, t.lam) @ t.right_vec)
        if abs(d) < 1e-14 * np.linalg.norm(t.left_vec) * np.linalg.norm(t.right_vec):
            raise NepError(f"eigenvalue {t.lam} is not simple")
        trips.append(t)
        scal.append(1.0 / d)
    return KeldyshDecomposition(problem, contour, trips, np.array(scal, dtype=complex), mode)


def remainder_decay(problem, center, radii, probes, node_count=256):
    """Max ||M^{-1}|| on circles of growing radius and ||R(z)|| at probe points.

    Returns one dict per radius with keys ``radius``, ``max_inv_norm`` and
    ``remainder_norms`` (NaN for probes outside the circle); circles through
    a pole or singular node are reported with ``skipped`` set.
    """
    rows = []
    for r in radii:
        contour = Contour(center, float(r), node_count)
        row = {"radius": float(r), "max_inv_norm": np.nan,
               "remainder_norms": [np.nan] * len(probes), "skipped": ""}
        try:
            invs = _node_inverses(problem, contour)
        except NodeCollision as e:
            row["skipped"] = str(e)
            rows.append(row)
            continue
        row["max_inv_norm"] = float(max(np.linalg.norm(X, 2) for X in invs))
        inside = [z for z in probes if contour.inside(z)]
        if inside:
            Rs = iter(_quadrature(contour, invs, inside))
            row["remainder_norms"] = [float(np.linalg.norm(next(Rs), 2)) if contour.inside(z)
                                      else np.nan for z in probes]
        rows.append(row)
    return rows
