"""Quasi-Newton iterations for M(lam) v = 0 in their n-dimensional forms.

Four variants differ in the Jacobian approximation used for the augmented
system ``[M(mu) x; c^H x - 1] = 0``:

* ``QN1`` keeps the whole Jacobian frozen at (sigma, x0);
* ``QN2`` freezes only M(sigma) (one solve with M(sigma) per step);
* ``QN3`` is residual inverse iteration (Rayleigh functional + one solve);
* ``QN4`` is the method of successive linear problems (dense pencil solve).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .core import (
    Breakdown, DomainError, Eigentriplet, NepError, derivative, divided_difference,
    evaluate, factorize,
)

__all__ = [
    "VARIANTS", "SolverConfig", "IterationRecord", "IterationTrace", "Qn1Precompute",
    "RayleighError", "run", "qn1_precompute", "qn1_step", "qn2_step", "qn3_step",
    "qn4_step", "rayleigh_root", "inexactness_residual", "step_jacobian",
    "step_defects", "BREAKDOWN_TOL",
]

log = logging.getLogger(__name__)

VARIANTS = ("QN1", "QN2", "QN3", "QN4")
BREAKDOWN_TOL = 1e-14
#: Newton corrections applied to the pencil eigenpair in a QN4 step
QN4_POLISH = 3


class RayleighError(NepError):
    """Scalar root finding for the Rayleigh functional failed.

    ``last`` is the final iterate.
    """

    def __init__(self, msg, last):
        super().__init__(msg)
        self.last = last


@dataclass
class SolverConfig:
    variant: str
    sigma: complex
    c: np.ndarray
    mu0: complex
    x0: np.ndarray
    tol_residual: float = 1e-12
    max_iter: int = 100
    qn2_w_mode: str = "derive_w_from_c"
    #: user-chosen w_sigma for ``fix_w_choose_c``; defaults to c
    w_sigma: Optional[np.ndarray] = None
    reference: Optional[Eigentriplet] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.qn2_w_mode not in ("derive_w_from_c", "fix_w_choose_c"):
            raise ValueError(f"unknown qn2_w_mode {self.qn2_w_mode!r}")
        self.sigma = complex(self.sigma)
        self.mu0 = complex(self.mu0)
        self.c = np.asarray(self.c, dtype=complex).reshape(-1)
        self.x0 = np.asarray(self.x0, dtype=complex).reshape(-1)


@dataclass
class IterationRecord:
    """State (mu_k, x_k) and, unless it is the last row, the step taken from it."""

    k: int
    mu: complex
    x: np.ndarray
    resid_norm: float
    delta_mu: Optional[complex] = None
    dx_norm: Optional[float] = None
    err_norm: Optional[float] = None
    rho_est: Optional[float] = None
    r_k_norm: Optional[float] = None
    #: increment x_{k+1} - x_k as computed by the step (not by subtraction)
    step: Optional[np.ndarray] = None
    #: QN3 only: the Rayleigh root at which the divided difference was taken
    node: Optional[complex] = None


@dataclass
class IterationTrace:
    variant: str
    sigma: complex
    c: np.ndarray
    records: list = field(default_factory=list)
    status: str = "max_iter"
    message: str = ""

    @property
    def mus(self):
        return np.array([r.mu for r in self.records])

    @property
    def xs(self):
        return [r.x for r in self.records]

    @property
    def errors(self):
        return np.array([np.nan if r.err_norm is None else r.err_norm for r in self.records])

    @property
    def residuals(self):
        return np.array([r.resid_norm for r in self.records])

    @property
    def final(self):
        return self.records[-1]

    @property
    def converged(self):
        return self.status == "converged"

    def iterations_to(self, tol, column="err_norm"):
        """First k with ``column`` at or below tol, or None."""
        for r in self.records:
            val = getattr(r, column)
            if val is not None and val <= tol:
                return r.k
        return None

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class Qn1Precompute:
    q0: np.ndarray
    alpha0: complex


def _small(d, scale):
    return abs(d) < BREAKDOWN_TOL * scale or not np.isfinite(d)


def qn1_precompute(problem, fact, x0, c):
    """q0 = M(sigma)^{-1} M'(sigma) x0 and alpha0 = 1 / (c^H q0)."""
    q0 = fact.solve(derivative(problem, fact.shift) @ x0)
    d = np.vdot(c, q0)
    if _small(d, np.linalg.norm(c) * np.linalg.norm(q0)):
        raise Breakdown("c^H q0 vanishes")
    return Qn1Precompute(q0, 1.0 / d)


def qn1_step(problem, fact, pre, c, mu, x):
    """One step of the frozen-Jacobian iteration; returns (mu_next, x_next, y).

    y = M(sigma)^{-1} M(mu) x,  dmu = -alpha0 c^H y,  x_next = x - y - dmu q0.
    The (c^H x - 1) term keeps the step exact for unnormalized x and
    vanishes once c^H x = 1.
    """
    dmu, dx, y = _qn1_increment(problem, fact, pre, c, mu, x)
    return mu + dmu, x + dx, y


def _qn1_increment(problem, fact, pre, c, mu, x):
    y = fact.solve(evaluate(problem, mu) @ x)
    dmu = -pre.alpha0 * (np.vdot(c, y) + (1.0 - np.vdot(c, x)))
    return dmu, -y - dmu * pre.q0, y


def qn2_step(problem, fact, w_sigma, c, mu, x):
    """One step with only M(sigma) frozen.

    dmu = -(w^H M(mu) x) / (w^H M'(mu) x),  z = dmu M'(mu) x + M(mu) x,
    x_next = x - M(sigma)^{-1} z.
    """
    dmu, dx = _qn2_increment(problem, fact, w_sigma, c, mu, x)
    return mu + dmu, x + dx


def _qn2_increment(problem, fact, w_sigma, c, mu, x):
    u = evaluate(problem, mu) @ x
    w = derivative(problem, mu) @ x
    den = np.vdot(w_sigma, w)
    if _small(den, np.linalg.norm(w_sigma) * np.linalg.norm(w)):
        raise Breakdown("w_sigma^H M'(mu) x vanishes")
    dmu = -(np.vdot(w_sigma, u) + (1.0 - np.vdot(c, x))) / den
    z = dmu * w + u
    return dmu, -fact.solve(z)


def rayleigh_root(problem, w, x, mu_init, maxit=50, rhs=0.0):
    """Root of f(mu) = w^H M(mu) x - rhs by scalar Newton from ``mu_init``.

    Accepts once |f| <= 1e-14 (1 + ||M|| ||x|| ||w||), after one polishing
    step. Falls back to a secant step when f' vanishes. Raises RayleighError
    after ``maxit`` iterations.
    """
    w = np.asarray(w, dtype=complex)
    x = np.asarray(x, dtype=complex)
    nw, nx = np.linalg.norm(w), np.linalg.norm(x)
    mu = complex(mu_init)
    prev = None
    eps = np.finfo(float).eps
    for _ in range(maxit):
        M = evaluate(problem, mu)
        f = np.vdot(w, M @ x) - rhs
        tol = 1e-14 * (1.0 + np.linalg.norm(M, 2) * nx * nw)
        fp = np.vdot(w, derivative(problem, mu) @ x)
        if abs(f) <= tol:
            if not _small(fp, nw * nx * max(np.linalg.norm(M, 2), 1.0)):
                polished = mu - f / fp
                fnew = np.vdot(w, evaluate(problem, polished) @ x) - rhs
                if abs(fnew) < abs(f):
                    return polished
            return mu
        if not _small(fp, nw * nx * max(np.linalg.norm(M, 2), 1.0)):
            step = f / fp
        elif prev is not None and prev[0] != mu and prev[1] != f:
            step = f * (mu - prev[0]) / (f - prev[1])
        else:
            raise RayleighError("derivative of the Rayleigh functional vanishes", mu)
        prev = (mu, f)
        mu = mu - step
        if abs(step) <= 4 * eps * max(abs(mu), 1.0):
            return mu
    raise RayleighError(f"no convergence in {maxit} iterations", mu)


def qn3_step(problem, fact, w_sigma, mu, x, c=None):
    """Residual inverse iteration step: Rayleigh functional, then one solve.

    mu_next is the root of w^H M(mu) x = 0 nearest mu and
    x_next = x - M(sigma)^{-1} M(mu_next) x. With ``c`` given the scalar
    equation becomes w^H M(mu) x = c^H x - 1, which keeps c^H x_next = 1 for
    an unnormalized x; see ``_qn3_increment`` for the increment form.
    """
    dmu, dx, _ = _qn3_increment(problem, fact, w_sigma, mu, x, c)
    return mu + dmu, x + dx


def _qn3_increment(problem, fact, w_sigma, mu, x, c=None):
    """Returns (dmu, dx, mu_root).

    With ``c`` the increment solves the bordered step equation whose last
    column is M[mu_root, mu] x. In exact arithmetic dmu = mu_root - mu and
    dx = -M(sigma)^{-1} M(mu_root) x; in floating point this form keeps both
    block rows consistent even where mu_root is resolved only to one ulp.
    """
    rhs = 0.0 if c is None else np.vdot(c, x) - 1.0
    mu_root = rayleigh_root(problem, w_sigma, x, mu, rhs=rhs)
    if c is None:
        return mu_root - mu, -fact.solve(evaluate(problem, mu_root) @ x), mu_root
    b = divided_difference(problem, mu_root, mu) @ x
    den = np.vdot(w_sigma, b)
    if _small(den, np.linalg.norm(w_sigma) * np.linalg.norm(b)):
        raise Breakdown("w_sigma^H M[mu_next, mu] x vanishes")
    Mx = evaluate(problem, mu) @ x
    dmu = -(np.vdot(w_sigma, Mx) + (1.0 - np.vdot(c, x))) / den
    return dmu, -fact.solve(Mx + dmu * b), mu_root


def qn4_step(problem, mu, x, c):
    """Successive linear problems: M(mu) y = -dmu M'(mu) y, smallest |dmu|."""
    dmu, dx = _qn4_increment(problem, mu, x, c)
    return mu + dmu, x + dx


def _qn4_increment(problem, mu, x, c):
    M = evaluate(problem, mu)
    Mp = derivative(problem, mu)
    vals, vecs = scipy.linalg.eig(M, -Mp)
    finite = np.flatnonzero(np.isfinite(vals))
    if finite.size == 0:
        raise Breakdown("pencil has no finite eigenvalues")
    i = min(finite, key=lambda j: (abs(vals[j]), vals[j].real, vals[j].imag))
    y = vecs[:, i]
    s = np.vdot(c, y)
    if _small(s, np.linalg.norm(c) * np.linalg.norm(y)):
        raise Breakdown("c^H y vanishes")
    dmu = vals[i]
    dx = y / s - x
    # Newton polish on G(dx, dmu) = [M (x + dx) + dmu M' (x + dx); c^H (x + dx) - 1],
    # evaluated in increment form so that a tiny dx keeps its relative accuracy
    Mx, Mpx = M @ x, Mp @ x
    cx = 1.0 - np.vdot(c, x)
    for _ in range(QN4_POLISH):
        G = np.append(Mx + M @ dx + dmu * (Mpx + Mp @ dx), np.vdot(c, dx) - cx)
        scale = (np.linalg.norm(M, 2) + abs(dmu) * np.linalg.norm(Mp, 2)) * np.linalg.norm(x + dx)
        if np.linalg.norm(G) <= np.finfo(float).eps * scale:
            break
        J = np.zeros((M.shape[0] + 1,) * 2, dtype=complex)
        J[:-1, :-1] = M + dmu * Mp
        J[:-1, -1] = Mpx + Mp @ dx
        J[-1, :-1] = np.conj(c)
        try:
            d = scipy.linalg.solve(J, -G)
        except (np.linalg.LinAlgError, ValueError):
            break
        if not np.all(np.isfinite(d)):
            break
        dx, dmu = dx + d[:-1], dmu + d[-1]
    return dmu, dx


def step_jacobian(problem, variant, sigma, c, x0, mu, x, mu_next, x_next):
    """The (n+1) x (n+1) Jacobian approximation a variant's step satisfies.

    For QN3 and QN4 it depends on the computed next iterate.
    """
    n = problem.dimension
    J = np.zeros((n + 1, n + 1), dtype=complex)
    if variant == "QN4":
        J[:n, :n] = evaluate(problem, mu)
    else:
        J[:n, :n] = evaluate(problem, sigma)
    if variant == "QN1":
        col = derivative(problem, sigma) @ x0
    elif variant == "QN2":
        col = derivative(problem, mu) @ x
    elif variant == "QN3":
        col = divided_difference(problem, mu_next, mu) @ x
    else:
        col = derivative(problem, mu) @ x_next
    J[:n, n] = col
    J[n, :n] = np.conj(c)
    return J


def _resid(problem, mu, x):
    return float(np.linalg.norm(evaluate(problem, mu) @ x))


def run(problem, config):
    """Iterate ``config.variant`` from (mu0, x0) and return the trace.

    x0 is first scaled so that c^H x0 = 1. Iteration stops when
    ||M(mu_k) x_k|| <= tol_residual * ||x_k||, after ``max_iter`` steps, or on
    breakdown (status ``"breakdown"``, trace preserved).
    """
    cfg = config
    c = cfg.c
    sigma = cfg.sigma
    variant = cfg.variant
    trace = IterationTrace(variant, sigma, c)

    fact = None
    if variant != "QN4":
        fact = factorize(problem, sigma)
    w_sigma = None
    if variant in ("QN2", "QN3"):
        if cfg.qn2_w_mode == "fix_w_choose_c":
            w_sigma = np.asarray(cfg.w_sigma if cfg.w_sigma is not None else c, dtype=complex)
            c = evaluate(problem, sigma).conj().T @ w_sigma
            trace.c = c
        else:
            w_sigma = fact.adjoint_solve(c)

    s = np.vdot(c, cfg.x0)
    if _small(s, np.linalg.norm(c) * np.linalg.norm(cfg.x0)):
        trace.status, trace.message = "breakdown", "c^H x0 vanishes"
        return trace
    x = cfg.x0 / s
    mu = cfg.mu0

    ref = None
    if cfg.reference is not None:
        ref = cfg.reference.c_normalized(c)

    def err(mu, x):
        if ref is None:
            return None
        return float(np.linalg.norm(np.append(x - ref.right_vec, mu - ref.lam)))

    pre = None
    try:
        if variant == "QN1":
            pre = qn1_precompute(problem, fact, x, c)
    except Breakdown as e:
        trace.status, trace.message = "breakdown", str(e)
        trace.records.append(IterationRecord(0, mu, x, _resid(problem, mu, x), err_norm=err(mu, x)))
        return trace

    k = 0
    rec = IterationRecord(k, mu, x, _resid(problem, mu, x), err_norm=err(mu, x))
    trace.records.append(rec)
    while True:
        if rec.resid_norm <= cfg.tol_residual * np.linalg.norm(x):
            trace.status = "converged"
            break
        if k >= cfg.max_iter:
            trace.status = "max_iter"
            break
        try:
            if not np.isfinite(rec.resid_norm) or rec.resid_norm > 1e150:
                raise Breakdown("iteration diverged")
            if variant == "QN1":
                dmu, dx, _ = _qn1_increment(problem, fact, pre, c, mu, x)
            elif variant == "QN2":
                dmu, dx = _qn2_increment(problem, fact, w_sigma, c, mu, x)
            elif variant == "QN3":
                dmu, dx, node = _qn3_increment(problem, fact, w_sigma, mu, x, c)
            else:
                dmu, dx = _qn4_increment(problem, mu, x, c)
            mu_next, x_next = mu + dmu, x + dx
            if not (np.isfinite(mu_next) and np.all(np.isfinite(x_next))):
                raise Breakdown("non-finite iterate")
            with np.errstate(over="ignore", invalid="ignore"):
                resid_next = _resid(problem, mu_next, x_next)
        except (Breakdown, RayleighError, DomainError) as e:
            trace.status, trace.message = "breakdown", str(e)
            break
        rec.delta_mu = dmu
        rec.step = dx
        if variant == "QN3":
            rec.node = node
        rec.dx_norm = float(np.linalg.norm(dx))
        if variant == "QN4":
            rec.r_k_norm = float(abs(dmu) * np.linalg.norm(derivative(problem, mu) @ dx))
        k += 1
        mu, x = mu_next, x_next
        e = err(mu, x)
        rho = None
        if e is not None and rec.err_norm is not None and rec.err_norm >= 1e-13:
            rho = e / rec.err_norm
        rec = IterationRecord(k, mu, x, resid_next, err_norm=e, rho_est=rho)
        trace.records.append(rec)
    log.debug("%s finished: %s after %d steps", variant, trace.status, k)
    return trace


def _increments(recs):
    for a, b in zip(recs[:-1], recs[1:]):
        dmu = b.mu - a.mu if a.delta_mu is None else a.delta_mu
        dx = b.x - a.x if a.step is None else a.step
        yield a, b, dmu, dx


def inexactness_residual(problem, trace, c=None):
    """||r_k|| = |dmu_k| ||M'(mu_k) dx_k|| for each step of a trace."""
    return np.array([float(abs(dmu) * np.linalg.norm(derivative(problem, a.mu) @ dx))
                     for a, _, dmu, dx in _increments(trace.records)])


def step_defects(problem, trace):
    """Relative defect of each step in the quasi-Newton equation J~ d = -F.

    Returns ||J~ d_k + F_k|| / (||J~|| ||d_k|| + ||F_k||) per step, with J~
    from :func:`step_jacobian` (x0 is the normalized first iterate; QN3 takes
    the divided difference at the recorded Rayleigh root).
    """
    recs = trace.records
    x0 = recs[0].x
    out = []
    for a, b, dmu, dx in _increments(recs):
        node = a.node if a.node is not None else b.mu
        J = step_jacobian(problem, trace.variant, trace.sigma, trace.c, x0, a.mu, a.x, node, a.x + dx)
        F = np.append(evaluate(problem, a.mu) @ a.x, np.vdot(trace.c, a.x) - 1.0)
        d = np.append(dx, dmu)
        scale = np.linalg.norm(J, 2) * np.linalg.norm(d) + np.linalg.norm(F)
        out.append(float(np.linalg.norm(J @ d + F) / scale) if scale > 0 else 0.0)
    return np.array(out)
