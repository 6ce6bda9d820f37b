"""Shared builders for the test suite."""

import numpy as np

from nepqn.config import parse_config
from nepqn.cli import resolve_setup, _solver_config
from nepqn.solvers import SolverConfig, run, step_defects  # noqa: F401

RIGHT, LEFT = 5171.41, 9.068


def string_setup(target, a=0.05, offset=5.0, reference="auto"):
    """loaded_string(20, c_scale=20) with mu0 = sigma = lam + offset, c = x0 = v + a*1."""
    cfg = parse_config({
        "problem": {"kind": "loaded_string", "n": 20, "c_scale": 20},
        "start": {"recipe": "eigvec_plus_ones", "target": target, "a": a,
                  "shift_offset": offset},
        "analysis": {"reference": reference},
    })
    return resolve_setup(cfg)


def circle_setup(r, a=0.1, sigma=0.0):
    cfg = parse_config({
        "problem": {"kind": "circle_quadratic", "r": r},
        "start": {"recipe": "eigvec_plus_ones", "target": 0.1, "a": a},
        "solver": {"sigma": sigma},
    })
    return resolve_setup(cfg)


def run_variant(s, variant, **kw):
    cfg = SolverConfig(variant, s.sigma, s.c, s.mu0, s.x0, reference=s.reference, **kw)
    return run(s.problem, cfg)


def random_linear(seed, n=8, frac=0.2):
    """Random A, its right-most eigenpair and a shift a fraction toward the nearest neighbour."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    w, V = np.linalg.eig(A)
    i = int(np.argmax(w.real))
    d = np.abs(w - w[i])
    d[i] = np.inf
    j = int(np.argmin(d))
    sigma = w[i] + frac * (w[j] - w[i])
    x0 = V[:, i] + 0.05 * rng.standard_normal(n)
    return A, w, V, i, sigma, x0


def inside_probes(center, radius, count, seed, avoid=(), frac=0.9):
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < count:
        z = center + frac * radius * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        if all(abs(z - lam) > 1e-3 * radius for lam in avoid):
            pts.append(complex(z))
    return pts


def normalization_defects(trace):
    return np.array([abs(np.vdot(trace.c, r.x) - 1.0) / np.linalg.norm(r.x)
                     for r in trace.records])
