"""Acceptance criteria 1-12, one test each, at their stated tolerances.

Every test prints a ``CRITERION n: PASS/FAIL (...)`` line; the lines are
repeated in the pytest terminal summary. Run directly with
``python3 tests/test_acceptance.py`` to get just the report.
"""

import filecmp
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from acceptance_report import report  # noqa: E402
from helpers import (  # noqa: E402
    LEFT, RIGHT, circle_setup, inside_probes, normalization_defects, random_linear,
    run_variant, step_defects, string_setup,
)
from nepqn import analysis, keldysh  # noqa: E402
from nepqn.cli import _eigenvalue_errors, main  # noqa: E402
from nepqn.core import Eigentriplet, derivative, evaluate  # noqa: E402
from nepqn.problems import (  # noqa: E402
    circle_quadratic, counterexample, enumerate_spectrum, linear, loaded_string,
)
from nepqn.solvers import SolverConfig, run  # noqa: E402

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def _a2_vs_b(s):
    A2 = analysis.matrix_A2(s.problem, s.sigma, s.c, s.reference)
    B = analysis.matrix_B(s.problem, s.sigma, s.c, s.reference)
    r2, rb = A2.spectral_radius(), B.spectral_radius()
    return abs(r2 - rb) / rb, analysis.spectra_distance(A2, B), rb


def test_criterion_01_factor_equivalence():
    cases = [("string right", string_setup(RIGHT)), ("string left", string_setup(LEFT)),
             ("circle 0.5", circle_setup(0.5))]
    ok, parts = True, []
    for name, s in cases:
        rel, dist, rb = _a2_vs_b(s)
        good = rel <= 1e-8 * 1.0 and dist <= 1e-8
        ok &= good
        parts.append(f"{name}: rho(B)={rb:.4g} rel={rel:.1e} spec={dist:.1e}")
    assert report(1, ok, "; ".join(parts))


def test_criterion_02_linear_equivalence():
    ok, parts = True, []
    for seed in range(3):
        A, w, V, i, sigma, x0 = random_linear(seed)
        p = linear(A)
        ref = Eigentriplet(w[i], V[:, i], V[:, i])
        traces = [run(p, SolverConfig(v, sigma, x0, sigma, x0, reference=ref, max_iter=200))
                  for v in ("QN2", "QN3")]
        a, b = traces
        same = len(a) == len(b) and max(
            np.linalg.norm(np.append(r.x - q.x, r.mu - q.mu))
            for r, q in zip(a.records, b.records)) <= 1e-12
        # per-step contraction of the eigenvector error over the late-stage window
        others = np.delete(w, i)
        fac = abs(sigma - w[i]) / np.min(np.abs(others - sigma))
        v = V[:, i] / np.vdot(x0, V[:, i])
        ex = [np.linalg.norm(r.x - v) for r in a.records]
        ratios = [ex[k + 1] / ex[k] for k in range(len(ex) - 1)
                  if 1e-11 <= ex[k + 1] and ex[k] <= 1e-4]
        contr = bool(ratios) and all(abs(r / fac - 1) <= 0.1 for r in ratios)
        ok &= same and contr and a.converged
        worst = max(abs(r / fac - 1) for r in ratios) if ratios else math.inf
        parts.append(f"seed {seed}: traces {'agree' if same else 'differ'}, "
                     f"factor {fac:.3f}, worst dev {worst:.1%}")
    assert report(2, ok, "; ".join(parts))


def _valid_ratios(trace, lo=1e-11, hi=1e-4):
    e = trace.errors
    return [e[k] / e[k - 1] for k in range(1, len(e))
            if lo <= e[k - 1] <= hi and lo <= e[k] <= hi]


def test_criterion_03_apriori_vs_empirical():
    s = string_setup(RIGHT, a=0.05)
    r1 = analysis.matrix_A1(s.problem, s.sigma, s.x0, s.c, s.reference).spectral_radius()
    rb = analysis.matrix_B(s.problem, s.sigma, s.c, s.reference).spectral_radius()
    ok, parts = True, []
    for variant, target in (("QN1", r1), ("QN2", rb), ("QN3", rb)):
        ratios = _valid_ratios(run_variant(s, variant))
        if ratios:
            med = float(np.median(ratios))
            good = abs(med / target - 1) <= 0.1
            parts.append(f"{variant}: median {med:.4g} vs {target:.4g} ({len(ratios)} valid)")
        else:
            good = False
            parts.append(f"{variant}: no valid rho_k")
        ok &= good
    assert report(3, ok, "; ".join(parts))


def test_criterion_04_qn4_quadratic():
    ok, parts, fitted = True, [], 0
    for name, target in (("right", RIGHT), ("left", LEFT)):
        s = string_setup(target)
        tr = run_variant(s, "QN4", tol_residual=1e-15, max_iter=10)
        e = _eigenvalue_errors(tr, s.reference.lam)
        order = analysis.fitted_order(e)
        if len(e) >= 3:
            fitted += 1
            good = order >= 1.8
            # r_k against the squared residual over the same pre-floor steps
            C = [tr.records[k].r_k_norm / tr.records[k].resid_norm ** 2 for k in range(len(e))]
            spread = max(C) / min(C)
            good &= spread < 10
            ok &= good
            parts.append(f"{name}: order {order:.3f}, C spread {spread:.2f}")
        else:
            parts.append(f"{name}: {len(e)} pre-floor errors, too few to fit")
    ok &= fitted > 0
    assert report(4, ok, "; ".join(parts))


def test_criterion_05_mslp_linear_one_step():
    ok, parts = True, []
    problems = [(np.diag([1.0, 3.0]), 0.9, np.array([1.0, 0.3]))]
    for seed in range(3):
        A, w, V, i, sigma, x0 = random_linear(seed)
        problems.append((A, sigma, x0))
    for A, mu0, x0 in problems:
        tr = run(linear(A), SolverConfig("QN4", mu0, x0, mu0, x0))
        good = len(tr) == 2 and tr.converged and tr.final.resid_norm <= 1e-12 * np.linalg.norm(
            tr.final.x)
        ok &= good
        parts.append(f"k={len(tr) - 1} resid {tr.final.resid_norm:.1e}")
    assert report(5, ok, "; ".join(parts))


def test_criterion_06_keldysh_reconstruction():
    ok, parts = True, []
    for r in (0.5, 2.0):
        p = circle_quadratic(r)
        spec = enumerate_spectrum(p)
        dec = keldysh.decompose(p, keldysh.Contour(0.0, 2.0 * r, 256), spec)
        zs = inside_probes(0.0, 2.0 * r, 10, seed=int(10 * r), avoid=spec.eigenvalues)
        rel = max(np.linalg.norm(keldysh.inverse(p, z) - dec.partial_fraction(z), 2)
                  / np.linalg.norm(keldysh.inverse(p, z), 2) for z in zs)
        rem = max(np.linalg.norm(R, 2) for R in keldysh.contour_remainders(p, dec.contour, zs))
        good = len(dec.triplets) == 20 and rel <= 1e-8 and rem <= 1e-8
        ok &= good
        parts.append(f"r={r}: pf rel {rel:.1e}, |R| {rem:.1e}")
    assert report(6, ok, "; ".join(parts))


def test_criterion_07_counterexample_remainder():
    ok, parts = True, []
    contour = keldysh.Contour(1.5, 3.0, 256)
    zs = [0.5, 1.2 + 0.4j, 2.5 - 0.3j, 1j, 3.1]
    for coeffs in ([1.0], [0.0, 1.0], [-3.0, 0.0, 1.0]):
        p = counterexample(coeffs)
        f = p.data["f"]
        worst12, worst_other = 0.0, 0.0
        for z, R in zip(zs, keldysh.contour_remainders(p, contour, zs)):
            worst12 = max(worst12, abs(R[0, 1] - f(z)))
            worst_other = max(worst_other, abs(R[0, 0]), abs(R[1, 0]), abs(R[1, 1]))
        good = worst12 <= 1e-10 and worst_other <= 1e-10
        ok &= good
        parts.append(f"f={list(coeffs)}: |R12-f| {worst12:.2g}, others {worst_other:.1e}")
    assert report(7, ok, "; ".join(parts))


def test_criterion_08_clustering_scaling():
    rs = np.logspace(-0.5, 5, 10)
    rhos = []
    for r in rs:
        s = circle_setup(r)
        rhos.append(analysis.matrix_B(s.problem, s.sigma, s.c, s.reference).spectral_radius())
    slope = float(np.polyfit(np.log(rs[-6:]), np.log(rhos[-6:]), 1)[0])
    assert report(8, abs(slope + 1.0) <= 0.1, f"slope {slope:.4f} over r in [{rs[-6]:.3g}, 1e5]")


def test_criterion_09_shift_distance_scaling():
    ok, parts = True, []
    for name, target in (("right", RIGHT), ("left", LEFT)):
        q = []
        for d in (5e-1, 5e-2, 5e-3, 5e-4):
            s = string_setup(target, offset=d)
            q.append(analysis.matrix_B(s.problem, s.sigma, s.c, s.reference)
                     .spectral_radius() / d)
        spread = max(q) / min(q) - 1
        ok &= spread <= 0.2
        parts.append(f"{name}: rho(B)/delta in [{min(q):.5g}, {max(q):.5g}]")
    assert report(9, ok, "; ".join(parts))


def _fd_derivative_error(p, lam):
    h = 1e-7 * (1 + abs(lam))
    fd = (evaluate(p, lam + h) - evaluate(p, lam - h)) / (2 * h)
    D = derivative(p, lam)
    return np.linalg.norm(fd - D) / max(np.linalg.norm(D), 1e-300)


def _invariant_runs():
    """(name, problem, setup-like tuple) for every built-in problem."""
    out = []
    for name, target in (("string right", RIGHT), ("string left", LEFT)):
        out.append((name, string_setup(target)))
    out.append(("circle 0.5", circle_setup(0.5)))
    out.append(("circle 2", circle_setup(2.0, sigma=0.3)))
    return out


def test_criterion_10_invariant_suite():
    ok, parts = True, []
    # normalization and step certification, all variants
    worst_norm, worst_step = 0.0, 0.0
    setups = [(n, s.problem, s.sigma, s.c, s.x0, s.mu0) for n, s in _invariant_runs()]
    A, w, V, i, sigma, x0 = random_linear(0)
    setups.append(("linear", linear(A), sigma, x0, x0, sigma))
    ce = counterexample([1.0, 2.0])
    x0 = np.array([1.0, 0.05])
    setups.append(("counterexample", ce, 1.1, x0, x0, 1.1))
    for name, p, sig, c, x0, mu0 in setups:
        for variant in ("QN1", "QN2", "QN3", "QN4"):
            tr = run(p, SolverConfig(variant, sig, c, mu0, x0, max_iter=40))
            if tr.status == "breakdown":
                ok = False
                parts.append(f"{name} {variant}: breakdown ({tr.message})")
            worst_norm = max(worst_norm, normalization_defects(tr).max())
            if len(tr) > 1:
                worst_step = max(worst_step, step_defects(p, tr).max())
    ok &= worst_norm <= 1e-12 and worst_step <= 1e-10
    parts.append(f"normalization {worst_norm:.1e}, step equation {worst_step:.1e}")

    # derivative finite differences, 20 random points per problem
    rng = np.random.default_rng(7)
    worst_fd = 0.0
    for p in (loaded_string(20, 20), circle_quadratic(0.5), circle_quadratic(2.0),
              counterexample([-3.0, 0.0, 1.0]), linear(A)):
        for _ in range(20):
            lam = complex(rng.uniform(-3, 3), rng.uniform(-3, 3))
            if p.poles and min(abs(lam - q) for q in p.poles) < 0.2:
                lam += 1.0
            worst_fd = max(worst_fd, _fd_derivative_error(p, lam))
    ok &= worst_fd <= 1e-6
    parts.append(f"finite differences {worst_fd:.1e}")

    # Keldysh identity against a quadrature-error budget plus a round-off floor
    worst_k = 0.0
    cases = [(circle_quadratic(0.5), 0.0, 1.0), (counterexample([1.0]), 1.5, 3.0),
             (linear(np.diag([1.0, 2.0])), 1.5, 1.0), (loaded_string(20, 20), 9.07, 6.0)]
    for p, center, radius in cases:
        spec = enumerate_spectrum(p)
        dec = keldysh.decompose(p, keldysh.Contour(center, radius, 256), spec)
        zs = inside_probes(center, radius, 10, seed=3, avoid=spec.eigenvalues, frac=0.6)
        coarse = keldysh.contour_remainders(p, dec.contour, zs)
        fine = keldysh.contour_remainders(
            p, keldysh.Contour(dec.contour.center, dec.contour.radius, 512), zs)
        for z, Rc, Rf in zip(zs, coarse, fine):
            inv_norm = np.linalg.norm(keldysh.inverse(p, z), 2)
            budget = 10 * np.linalg.norm(Rc - Rf, 2) + 1e-10 * max(1.0, inv_norm)
            worst_k = max(worst_k, dec.identity_residual(z, Rc) / budget)
    ok &= worst_k <= 1.0
    parts.append(f"Keldysh identity at {worst_k:.1e} of budget")
    assert report(10, ok, "; ".join(parts))


def test_criterion_11_qualitative_ordering():
    its = {}
    for name, target in (("right", RIGHT), ("left", LEFT)):
        s = string_setup(target, a=0.15)
        for variant in ("QN1", "QN2", "QN3"):
            its[name, variant] = run_variant(s, variant, max_iter=200).iterations_to(1e-10)
    fmt = ", ".join(f"{k[0]} {k[1]}={v}" for k, v in its.items())
    if any(v is None for v in its.values()):
        assert report(11, False, "a run did not reach 1e-10: " + fmt)
    ok = its["right", "QN1"] >= its["right", "QN2"] and its["right", "QN1"] >= its["right", "QN3"]
    ok &= all(its["left", v] > its["right", v] for v in ("QN1", "QN2", "QN3"))
    assert report(11, ok, fmt)


@pytest.mark.parametrize("dummy", [None])
def test_criterion_12_determinism(tmp_path, dummy):
    runs = [("solve", "loaded_string_qn2.yaml"), ("factors", "loaded_string_factors.yaml"),
            ("sweep", "circle_sweep.yaml"), ("keldysh", "circle_keldysh.yaml"),
            ("keldysh", "counterexample_keldysh.yaml")]
    ok, bad = True, []
    for cmd, name in runs:
        outs = []
        for rep in (1, 2):
            d = tmp_path / f"{cmd}_{rep}"
            d.mkdir(exist_ok=True)
            out = d / (name.replace(".yaml", ".csv"))
            code = main([cmd, "--config", os.path.join(CONFIGS, name), "--out", str(out),
                         "--quiet"])
            outs.append((d, code))
        (d1, c1), (d2, c2) = outs
        files = sorted(os.listdir(d1))
        same = c1 == c2 and files == sorted(os.listdir(d2)) and all(
            filecmp.cmp(d1 / f, d2 / f, shallow=False) for f in files)
        if not same:
            ok = False
            bad.append(f"{cmd} {name}")
    assert report(12, ok, "all CSVs byte-identical" if ok else "differs: " + ", ".join(bad))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
