"""Command-line harness: ``nepqn {solve,factors,sweep,keldysh} --config FILE``.

Every command writes one CSV (to ``--out``, the config's ``output`` key, or
stdout). The first line is a ``# schema: <name>/<version>`` comment, the
second the column header. Floats carry 17 significant digits; blank cells
mean "not applicable". Exit status is 0 iff every run converged and every
assertion column holds; 1 otherwise; 2 for configuration and setup errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, keldysh
from .config import ConfigError, build_problem, load_config, parse_config, set_path
from .core import Eigentriplet, NepError, evaluate
from .problems import SpectrumReport, enumerate_spectrum
from .solvers import SolverConfig, run

__all__ = [
    "main", "cmd_solve", "cmd_factors", "cmd_sweep", "cmd_keldysh",
    "Setup", "resolve_setup", "write_csv", "TRACE_COLUMNS",
]

log = logging.getLogger("nepqn")

TRACE_SCHEMA = "nepqn-trace/1"
TRACE_COLUMNS = ["k", "mu_re", "mu_im", "delta_mu_abs", "resid_norm", "err_norm",
                 "rho_est", "r_k_norm"]
FACTORS_SCHEMA = "nepqn-factors/1"
FACTORS_COLUMNS = ["sigma_re", "sigma_im", "lam_re", "lam_im", "rho_A1", "rho_A2", "rho_B",
                   "rel_diff_A2_B", "spectra_dist", "clustering_bound", "remainder_norm",
                   "assert_A2_equals_B", "assert_bound_ge_rho_B"]
KAPPA_SCHEMA = "nepqn-kappa/1"
KAPPA_COLUMNS = ["i", "lam_re", "lam_im", "kappa", "shift_distance", "defective"]
SWEEP_SCHEMA = "nepqn-sweep/1"
SWEEP_COLUMNS = ["param", "rho_A1", "rho_A2", "rho_B", "rho_B_over_param",
                 "assert_A2_equals_B", "slope"]
KELDYSH_SCHEMA = "nepqn-keldysh/1"
KELDYSH_COLUMNS = ["z_re", "z_im", "inv_norm", "remainder_norm", "R12_re", "R12_im",
                   "identity_residual", "quad_err", "modes_diff", "assert_identity"]
DECAY_SCHEMA = "nepqn-decay/1"

#: relative tolerance of the QN2/QN3 factor-equivalence assertion
EQUIV_TOL = 1e-8


# --------------------------------------------------------------------------
# output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def write_csv(path, schema, columns, rows):
    """Write rows (dicts) with a schema comment line; ``path=None`` means stdout."""
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(col)) for col in columns])
    text = buf.getvalue()
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _sidecar(out, suffix):
    if out is None:
        return None
    p = Path(out)
    return p.with_name(p.stem + suffix)


# --------------------------------------------------------------------------
# experiment setup


@dataclass
class Setup:
    problem: object
    sigma: complex
    mu0: complex
    c: np.ndarray
    x0: np.ndarray
    #: reference eigentriplet for error columns (None if disabled)
    reference: Optional[Eigentriplet]
    #: enumerated spectrum, when a target was requested
    spectrum: Optional[SpectrumReport] = None
    target_index: Optional[int] = None


def _left_vector(problem, lam):
    u = np.linalg.svd(evaluate(problem, lam))[0][:, -1]
    return u / np.linalg.norm(u)


def _qn4_reference(problem, mu0, x0, c):
    trace = run(problem, SolverConfig("QN4", mu0, c, mu0, x0, tol_residual=1e-14, max_iter=50))
    last = trace.final
    if last.resid_norm > 1e-12 * np.linalg.norm(last.x):
        raise NepError(f"QN4 reference run did not converge ({trace.status})")
    v = last.x / np.linalg.norm(last.x)
    return Eigentriplet(last.mu, v, _left_vector(problem, last.mu))


def resolve_setup(cfg, problem=None):
    """Turn the ``start``/``solver``/``analysis`` sections into concrete vectors."""
    problem = build_problem(cfg.problem) if problem is None else problem
    st, sol = cfg.start, cfg.solver
    n = problem.dimension
    spectrum, idx, trip = None, None, None
    if "target" in st:
        spectrum = enumerate_spectrum(problem)
        if not len(spectrum):
            raise ConfigError("start.target: problem has no enumerable eigenvalues")
        idx = int(np.argmin(np.abs(spectrum.eigenvalues - st["target"])))
        trip = spectrum.triplets[idx]

    recipe = st["recipe"]
    if recipe == "eigvec_plus_ones":
        x0 = trip.right_vec + st["a"] * np.ones(n)
    elif recipe == "random":
        rng = np.random.default_rng(st["seed"])
        x0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    else:
        if "x0" not in sol:
            raise ConfigError("solver.x0: required by recipe explicit")
        x0 = sol["x0"]
    if x0.shape != (n,):
        raise ConfigError(f"solver.x0: length {x0.shape[0]} does not match n={n}")
    c = sol.get("c", x0)
    if c.shape != (n,):
        raise ConfigError(f"solver.c: length {c.shape[0]} does not match n={n}")

    if "sigma" in sol:
        sigma = sol["sigma"]
    elif "shift_offset" in st:
        sigma = trip.lam + st["shift_offset"]
    else:
        raise ConfigError("solver.sigma: missing (or give start.target and start.shift_offset)")
    mu0 = sol.get("mu0", sigma)

    mode = cfg.analysis["reference"]
    if mode == "none":
        ref = None
    elif mode == "auto" and trip is not None:
        ref = trip
    else:
        ref = _qn4_reference(problem, mu0, x0, c)
    return Setup(problem, complex(sigma), complex(mu0), np.asarray(c, complex),
                 np.asarray(x0, complex), ref, spectrum, idx)


def _solver_config(cfg, s):
    sol = cfg.solver
    return SolverConfig(sol["variant"], s.sigma, s.c, s.mu0, s.x0,
                        tol_residual=sol["tol_residual"], max_iter=sol["max_iter"],
                        qn2_w_mode=sol["qn2_w_mode"], w_sigma=sol.get("w_sigma"),
                        reference=s.reference)


# --------------------------------------------------------------------------
# solve


def trace_rows(trace, with_rho=True):
    rows = []
    for r in trace.records:
        rows.append({
            "k": r.k, "mu_re": r.mu.real, "mu_im": r.mu.imag,
            "delta_mu_abs": None if r.delta_mu is None else abs(r.delta_mu),
            "resid_norm": r.resid_norm, "err_norm": r.err_norm,
            "rho_est": r.rho_est if with_rho else None, "r_k_norm": r.r_k_norm,
        })
    return rows


def _eigenvalue_errors(trace, lam, floor=analysis.ERROR_FLOOR):
    # |mu_k - lam| above the round-off floor, scaled to the eigenvalue size
    e = np.abs(trace.mus - lam)
    keep = []
    for v in e:
        if v <= floor * max(1.0, abs(lam)):
            break
        keep.append(v)
    return np.array(keep)


def cmd_solve(cfg, out=None, quiet=False):
    s = resolve_setup(cfg)
    trace = run(s.problem, _solver_config(cfg, s))
    write_csv(out, TRACE_SCHEMA, TRACE_COLUMNS, trace_rows(trace, cfg.analysis["rho"]))

    summary = {
        "config": cfg.raw,
        "variant": trace.variant,
        "status": trace.status,
        "message": trace.message,
        "iterations": len(trace) - 1,
        "final_residual": trace.final.resid_norm,
        "final_mu": [trace.final.mu.real, trace.final.mu.imag],
    }
    if s.reference is not None:
        summary["iterations_to_1e-10"] = trace.iterations_to(1e-10)
        summary["reference_lambda"] = [s.reference.lam.real, s.reference.lam.imag]
    if cfg.analysis["factors"] and s.reference is not None and trace.variant != "QN4":
        try:
            summary.update(_factor_values(s))
        except NepError as e:
            summary["factor_error"] = str(e)
    if trace.variant == "QN4" and s.reference is not None:
        summary["fitted_order"] = _none_if_nan(
            analysis.fitted_order(_eigenvalue_errors(trace, s.reference.lam)))
    path = _sidecar(out, "_summary.json")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(summary, fh, sort_keys=True, indent=1, default=_json_default)
            fh.write("\n")
    if not quiet:
        print(f"{trace.variant}: {trace.status} after {len(trace) - 1} iterations, "
              f"residual {trace.final.resid_norm:.3e}", file=sys.stderr)
    return 0 if trace.converged else 1


def _json_default(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _none_if_nan(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


# --------------------------------------------------------------------------
# factors


def _factor_values(s):
    p, trip = s.problem, s.reference
    A1 = analysis.matrix_A1(p, s.sigma, s.x0, s.c, trip)
    A2 = analysis.matrix_A2(p, s.sigma, s.c, trip)
    B = analysis.matrix_B(p, s.sigma, s.c, trip)
    r1, r2, rb = A1.spectral_radius(), A2.spectral_radius(), B.spectral_radius()
    dist = analysis.spectra_distance(A2, B)
    rel = abs(r2 - rb) / rb if rb > 0 else abs(r2 - rb)
    scale = max(rb, np.finfo(float).tiny)
    return {"rho_A1": r1, "rho_A2": r2, "rho_B": rb, "rel_diff_A2_B": rel,
            "spectra_dist": dist,
            "assert_A2_equals_B": bool(rel <= EQUIV_TOL and dist <= EQUIV_TOL * max(scale, 1.0))}


def _enclosing_contour(spectrum, sigma):
    lams = list(spectrum.eigenvalues) + [sigma]
    return keldysh.Contour(0.0, 2.0 * max(abs(z) for z in lams) + 1.0, 64)


def _bound_values(cfg, s, nodes=None):
    """Clustering bound and the remainder norm it uses, plus the kappa report."""
    spectrum = s.spectrum if s.spectrum is not None else enumerate_spectrum(s.problem)
    if cfg.contour is not None:
        contour = keldysh.Contour(cfg.contour["center"], cfg.contour["radius"],
                                  nodes or cfg.contour["node_count"])
    else:
        contour = _enclosing_contour(spectrum, s.sigma)
    dec = keldysh.decompose(s.problem, contour, spectrum, mode="residual")
    if not dec.contour.inside(s.sigma):
        raise ConfigError("contour: the shift must lie inside the contour")
    lam = s.reference.lam
    inside = list(dec.triplets)
    target = int(np.argmin([abs(t.lam - lam) for t in inside])) if inside else None
    if target is None or abs(inside[target].lam - lam) > 1e-8 * (1 + abs(lam)):
        raise ConfigError("contour: the target eigenvalue is not enclosed")
    sub = SpectrumReport(inside, spectrum.method)
    rnorm = float(np.linalg.norm(dec.remainder(s.sigma), 2))
    bound = analysis.clustering_bound(s.problem, s.sigma, s.c, sub, target, rnorm)
    return bound, rnorm, analysis.condition_numbers(spectrum, s.problem, s.sigma)


def factor_row(cfg, s, nodes=None):
    row = {"sigma_re": s.sigma.real, "sigma_im": s.sigma.imag,
           "lam_re": s.reference.lam.real, "lam_im": s.reference.lam.imag}
    row.update(_factor_values(s))
    bound, rnorm, report = _bound_values(cfg, s, nodes)
    row["clustering_bound"] = bound
    row["remainder_norm"] = rnorm
    row["assert_bound_ge_rho_B"] = bool(bound >= row["rho_B"])
    return row, report


def cmd_factors(cfg, out=None, quiet=False, nodes=None):
    s = resolve_setup(cfg)
    if s.reference is None:
        raise ConfigError("analysis.reference: factors need a reference eigenpair")
    row, report = factor_row(cfg, s, nodes)
    write_csv(out, FACTORS_SCHEMA, FACTORS_COLUMNS, [row])
    kap = []
    for i, (lam, k) in enumerate(zip(report.eigenvalues, report.kappa)):
        kap.append({"i": i, "lam_re": lam.real, "lam_im": lam.imag, "kappa": k,
                    "shift_distance": report.shift_distance[i],
                    "defective": i in report.defective})
    path = _sidecar(out, "_kappa.csv")
    if path is not None:
        write_csv(path, KAPPA_SCHEMA, KAPPA_COLUMNS, kap)
    ok = row["assert_A2_equals_B"] and row["assert_bound_ge_rho_B"]
    if not quiet:
        print(f"rho(A1)={row['rho_A1']:.6g} rho(A2)={row['rho_A2']:.6g} "
              f"rho(B)={row['rho_B']:.6g} bound={row['clustering_bound']:.6g}",
              file=sys.stderr)
    return 0 if ok else 1


# --------------------------------------------------------------------------
# sweep


def _sweep_point(cfg, value):
    sub = parse_config(set_path(cfg.raw, cfg.sweep["parameter"], value))
    s = resolve_setup(sub)
    if s.reference is None:
        raise ConfigError("analysis.reference: sweeps need a reference eigenpair")
    vals = _factor_values(s)
    p = abs(complex(value))
    vals["param"] = value if not isinstance(value, complex) else p
    vals["rho_B_over_param"] = vals["rho_B"] / p if p > 0 else None
    return vals


def _threads(npoints):
    cap = os.environ.get("NEPQN_THREADS")
    try:
        cap = int(cap) if cap else (os.cpu_count() or 1)
    except ValueError:
        cap = 1
    return max(1, min(cap, npoints))


def loglog_slope(params, rhos, last=None):
    """Least-squares slope of log rho against log |param| (None below two points)."""
    x = np.log(np.abs(np.asarray(params, dtype=complex)))
    y = np.log(np.asarray(rhos, dtype=float))
    if last is not None:
        x, y = x[-last:], y[-last:]
    if x.size < 2:
        return None
    return float(np.polyfit(x, y, 1)[0])


def cmd_sweep(cfg, out=None, quiet=False):
    if cfg.sweep is None:
        raise ConfigError("sweep: missing section")
    values = cfg.sweep["values"]
    with ThreadPoolExecutor(max_workers=_threads(len(values))) as ex:
        # map() yields in submission order, so rows follow the parameter list
        rows = list(ex.map(lambda v: _sweep_point(cfg, v), values))
    slope = loglog_slope([r["param"] for r in rows], [r["rho_B"] for r in rows],
                         cfg.sweep["fit_last"])
    for r in rows:
        r["slope"] = slope
    write_csv(out, SWEEP_SCHEMA, SWEEP_COLUMNS, rows)
    if not quiet:
        tail = "" if slope is None else f", slope {slope:.4f}"
        print(f"sweep over {cfg.sweep['parameter']}: {len(rows)} points{tail}", file=sys.stderr)
    return 0 if all(r["assert_A2_equals_B"] for r in rows) else 1


# --------------------------------------------------------------------------
# keldysh


def _probe_points(cfg, contour, eigenvalues):
    if isinstance(cfg.probes, list):
        return cfg.probes
    spec = cfg.probes or {"count": 10, "seed": 0, "fraction": 0.5}
    rng = np.random.default_rng(spec["seed"])
    rad = spec["fraction"] * contour.radius
    pts = []
    while len(pts) < spec["count"]:
        z = contour.center + rad * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        if all(abs(z - lam) > 1e-3 * contour.radius for lam in eigenvalues):
            pts.append(complex(z))
    return pts


def cmd_keldysh(cfg, out=None, quiet=False, nodes=None):
    if cfg.contour is None:
        raise ConfigError("contour: missing section")
    problem = build_problem(cfg.problem)
    spectrum = enumerate_spectrum(problem)
    contour = keldysh.Contour(cfg.contour["center"], cfg.contour["radius"],
                              nodes or cfg.contour["node_count"])
    dec = keldysh.decompose(problem, contour, spectrum, mode=cfg.contour["mode"])
    contour = dec.contour
    probes = _probe_points(cfg, contour, spectrum.eigenvalues)
    R_int = keldysh.contour_remainders(problem, contour, probes)
    fine = keldysh.Contour(contour.center, contour.radius, 2 * contour.node_count)
    R_fine = keldysh.contour_remainders(problem, fine, probes)
    rows = []
    for z, Ri, Rf in zip(probes, R_int, R_fine):
        inv = keldysh.inverse(problem, z)
        R_res = inv - dec.partial_fraction(z)
        R = Ri if dec.mode == "integral" else R_res
        inv_norm = float(np.linalg.norm(inv, 2))
        ident = dec.identity_residual(z, Ri)
        qerr = float(np.linalg.norm(Ri - Rf, 2))
        R12 = R[0, 1] if problem.dimension > 1 else R[0, 0]
        rows.append({
            "z_re": z.real, "z_im": z.imag, "inv_norm": inv_norm,
            "remainder_norm": float(np.linalg.norm(R, 2)),
            "R12_re": R12.real, "R12_im": R12.imag,
            "identity_residual": ident, "quad_err": qerr,
            "modes_diff": float(np.linalg.norm(Ri - R_res, 2)),
            # quadrature error budget plus a round-off floor
            "assert_identity": bool(ident <= 10 * qerr + 1e-10 * max(1.0, inv_norm)),
        })
    write_csv(out, KELDYSH_SCHEMA, KELDYSH_COLUMNS, rows)

    if cfg.decay is not None:
        d = cfg.decay
        table = keldysh.remainder_decay(problem, d["center"], d["radii"], probes,
                                        nodes or d["node_count"])
        cols = ["radius", "max_inv_norm"] + [f"R_norm_{i}" for i in range(len(probes))] \
            + ["skipped"]
        drows = []
        for t in table:
            row = {"radius": t["radius"], "max_inv_norm": t["max_inv_norm"],
                   "skipped": t["skipped"]}
            row.update({f"R_norm_{i}": v for i, v in enumerate(t["remainder_norms"])})
            drows.append(row)
        path = _sidecar(out, "_decay.csv")
        if path is not None:
            write_csv(path, DECAY_SCHEMA, cols, drows)
    ok = all(r["assert_identity"] for r in rows)
    if not quiet:
        worst = max(r["identity_residual"] for r in rows)
        print(f"keldysh: {len(dec.triplets)} enclosed eigenvalues, {len(rows)} probes, "
              f"worst identity residual {worst:.3e}", file=sys.stderr)
    return 0 if ok else 1


# --------------------------------------------------------------------------
# entry point


COMMANDS = {"solve": cmd_solve, "factors": cmd_factors, "sweep": cmd_sweep,
            "keldysh": cmd_keldysh}


def build_parser():
    ap = argparse.ArgumentParser(prog="nepqn", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment file")
        p.add_argument("--out", help="CSV path (default: config 'output', else stdout)")
        p.add_argument("--nodes", type=int, help="contour node count override")
        p.add_argument("--quiet", action="store_true", help="no summary on stderr")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.nodes is not None and args.nodes < 1:
        print("error: --nodes must be positive", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        out = args.out or cfg.output
        kwargs = {"out": out, "quiet": args.quiet}
        if args.command in ("factors", "keldysh"):
            kwargs["nodes"] = args.nodes
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](cfg, **kwargs)
    except (ConfigError, NepError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
