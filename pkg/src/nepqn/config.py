"""Experiment configuration files (YAML).

A config is a mapping with the sections ``problem``, ``start``, ``solver``,
``analysis``, ``contour``, ``probes``, ``decay``, ``sweep`` and ``output``.
Only ``problem`` is mandatory. Complex scalars are written as numbers or
``[re, im]`` pairs; vectors and matrices are nested lists whose leaves are
numbers or ``[re, im]`` pairs. Unknown keys are rejected with the key path
in the message.
"""

from __future__ import annotations

import copy
import numbers
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from . import problems as _problems
from .solvers import VARIANTS

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "parse_config",
    "parse_complex", "parse_array", "build_problem", "set_path",
]


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


PROBLEM_KEYS = {
    "loaded_string": {"n", "c_scale", "pole"},
    "circle_quadratic": {"r"},
    "counterexample": {"f"},
    "linear": {"A"},
    "polynomial": {"coeffs"},
    "rational": {"coeffs", "terms"},
}
SECTION_KEYS = {
    "start": {"recipe", "target", "a", "shift_offset", "seed"},
    "solver": {"variant", "sigma", "mu0", "c", "x0", "tol_residual", "max_iter",
               "qn2_w_mode", "w_sigma"},
    "analysis": {"rho", "factors", "reference"},
    "contour": {"center", "radius", "node_count", "mode"},
    "decay": {"center", "radii", "node_count"},
    "sweep": {"parameter", "values", "fit_last"},
}
TOP_KEYS = {"problem", "output", "probes"} | set(SECTION_KEYS)
RECIPES = ("eigvec_plus_ones", "random", "explicit")
REFERENCES = ("auto", "qn4", "none")


def parse_complex(value, path):
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number or [re, im], got {value!r}")
    if isinstance(value, numbers.Number):
        return complex(value)
    if (isinstance(value, (list, tuple)) and len(value) == 2
            and all(isinstance(v, numbers.Number) and not isinstance(v, bool) for v in value)):
        return complex(value[0], value[1])
    raise ConfigError(f"{path}: expected a number or [re, im], got {value!r}")


def parse_array(value, ndim, path):
    """Vector (ndim=1) or matrix (ndim=2) with real or [re, im] leaves."""
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: not a rectangular numeric array") from None
    if arr.ndim == ndim + 1 and arr.shape[-1] == 2:
        arr = arr[..., 0] + 1j * arr[..., 1]
    if arr.ndim != ndim:
        kind = "vector" if ndim == 1 else "matrix"
        raise ConfigError(f"{path}: expected a {kind}, got shape {arr.shape}")
    if ndim == 2 and arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"{path}: matrix must be square, got shape {arr.shape}")
    return arr.astype(complex)


def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a mapping")
    for k in d:
        if k not in allowed:
            where = f"{path}.{k}" if path else str(k)
            raise ConfigError(f"{where}: unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(d, key, path, kind=float, default=None, positive=False):
    if key not in d:
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, numbers.Real):
        raise ConfigError(f"{path}.{key}: expected a real number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(f"{path}.{key}: expected an integer, got {v!r}")
    v = kind(v)
    if positive and v <= 0:
        raise ConfigError(f"{path}.{key}: must be positive")
    return v


def _values(spec, path):
    if isinstance(spec, dict):
        _check_keys(spec, {"logspace", "linspace"}, path)
        if len(spec) != 1:
            raise ConfigError(f"{path}: give exactly one of logspace, linspace")
        (kind, args), = spec.items()
        if not (isinstance(args, list) and len(args) == 3):
            raise ConfigError(f"{path}.{kind}: expected [start, stop, num]")
        start, stop, num = args
        return list(getattr(np, kind)(float(start), float(stop), int(num)))
    if not isinstance(spec, list) or not spec:
        raise ConfigError(f"{path}: expected a non-empty list or a logspace/linspace mapping")
    return [parse_complex(v, f"{path}[{i}]") if isinstance(v, list) else v
            for i, v in enumerate(spec)]


@dataclass
class ExperimentConfig:
    """Parsed and validated configuration; ``raw`` keeps the input mapping."""

    raw: dict
    problem: dict
    start: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    contour: Optional[dict] = None
    probes: Any = None
    decay: Optional[dict] = None
    sweep: Optional[dict] = None
    output: Optional[str] = None


def parse_config(raw):
    """Validate a mapping (e.g. from YAML) into an :class:`ExperimentConfig`."""
    raw = copy.deepcopy(raw)
    _check_keys(raw, TOP_KEYS, "")
    if "problem" not in raw:
        raise ConfigError("problem: missing section")
    prob = raw["problem"]
    if not isinstance(prob, dict) or "kind" not in prob:
        raise ConfigError("problem.kind: missing")
    kind = prob["kind"]
    if kind not in PROBLEM_KEYS:
        raise ConfigError(f"problem.kind: unknown problem {kind!r}")
    _check_keys(prob, PROBLEM_KEYS[kind] | {"kind"}, "problem")
    for name in SECTION_KEYS:
        if name in raw and raw[name] is not None:
            _check_keys(raw[name], SECTION_KEYS[name], name)

    start = dict(raw.get("start") or {})
    recipe = start.setdefault("recipe", "explicit")
    if recipe not in RECIPES:
        raise ConfigError(f"start.recipe: expected one of {RECIPES}, got {recipe!r}")
    if recipe == "eigvec_plus_ones" and "target" not in start:
        raise ConfigError("start.target: required by recipe eigvec_plus_ones")
    if "target" in start:
        start["target"] = parse_complex(start["target"], "start.target")
    start["a"] = _number(start, "a", "start", default=0.0)
    start["seed"] = _number(start, "seed", "start", int, default=0)
    if "shift_offset" in start:
        start["shift_offset"] = parse_complex(start["shift_offset"], "start.shift_offset")
        if "target" not in start:
            raise ConfigError("start.shift_offset: needs start.target")

    solver = dict(raw.get("solver") or {})
    solver.setdefault("variant", "QN2")
    if solver["variant"] not in VARIANTS:
        raise ConfigError(f"solver.variant: expected one of {VARIANTS}, got {solver['variant']!r}")
    for key in ("sigma", "mu0"):
        if key in solver:
            solver[key] = parse_complex(solver[key], f"solver.{key}")
    for key in ("c", "x0", "w_sigma"):
        if key in solver:
            solver[key] = parse_array(solver[key], 1, f"solver.{key}")
    solver["tol_residual"] = _number(solver, "tol_residual", "solver", default=1e-12,
                                     positive=True)
    solver["max_iter"] = _number(solver, "max_iter", "solver", int, default=100)
    if solver["max_iter"] < 0:
        raise ConfigError("solver.max_iter: must be >= 0")
    solver.setdefault("qn2_w_mode", "derive_w_from_c")
    if solver["qn2_w_mode"] not in ("derive_w_from_c", "fix_w_choose_c"):
        raise ConfigError(f"solver.qn2_w_mode: unknown mode {solver['qn2_w_mode']!r}")

    analysis = dict(raw.get("analysis") or {})
    for key in ("rho", "factors"):
        v = analysis.setdefault(key, True)
        if not isinstance(v, bool):
            raise ConfigError(f"analysis.{key}: expected true/false")
    analysis.setdefault("reference", "auto")
    if analysis["reference"] not in REFERENCES:
        raise ConfigError(f"analysis.reference: expected one of {REFERENCES}")

    contour = None
    if raw.get("contour") is not None:
        c = raw["contour"]
        if "radius" not in c:
            raise ConfigError("contour.radius: missing")
        contour = {
            "center": parse_complex(c.get("center", 0.0), "contour.center"),
            "radius": _number(c, "radius", "contour", positive=True),
            "node_count": _number(c, "node_count", "contour", int, default=256, positive=True),
            "mode": c.get("mode", "residual"),
        }
        if contour["mode"] not in ("residual", "integral"):
            raise ConfigError("contour.mode: expected residual or integral")

    probes = raw.get("probes")
    if probes is not None:
        if isinstance(probes, dict):
            _check_keys(probes, {"count", "seed", "fraction"}, "probes")
            probes = {"count": _number(probes, "count", "probes", int, default=10, positive=True),
                      "seed": _number(probes, "seed", "probes", int, default=0),
                      "fraction": _number(probes, "fraction", "probes", default=0.5,
                                          positive=True)}
        elif isinstance(probes, list) and probes:
            probes = [parse_complex(z, f"probes[{i}]") for i, z in enumerate(probes)]
        else:
            raise ConfigError("probes: expected a list of points or {count, seed, fraction}")

    decay = None
    if raw.get("decay") is not None:
        d = raw["decay"]
        if "radii" not in d:
            raise ConfigError("decay.radii: missing")
        decay = {
            "center": parse_complex(d.get("center", 0.0), "decay.center"),
            "radii": [float(r) for r in _values(d["radii"], "decay.radii")],
            "node_count": _number(d, "node_count", "decay", int, default=256, positive=True),
        }

    sweep = None
    if raw.get("sweep") is not None:
        s = raw["sweep"]
        for key in ("parameter", "values"):
            if key not in s:
                raise ConfigError(f"sweep.{key}: missing")
        if not isinstance(s["parameter"], str) or "." not in s["parameter"]:
            raise ConfigError("sweep.parameter: expected a dotted key such as problem.r")
        sweep = {"parameter": s["parameter"], "values": _values(s["values"], "sweep.values"),
                 "fit_last": _number(s, "fit_last", "sweep", int, default=None, positive=True)}
        section, key = sweep["parameter"].split(".", 1)
        allowed = PROBLEM_KEYS[kind] if section == "problem" else SECTION_KEYS.get(section)
        if allowed is None or key not in allowed:
            raise ConfigError(f"sweep.parameter: {sweep['parameter']!r} is not a config key")

    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output: expected a path string")

    _validate_problem(prob)
    return ExperimentConfig(raw, prob, start, solver, analysis, contour, probes, decay,
                            sweep, output)


def _validate_problem(prob):
    # building is cheap; do it once so errors surface at parse time
    build_problem(prob)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: YAML syntax error: {e}") from None
    if raw is None:
        raise ConfigError(f"{path}: empty config")
    return parse_config(raw)


def set_path(raw, dotted, value):
    """Copy of ``raw`` with ``section.key`` set to ``value``."""
    out = copy.deepcopy(raw)
    section, key = dotted.split(".", 1)
    out.setdefault(section, {})
    if out[section] is None:
        out[section] = {}
    if isinstance(value, complex):
        value = [value.real, value.imag]
    elif isinstance(value, np.generic):
        value = value.item()
    out[section][key] = value
    return out


def build_problem(prob):
    """NepProblem from a ``problem`` section."""
    kind = prob["kind"]
    p = "problem"
    if kind == "loaded_string":
        n = _number(prob, "n", p, int, default=20)
        if n < 2:
            raise ConfigError("problem.n: loaded_string needs n >= 2")
        return _problems.loaded_string(n, _number(prob, "c_scale", p, default=1.0),
                                       _number(prob, "pole", p, default=1.0))
    if kind == "circle_quadratic":
        return _problems.circle_quadratic(_number(prob, "r", p, default=0.5, positive=True))
    if kind == "counterexample":
        f = prob.get("f", [1.0])
        if not isinstance(f, list) or not f:
            raise ConfigError("problem.f: expected a list of polynomial coefficients")
        return _problems.counterexample([parse_complex(a, f"problem.f[{i}]")
                                         for i, a in enumerate(f)])
    if kind == "linear":
        if "A" not in prob:
            raise ConfigError("problem.A: missing")
        return _problems.linear(parse_array(prob["A"], 2, "problem.A"))
    coeffs = prob.get("coeffs")
    if not isinstance(coeffs, list) or not coeffs:
        raise ConfigError("problem.coeffs: expected a non-empty list of matrices")
    mats = [parse_array(A, 2, f"problem.coeffs[{i}]") for i, A in enumerate(coeffs)]
    if len({A.shape for A in mats}) != 1:
        raise ConfigError("problem.coeffs: matrices differ in size")
    if kind == "polynomial":
        return _problems.polynomial(mats)
    terms = []
    for i, t in enumerate(prob.get("terms") or []):
        path = f"problem.terms[{i}]"
        _check_keys(t, {"pole", "C", "form"}, path)
        if "pole" not in t or "C" not in t:
            raise ConfigError(f"{path}: needs pole and C")
        form = t.get("form", "lam/(lam-s)")
        if form not in ("lam/(lam-s)", "lam/(s-lam)"):
            raise ConfigError(f"{path}.form: expected 'lam/(lam-s)' or 'lam/(s-lam)'")
        C = parse_array(t["C"], 2, f"{path}.C")
        if C.shape != mats[0].shape:
            raise ConfigError(f"{path}.C: size differs from coeffs")
        terms.append((parse_complex(t["pole"], f"{path}.pole"), C, form))
    return _problems.rational(mats, terms)
