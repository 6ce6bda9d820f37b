import numpy as np
import pytest

from nepqn.config import (
    ConfigError, build_problem, load_config, parse_array, parse_complex, parse_config, set_path,
)
from nepqn.core import evaluate


def test_parse_complex_forms():
    assert parse_complex(2, "x") == 2
    assert parse_complex([1.5, -2], "x") == 1.5 - 2j
    for bad in (True, "1", [1, 2, 3], [1, "a"]):
        with pytest.raises(ConfigError, match="^x:"):
            parse_complex(bad, "x")


def test_parse_array_complex_leaves():
    v = parse_array([[1, 0], [0, 1]], 1, "v")
    np.testing.assert_array_equal(v, [1, 1j])
    M = parse_array([[1, 2], [3, 4]], 2, "M")
    assert M.dtype == complex and M.shape == (2, 2)
    with pytest.raises(ConfigError, match="square"):
        parse_array([[1, 2, 3], [4, 5, 6]], 2, "M")
    with pytest.raises(ConfigError, match="rectangular"):
        parse_array([[1], [2, 3]], 2, "M")


def test_minimal_config_defaults():
    cfg = parse_config({"problem": {"kind": "circle_quadratic", "r": 2}})
    assert cfg.solver["variant"] == "QN2"
    assert cfg.solver["tol_residual"] == 1e-12 and cfg.solver["max_iter"] == 100
    assert cfg.start["recipe"] == "explicit"
    assert cfg.analysis["reference"] == "auto"


@pytest.mark.parametrize("raw, path", [
    ({"problem": {"kind": "linear", "A": [[1]]}, "bogus": 1}, "bogus"),
    ({"problem": {"kind": "linear", "A": [[1]], "B": 2}}, "problem.B"),
    ({"problem": {"kind": "linear", "A": [[1]]}, "solver": {"sigm": 1}}, "solver.sigm"),
    ({"problem": {"kind": "linear", "A": [[1]]}, "contour": {"radius": 1, "nodes": 4}},
     "contour.nodes"),
])
def test_unknown_keys_rejected_with_path(raw, path):
    with pytest.raises(ConfigError, match=f"^{path}: unknown key"):
        parse_config(raw)


@pytest.mark.parametrize("raw, msg", [
    ({}, "problem: missing"),
    ({"problem": {"kind": "spiral"}}, "problem.kind"),
    ({"problem": {"kind": "circle_quadratic", "r": -1}}, "problem.r: must be positive"),
    ({"problem": {"kind": "loaded_string", "n": 1}}, "problem.n"),
    ({"problem": {"kind": "linear"}}, "problem.A: missing"),
    ({"problem": {"kind": "linear", "A": [[1]]}, "solver": {"variant": "QN9"}}, "solver.variant"),
    ({"problem": {"kind": "linear", "A": [[1]]}, "solver": {"max_iter": 1.5}}, "solver.max_iter"),
    ({"problem": {"kind": "linear", "A": [[1]]}, "solver": {"max_iter": -1}}, "solver.max_iter"),
    ({"problem": {"kind": "linear", "A": [[1]]}, "start": {"recipe": "eigvec_plus_ones"}},
     "start.target"),
    ({"problem": {"kind": "linear", "A": [[1]]}, "analysis": {"reference": "exact"}},
     "analysis.reference"),
    ({"problem": {"kind": "linear", "A": [[1]]}, "sweep": {"parameter": "problem.r",
                                                          "values": [1]}}, "sweep.parameter"),
    ({"problem": {"kind": "linear", "A": [[1]]}, "probes": "all"}, "probes"),
    ({"problem": {"kind": "rational", "coeffs": [[[1]]], "terms": [{"pole": 1}]}},
     r"problem.terms\[0\]"),
])
def test_invalid_values(raw, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(raw)


def test_values_spec_and_set_path():
    raw = {"problem": {"kind": "circle_quadratic", "r": 1},
           "sweep": {"parameter": "problem.r", "values": {"logspace": [0, 2, 3]}}}
    cfg = parse_config(raw)
    np.testing.assert_allclose(cfg.sweep["values"], [1, 10, 100])
    sub = set_path(cfg.raw, "problem.r", np.float64(10.0))
    assert sub["problem"]["r"] == 10.0 and type(sub["problem"]["r"]) is float
    assert cfg.raw["problem"]["r"] == 1
    assert set_path({}, "solver.sigma", 1 + 2j)["solver"]["sigma"] == [1.0, 2.0]


def test_build_rational_problem():
    raw = {"kind": "rational", "coeffs": [[[1.0]], [[-1.0]]],
           "terms": [{"pole": 2.0, "C": [[3.0]], "form": "lam/(lam-s)"}]}
    p = build_problem(raw)
    assert evaluate(p, 4.0)[0, 0] == pytest.approx(1 - 4 + 3 * 4 / 2)


def test_build_counterexample_complex_coefficients():
    p = build_problem({"kind": "counterexample", "f": [[0, 1]]})
    z = 0.5
    assert evaluate(p, z)[0, 1] == pytest.approx((z - 1) * (z - 2) * 1j)


def test_load_config_errors(tmp_path):
    f = tmp_path / "empty.yaml"
    f.write_text("")
    with pytest.raises(ConfigError, match="empty"):
        load_config(f)
    f.write_text("problem: [unclosed")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(f)
    f.write_text("problem: {kind: circle_quadratic, r: 2}\nsolver: {sigma: [0.1, 0.2]}\n")
    assert load_config(f).solver["sigma"] == 0.1 + 0.2j
