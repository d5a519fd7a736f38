import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from anisostokes import expr
from anisostokes.config import DEFAULTS, ConfigError, load_config, parse_config

ExpressionError = expr.ExpressionError


def test_empty_config_is_the_defaults():
    assert parse_config("").data == DEFAULTS
    assert load_config(None).data == DEFAULTS


def test_unknown_key_reports_path_and_line():
    text = "mesh:\n  dim: 2\n  radius: 3.0\n"
    with pytest.raises(ConfigError, match=r"mesh\.radius \(line 3\): unknown key"):
        parse_config(text)


def test_unknown_section_reports_line():
    with pytest.raises(ConfigError, match=r"solvers \(line 2\)"):
        parse_config("mesh: {dim: 2}\nsolvers: {rtol: 1e-8}\n")


def test_wrong_types_rejected():
    with pytest.raises(ConfigError, match="mesh.dim"):
        parse_config("mesh: {dim: two}")
    with pytest.raises(ConfigError, match="mesh.h"):
        parse_config("mesh: {h: true}")
    with pytest.raises(ConfigError, match="expected a mapping"):
        parse_config("mesh: 3")
    with pytest.raises(ConfigError, match="top level"):
        parse_config("- 1\n- 2\n")


def test_choices_enforced():
    with pytest.raises(ConfigError, match="pressure_mode"):
        parse_config("solver: {pressure_mode: discontinuous}")


def test_malformed_text_reports_line():
    # the parser reports where it noticed the problem
    with pytest.raises(ConfigError, match=r"malformed config at line \d"):
        parse_config("mesh:\n  dim: [2\n")


def test_json_is_accepted_and_merged():
    cfg = parse_config('{"mesh": {"h": 0.125}, "tensor": {"mu": {"1": 2.0}}}')
    assert cfg["mesh"]["h"] == 0.125 and cfg["mesh"]["R"] == DEFAULTS["mesh"]["R"]
    assert cfg["tensor"]["mu"] == {"1": 2.0}


def test_integer_accepted_for_float():
    assert parse_config("mesh: {R: 3}")["mesh"]["R"] == 3


def test_checks_must_be_names():
    with pytest.raises(ConfigError):
        parse_config("checks: [1, 2]")
    assert parse_config("checks: []")["checks"] == []


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.yaml")


# ----------------------------------------------------------- expressions
@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "open('f')", "[x, y]",
                                  "lambda: 1", "x if y else 1", "'abc'", "sin(x, y)",
                                  "sin(x=1)", "q + 1", "exec('1')", "x; y", "(x).__class__"])
def test_injection_rejected(text):
    with pytest.raises(ExpressionError):
        expr.parse(text, 2)


def test_normals_only_in_densities():
    with pytest.raises(ExpressionError):
        expr.parse("nx", 2)
    assert expr.parse("nx + y", 2, normals=True) == sympy.Symbol("nx", real=True) + sympy.Symbol("y", real=True)


def test_z_is_not_a_2d_coordinate():
    with pytest.raises(ExpressionError):
        expr.parse("z", 2)


def test_component_count_checked():
    with pytest.raises(ExpressionError):
        expr.vector(["x"], 2)


@given(a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_evaluation_matches_numpy(a, b):
    f = expr.lambdify(expr.parse("sin(x) * exp(y) + sqrt(x**2 + 1) - pi / 2", 2), 2)
    got = f(np.array([[a, b]]))[0]
    want = np.sin(a) * np.exp(b) + np.sqrt(a * a + 1) - np.pi / 2
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_constant_expression_broadcasts():
    f = expr.lambdify(expr.parse(3, 2), 2)
    assert np.array_equal(f(np.zeros((4, 2))), np.full(4, 3.0))


def test_vector_and_density_fields():
    v = expr.vector_field(["y", "-x"], 2)
    pts = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert np.array_equal(v(pts), [[2.0, -1.0], [-1.0, -3.0]])
    d = expr.density_field(["ny", "-2*nx"], 2)
    nrm = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(d(pts, nrm), [[0.0, -2.0], [1.0, 0.0]])
