import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkmc import expr
from fkmc.errors import ExpressionSyntaxError, UnknownIdentifierError, VariableDimensionError


def ev(text, x=(0.0,), t=0.0, d=1):
    return expr.evaluate(expr.parse(text, d), np.array(x, dtype=float), t)


def test_parse_and_evaluate_linear_with_exp():
    assert ev("2*x1 + exp(-t)", [3.0], 0.0) == 7.0


def test_unbalanced_parenthesis_position():
    with pytest.raises(ExpressionSyntaxError) as info:
        expr.parse("sin(", 1)
    assert info.value.position == 4


def test_variable_beyond_dimension():
    with pytest.raises(VariableDimensionError):
        expr.parse("x2", 1)
    assert ev("x2", [1.0, 5.0], d=2) == 5.0


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        expr.parse("foo(x1)", 1)
    with pytest.raises(UnknownIdentifierError):
        expr.parse("y", 1)


@pytest.mark.parametrize("text", ["", "  ", "1 +", "(1", "1 2", "2 ** 3", "exp x1", "1 $ 2"])
def test_syntax_errors(text):
    with pytest.raises(ExpressionSyntaxError):
        expr.parse(text, 1)


def test_power_square():
    assert ev("x1^2", [1.5]) == 2.25


def test_exp_of_time():
    assert abs(ev("exp(t)", [0.0], 1.0) - math.e) < 1e-6


def test_division_by_zero_is_infinite():
    assert ev("1/x1", [0.0]) == math.inf


def test_negative_base_fractional_power_is_nan():
    assert math.isnan(ev("x1^0.5", [-1.0]))


@pytest.mark.parametrize("text,value", [("2+3*4", 14.0), ("2^3^2", 512.0), ("-2^2", -4.0),
                                        ("(2+3)*4", 20.0), ("2*-3", -6.0), ("8/4/2", 1.0),
                                        ("1-2-3", -4.0), ("2^-1", 0.5), ("+3", 3.0),
                                        ("1.5e2", 150.0), (".5", 0.5)])
def test_precedence(text, value):
    assert ev(text) == value


def test_functions():
    x = np.array([0.3])
    for name, fn in expr.FUNCTIONS.items():
        assert expr.evaluate(expr.parse(f"{name}(x1)"), x) == fn(0.3)


def test_vectorised_evaluation_matches_pointwise():
    node = expr.parse("sin(x1)*x2 + t^2", 2)
    pts = np.random.default_rng(1).standard_normal((2, 50))
    many = expr.evaluate(node, pts, 0.7)
    for i in range(50):
        assert many[i] == expr.evaluate(node, pts[:, i], 0.7)


def test_evaluation_repeatable():
    node = expr.parse("exp(-x1^2/2)/sqrt(2*3.141592653589793)")
    a = expr.evaluate(node, np.array([0.37]))
    b = expr.evaluate(node, np.array([0.37]))
    assert a == b


def test_variables_and_constant():
    node = expr.parse("x1*t + 3", 2)
    assert expr.variables(node) == {"x1", "t"}
    assert expr.depends_on(node, "t")
    assert not expr.depends_on(node, "x2")
    assert expr.is_constant(expr.parse("2*exp(1)"))


def test_derivative_of_square():
    d = expr.differentiate(expr.parse("x1^2"), "x1")
    assert expr.evaluate(d, np.array([1.5])) == 3.0


def test_derivative_of_constant_is_zero():
    d = expr.differentiate(expr.parse("3.5*exp(2)"), "x1")
    assert expr.is_constant(d)
    assert expr.evaluate(d, np.array([0.1])) == 0.0


def test_derivative_of_exp_against_fd():
    node = expr.parse("exp(2*x1)")
    d = expr.evaluate(expr.differentiate(node, "x1"), np.array([0.3]))
    h = 1e-5
    fd = (expr.evaluate(node, np.array([0.3 + h])) - expr.evaluate(node, np.array([0.3 - h]))) / (2 * h)
    assert abs(d - fd) <= 1e-6 * abs(fd)
    assert abs(d - 2 * math.exp(0.6)) < 1e-12


def test_derivative_other_variable():
    d = expr.differentiate(expr.parse("x1*x2^2 + t", 2), "x2")
    assert expr.evaluate(d, np.array([3.0, 2.0]), 0.0) == 12.0


# random smooth expressions in x1, x2 (no singular functions)
LEAVES = st.sampled_from(["x1", "x2", "t", "0.5", "2", "1.25"])


def _combine(children):
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(
        lambda c: f"({c[0]} {c[1]} {c[2]})")
    unary = st.tuples(st.sampled_from(["sin", "cos", "tanh", "exp", "-"]), children).map(
        lambda c: f"{c[0]}({c[1]})" if c[0] != "-" else f"(-{c[1]})")
    power = st.tuples(children, st.sampled_from(["2", "3"])).map(lambda c: f"({c[0]})^{c[1]}")
    quotient = children.map(lambda c: f"({c}) / (2 + x1^2)")
    return binary | unary | power | quotient


SMOOTH = st.recursive(LEAVES, _combine, max_leaves=8)
POINT = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0, 1))


@settings(max_examples=150, deadline=None)
@given(SMOOTH, POINT, st.sampled_from(["x1", "x2"]))
def test_derivative_matches_central_difference(text, point, var):
    node = expr.parse(text, 2)
    x = np.array(point[:2])
    t = point[2]
    val = expr.evaluate(expr.differentiate(node, var), x, t)
    k = int(var[1]) - 1
    h = 1e-5
    xp, xm = x.copy(), x.copy()
    xp[k] += h
    xm[k] -= h
    fd = (expr.evaluate(node, xp, t) - expr.evaluate(node, xm, t)) / (2 * h)
    if not (np.isfinite(val) and np.isfinite(fd)) or abs(fd) > 1e6:
        return
    assert abs(val - fd) <= 1e-5 * (1 + abs(val))


@settings(max_examples=100, deadline=None)
@given(SMOOTH)
def test_print_parse_round_trip(text):
    node = expr.parse(text, 2)
    again = expr.parse(expr.to_string(node), 2)
    pts = np.random.default_rng(5).uniform(-2, 2, (2, 100))
    a = np.broadcast_to(expr.evaluate(node, pts, 0.4), (100,))
    b = np.broadcast_to(expr.evaluate(again, pts, 0.4), (100,))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("text", ["-2^2", "2^3^2", "(-2)^2", "1-(2-3)", "1/(2*3)", "-(-x1)",
                                  "x1^-2", "-1.5e-3*x1"])
def test_round_trip_tricky(text):
    node = expr.parse(text)
    assert ev(expr.to_string(node), [0.7]) == ev(text, [0.7])
