import math

import numpy as np
import pytest

from lageom.expr import (
    DomainError,
    ExprSyntaxError,
    UnknownIdentifierError,
    VariableIndexError,
    differentiate,
    eval_grid,
    eval_jet,
    evaluate,
    parse,
    to_string,
)

from conftest import fd_grad

DIMS = (2, 2)
U = np.array([0.4, -0.3, 0.8, 0.2])
SAMPLES = [
    "1 + x1*x2 - y1/(2 + y2^2)",
    "sin(x1)*exp(y2) - cos(x2*y1)",
    "sqrt(2 + x1) * log(3 + y1)",
    "tanh(x1 - y2)^3 / (1 + x2^2)",
    "-(x1 - -y1) * 2^3",
]


def python_value(src, u):
    env = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "log": math.log, "sqrt": math.sqrt, "tanh": math.tanh}
    env.update({"x1": u[0], "x2": u[1], "y1": u[2], "y2": u[3]})
    return eval(src.replace("^", "**"), env)


@pytest.mark.parametrize("src", SAMPLES)
def test_value_matches_python(src):
    assert evaluate(parse(src, DIMS), U) == pytest.approx(python_value(src, U), rel=1e-14)


@pytest.mark.parametrize("src", SAMPLES)
def test_print_parse_round_trip(src):
    e = parse(src, DIMS)
    e2 = parse(to_string(e), DIMS)
    assert e2.root == e.root


@pytest.mark.parametrize("src", SAMPLES)
def test_jet_derivatives_match_fd(src):
    e = parse(src, DIMS)
    J = eval_jet(e, U, 3)
    g1 = fd_grad(lambda p: evaluate(e, p), U)
    assert np.max(np.abs(J.c[1] - g1)) < 1e-8
    g2 = fd_grad(lambda p: eval_jet(e, p, 1).c[1], U)
    assert np.max(np.abs(J.c[2] - g2)) < 1e-7
    g3 = fd_grad(lambda p: eval_jet(e, p, 2).c[2], U)
    assert np.max(np.abs(J.c[3] - g3)) < 1e-6


@pytest.mark.parametrize("src", SAMPLES)
def test_symbolic_derivative_matches_jet(src):
    e = parse(src, DIMS)
    J = eval_jet(e, U, 1)
    for k, (kind, idx) in enumerate([("x", 1), ("x", 2), ("y", 1), ("y", 2)]):
        d = differentiate(e, kind, idx)
        assert evaluate(d, U) == pytest.approx(J.c[1][k], rel=1e-12, abs=1e-12)


def test_precedence_and_unary():
    assert evaluate(parse("2 + 3*4^2", DIMS), U) == 50
    assert evaluate(parse("-2^2", DIMS), U) == -4
    assert evaluate(parse("8/4/2", DIMS), U) == 1


@pytest.mark.parametrize(
    "src, err",
    [
        ("x1 +", ExprSyntaxError),
        ("x1^1.5", ExprSyntaxError),
        ("x1^2^2", ExprSyntaxError),
        ("(x1", ExprSyntaxError),
        ("z1", UnknownIdentifierError),
        ("foo(x1)", UnknownIdentifierError),
        ("x3", VariableIndexError),
        ("y0", VariableIndexError),
    ],
)
def test_parse_errors(src, err):
    with pytest.raises(err):
        parse(src, DIMS)


@pytest.mark.parametrize("src", ["log(x1 - 1)", "sqrt(-1 - y1*y1)", "1/(x1 - x1)"])
def test_domain_errors(src):
    e = parse(src, DIMS)
    with pytest.raises(DomainError):
        eval_jet(e, U, 2)


def test_variables_and_numbers():
    e = parse("x1*y2 + 3", DIMS)
    assert e.variables() == {("x", 1), ("y", 2)}
    assert evaluate(parse(2.5, DIMS), U) == 2.5


def test_shared_subtrees_are_interned_and_evaluate_identically():
    dims = (2, 1)
    a = parse("(x1*y1 + sin(x2)) / (1 + x1*x1) + (x1*y1 + sin(x2))^2", dims)
    b = parse("x1*y1 + sin(x2)", dims)
    assert a.root.left.left is b.root and a.root.right.base is b.root
    u = np.array([0.3, -0.2, 0.7])
    grid = eval_grid([[a, b], [b, a]], u, 3)
    alone = eval_jet(a, u, 3)
    for k in range(4):
        assert np.array_equal(grid[0, 0].c[k], alone.c[k])
        assert np.array_equal(grid[1, 1].c[k], alone.c[k])
