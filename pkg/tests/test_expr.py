import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqlimit.errors import ExpressionError
from cqlimit.expr import (FUNCTIONS, BinOp, Call, Neg, Num, Var, parse_potential, parse_tree, to_text,
                          tokenize)


def test_examples():
    assert parse_potential("x^2/2 + 0.3*x*y")(2, 1) == pytest.approx(2.6)
    assert parse_potential("sin(y)")(0, math.pi / 2) == pytest.approx(1.0)
    with pytest.raises(ExpressionError) as info:
        parse_potential("x +")
    assert info.value.offset == 3


@pytest.mark.parametrize("text,value", [
    ("2^3^2", 512.0),          # right associative
    ("-2^2", -4.0),            # ^ binds tighter than unary minus
    ("8/4/2", 1.0),            # left associative
    ("2 - 3 - 4", -5.0),
    ("1 + 2*3", 7.0),
    ("(1 + 2)*3", 9.0),
    ("2^-1", 0.5),
    ("pi", math.pi),
    ("sqrt(16) + exp(0) + cos(0) + tanh(0)", 6.0),
    ("1.5e1 + .5", 15.5),
])
def test_precedence(text, value):
    assert parse_potential(text)() == pytest.approx(value)


@pytest.mark.parametrize("text,offset,fragment", [
    ("", 0, "empty"),
    ("x * (y", 6, "expected ')'"),
    ("foo(x)", 0, "unknown function"),
    ("z + 1", 0, "unknown identifier"),
    ("sin()", 4, "argument"),
    ("sin(x, y)", 5, "argument"),
    ("sin", 0, "argument list"),
    ("x $ y", 2, "unexpected character"),
    ("1 2", 2, "unexpected"),
])
def test_errors(text, offset, fragment):
    with pytest.raises(ExpressionError) as info:
        parse_potential(text)
    assert info.value.offset == offset
    assert fragment in str(info.value)


def test_offset_counts_bytes():
    with pytest.raises(ExpressionError) as info:
        parse_potential("é")
    assert info.value.offset == 0
    with pytest.raises(ExpressionError) as info:
        parse_potential("x + é")
    assert info.value.offset == 4


def test_tokenize_positions():
    toks = tokenize("x^2 + sin(y)")
    assert [t.text for t in toks][:6] == ["x", "^", "2", "+", "sin", "("]
    assert [t.offset for t in toks][:6] == [0, 1, 2, 4, 6, 9]


def test_variables_and_broadcast():
    e = parse_potential("x^2 + 0*y")
    assert e.variables == {"x", "y"}
    assert parse_potential("3").variables == set()
    X, Y = np.meshgrid(np.arange(3.0), np.arange(4.0), indexing="ij")
    assert parse_potential("2").__call__(X, Y).shape == (3, 4)
    np.testing.assert_array_equal(parse_potential("x + y")(X, Y), X + Y)


def test_division_by_zero_is_not_an_exception():
    assert math.isinf(parse_potential("1/x")(0.0))


leaves = st.one_of(st.floats(0, 10, allow_nan=False).map(Num), st.sampled_from(["x", "y"]).map(Var))
trees = st.recursive(
    leaves,
    lambda sub: st.one_of(
        sub.map(Neg),
        st.tuples(st.sampled_from(sorted(FUNCTIONS)), sub).map(lambda t: Call(*t)),
        st.tuples(st.sampled_from(list("+-*/^")), sub, sub).map(lambda t: BinOp(*t)),
    ),
    max_leaves=12,
)


@settings(max_examples=100, deadline=None)
@given(trees)
def test_round_trip_through_pretty_printer(tree):
    text = to_text(tree)
    assert parse_tree(text) == tree
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-2, 2, 100), rng.uniform(-2, 2, 100)
    a = parse_potential(text)
    b = parse_potential(a.pretty())
    np.testing.assert_allclose(b(x, y), a(x, y), rtol=1e-12, atol=1e-12)
