import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crestfield.errors import ParseError
from crestfield.expr import (BinOp, Call, Neg, Num, Var, evaluate, parse_expr, to_text, variables)


def test_trace_expression():
    ast = parse_expr("s11 + s22")
    assert ast == BinOp("+", Var("s11"), Var("s22"))
    assert variables(ast) == {"s11", "s22"}


def test_precedence_and_associativity():
    assert evaluate(parse_expr("2^3^2"), {}) == 2.0 ** 9
    assert evaluate(parse_expr("-2^2"), {}) == -4.0
    assert evaluate(parse_expr("8 / 4 / 2"), {}) == 1.0
    assert evaluate(parse_expr("1 - 2 - 3"), {}) == -4.0
    assert evaluate(parse_expr("2 * 3 + 4 * 5"), {}) == 26.0
    assert evaluate(parse_expr("2^-1"), {}) == 0.5


def test_functions_and_constants():
    env = {"x1": np.array([0.0, math.pi / 2])}
    np.testing.assert_allclose(evaluate(parse_expr("sin(x1) + cos(0)"), env), [1.0, 2.0])
    assert evaluate(parse_expr("max(1, 5, 3) - min(2, -1)"), {}) == 6.0
    assert evaluate(parse_expr("pow(2, 10)"), {}) == 1024.0
    assert evaluate(parse_expr("pi"), {}) == math.pi


@pytest.mark.parametrize("text,offset", [("abs(", 4), ("1 +", 3), ("(1", 2), ("2 $ 3", 2), ("", 0)])
def test_syntax_errors_have_offsets(text, offset):
    with pytest.raises(ParseError) as err:
        parse_expr(text)
    assert err.value.offset == offset


def test_error_expected_set():
    with pytest.raises(ParseError) as err:
        parse_expr("abs(")
    assert "identifier" in err.value.expected and "number" in err.value.expected


def test_offsets_are_bytes():
    with pytest.raises(ParseError) as err:
        parse_expr("1 + é")
    assert err.value.offset == 4


@pytest.mark.parametrize("text", ["foo + 1", "pow(1)", "sin(1, 2)", "max(1)"])
def test_unknown_identifier_and_arity(text):
    with pytest.raises(ParseError):
        parse_expr(text)


_LEAVES = st.one_of(
    st.floats(min_value=0, max_value=1e6, allow_nan=False).map(Num),
    st.sampled_from(["x1", "u2", "g12", "s11", "t", "pi"]).map(Var),
)


def _extend(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/", "^"]), children, children),
        st.builds(lambda f, a: Call(f, (a,)), st.sampled_from(["abs", "sqrt", "sin", "cos", "exp"]), children),
        st.builds(lambda f, a, b: Call(f, (a, b)), st.sampled_from(["min", "max", "pow"]), children, children),
    )


@settings(max_examples=1000, deadline=None)
@given(st.recursive(_LEAVES, _extend, max_leaves=12))
def test_pretty_print_round_trip(ast):
    text = to_text(ast)
    again = parse_expr(text)
    assert to_text(again) == text
    assert again == parse_expr(to_text(again))
