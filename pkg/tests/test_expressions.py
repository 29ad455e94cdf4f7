import math

import pytest
from hypothesis import given, settings, strategies as st

from equihol import expressions as ex
from equihol.errors import ExpressionNameError, ExpressionSyntaxError

VARS = ("x1", "x2", "t")


def ev(text, **env):
    return ex.evaluate(ex.parse(text, VARS), env)


def test_arithmetic_and_precedence():
    assert ev("1 + 2*3") == 7
    assert ev("(1 + 2)*3") == 9
    assert ev("2^3") == 8
    with pytest.raises(ExpressionSyntaxError):
        ex.parse("2^3^1", VARS)  # one exponent per factor under this grammar
    assert ev("6/3/2") == 1.0  # left associative
    assert ev("1 - 2 - 3") == -4
    assert ev("-2^2") == 4  # unary minus binds inside the power under this grammar
    assert ev("-(2^2)") == -4


def test_functions_and_pi():
    assert ev("sin(pi/2)") == pytest.approx(1.0)
    assert ev("cos(0)") == 1.0
    assert ev("exp(1)") == pytest.approx(math.e)
    assert ev("tanh(0)") == 0.0
    assert ev("sin(x1)^2 + cos(x1)^2", x1=0.37) == pytest.approx(1.0)


def test_variables_resolve():
    assert ev("0.3*x1 - x2/2", x1=2.0, x2=4.0) == pytest.approx(-1.4)
    assert ev("t*x1", t=3.0, x1=0.5) == 1.5


def test_unknown_name_has_position():
    with pytest.raises(ExpressionNameError) as err:
        ex.parse("x1 + bogus", VARS)
    assert err.value.line == 1
    assert err.value.column == 6


def test_unknown_function_rejected():
    with pytest.raises(ExpressionNameError):
        ex.parse("log(x1)", VARS)


def test_unmatched_paren_reports_opening_column():
    with pytest.raises(ExpressionSyntaxError) as err:
        ex.parse("sin(x1", VARS)
    assert err.value.column == 4  # the opening parenthesis


def test_fractional_exponent_rejected():
    with pytest.raises(ExpressionSyntaxError):
        ex.parse("x1^0.5", VARS)
    with pytest.raises(ExpressionSyntaxError):
        ex.parse("x1^-1", VARS)


def test_trailing_garbage_rejected():
    with pytest.raises(ExpressionSyntaxError):
        ex.parse("x1 x2", VARS)


def test_print_parse_round_trip_samples():
    for text in (
        "0.3*x1 - sin(x2)^2",
        "-(x1 + 1)^4/3",
        "exp(-0.5)*x1 + pi",
        "((zmode + 1)^3 - zmode^3)/3",
    ):
        node = ex.parse(text, VARS + ("zmode",))
        printed = ex.to_source(node)
        again = ex.parse(printed, VARS + ("zmode",))
        assert again == node, printed


# Random expression ASTs to exercise printer/parser agreement.
_leaf = st.one_of(
    st.floats(min_value=0.0, max_value=9.5, allow_nan=False).map(lambda v: ex.Num(round(v, 3))),
    st.sampled_from(VARS).map(ex.Var),
)


def _combine(children):
    ops = st.sampled_from(["+", "-", "*", "/"])
    return st.one_of(
        st.tuples(ops, children, children).map(lambda t: ex.BinOp(t[0], t[1], t[2])),
        children.map(lambda c: ex.Neg(c)),
        st.tuples(children, st.integers(min_value=0, max_value=4)).map(
            lambda t: ex.Pow(t[0], t[1])
        ),
        st.tuples(st.sampled_from(sorted(ex.FUNCTIONS)), children).map(
            lambda t: ex.Call(t[0], (t[1],))
        ),
    )


@settings(max_examples=80, deadline=None)
@given(st.recursive(_leaf, _combine, max_leaves=12))
def test_round_trip_random_ast(node):
    printed = ex.to_source(node)
    assert ex.parse(printed, VARS) == node
