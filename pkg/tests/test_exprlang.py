import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from transportkit import dual as dm
from transportkit.exprlang import (
    ParseError,
    UnboundVariableError,
    compile_expr,
    eval_dual,
    evaluate,
    free_variables,
    parse,
    to_string,
)


def test_basic_parse_and_evaluate():
    assert evaluate(parse("sin(x)^2 + cos(x)^2"), {"x": 0.3}) == pytest.approx(1.0, abs=1e-15)
    assert evaluate(parse("x^3"), {"x": 2.0}) == 8.0
    assert evaluate(parse("exp(-(x^2+y^2))"), {"x": 0.0, "y": 0.0}) == 1.0


def test_precedence():
    assert evaluate(parse("2^3^2"), {}) == 512.0  # right associative
    assert evaluate(parse("-2^2"), {}) == -4.0  # power binds tighter than unary minus
    assert evaluate(parse("1 - 2 - 3"), {}) == -4.0
    assert evaluate(parse("2 * 3 + 4 / 2"), {}) == 8.0
    assert evaluate(parse("min(3, max(1, 2))"), {}) == 2.0
    assert evaluate(parse("2*-3"), {}) == -6.0


def test_syntax_error_offset():
    with pytest.raises(ParseError) as err:
        parse("2 +* x")
    assert err.value.offset == 3


def test_unknown_function_and_unbound():
    with pytest.raises(ParseError):
        parse("foo(x)")
    with pytest.raises(UnboundVariableError):
        evaluate(parse("x + y"), {"x": 1.0})
    with pytest.raises(UnboundVariableError):
        compile_expr("x + w", ["x", "y"])


def test_domain_errors_and_ieee_division():
    with pytest.raises(dm.DomainError):
        evaluate(parse("log(x)"), {"x": -1.0})
    with pytest.raises(dm.DomainError):
        evaluate(parse("sqrt(x)"), {"x": -1.0})
    assert evaluate(parse("1/x"), {"x": 0.0}) == np.inf


def test_dual_evaluation():
    (x,) = dm.seed([2.0])
    assert dm.partials(eval_dual(parse("x^3"), {"x": x}), x.tag, 1)[0] == 12.0
    (x,) = dm.seed([0.0])
    assert dm.partials(eval_dual(parse("sin(x)"), {"x": x}), x.tag, 1)[0] == 1.0


def test_bump_guard():
    e = parse("if_abs_lt(x, 1, exp(-1/(1-x^2)), 0)")
    xs = np.array([-2.0, -0.5, 0.0, 0.99, 1.0, 3.0])
    vals = evaluate(e, {"x": xs})
    expect = np.array([np.exp(-1 / (1 - v * v)) if abs(v) < 1 else 0.0 for v in xs])
    np.testing.assert_allclose(vals, expect, rtol=1e-14)


def test_compile_expr_param():
    f = compile_expr("t*x + y", ["x", "y"])
    assert f(2.0, [3.0, 1.0]) == 7.0
    assert f.depends_on_param
    assert not compile_expr("x", ["x"]).depends_on_param
    assert free_variables(parse("a*b + sin(c)")) == {"a", "b", "c"}


# random expression corpus ----------------------------------------------------------

_leaf = st.one_of(st.sampled_from(["x", "y"]), st.floats(0.1, 3.0).map(lambda v: repr(round(v, 3))))


def _extend(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "tanh", "exp"]), children).map(lambda t: f"{t[0]}(0.3*{t[1]})"),
        children.map(lambda c: f"-{c}"),
        children.map(lambda c: f"({c})^2"),
    )


exprs = st.recursive(_leaf, _extend, max_leaves=8)


@given(exprs)
def test_round_trip(text):
    e = parse(text)
    assert parse(to_string(e)) == e


@given(exprs, st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_dual_matches_central_difference(text, x0, y0):
    e = parse(text)
    x, y = dm.seed([x0, y0])
    out = eval_dual(e, {"x": x, "y": y})
    dx = dm.partials(out, x.tag, 2)[0]
    h = 1e-5
    fd = (evaluate(e, {"x": x0 + h, "y": y0}) - evaluate(e, {"x": x0 - h, "y": y0})) / (2 * h)
    scale = max(1.0, abs(dx))
    assert abs(dx - fd) <= 1e-7 * scale


@given(exprs, exprs, st.floats(-1.0, 1.0))
def test_dual_product_rule(a, b, x0):
    ea, eb = parse(a), parse(b)
    prod = parse(f"({a})*({b})")
    (x,) = dm.seed([x0])
    env = {"x": x, "y": 0.4}
    fa, fb, fp = (eval_dual(e, env) for e in (ea, eb, prod))
    da, db, dp = (dm.partials(v, x.tag, 1)[0] for v in (fa, fb, fp))
    va, vb = dm.primal(fa, x.tag), dm.primal(fb, x.tag)
    expect = va * db + da * vb
    assert dp == pytest.approx(expect, rel=1e-12, abs=1e-12 * max(1.0, abs(va * db), abs(da * vb)))
