import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from transportkit import dual as dm

finite = st.floats(-3, 3, allow_nan=False)


def d(f, x0):
    (x,) = dm.seed([x0])
    y = f(x)
    return dm.primal(y, x.tag), dm.partials(y, x.tag, 1)[0]


def test_elementary_derivatives():
    assert d(lambda x: x ** 3, 2.0) == (8.0, 12.0)
    assert d(np.sin, 0.0)[1] == 1.0
    assert d(np.exp, 1.0)[1] == pytest.approx(np.e, rel=1e-15)
    assert d(np.log, 2.0)[1] == pytest.approx(0.5, rel=1e-15)
    assert d(np.sqrt, 4.0)[1] == pytest.approx(0.25, rel=1e-15)
    assert d(np.tanh, 0.3)[1] == pytest.approx(1 - np.tanh(0.3) ** 2, rel=1e-14)
    assert d(np.expm1, 0.2)[1] == pytest.approx(np.exp(0.2), rel=1e-15)


def test_nested_layers_give_second_derivatives():
    (x,) = dm.seed([0.7])
    (y,) = dm.seed([x])
    f = np.sin(y) * y
    inner = dm.partials(f, y.tag, 1)[0]  # first derivative, still a Dual in x
    second = dm.partials(inner, x.tag, 1)[0]
    assert second == pytest.approx(2 * np.cos(0.7) - 0.7 * np.sin(0.7), rel=1e-14)


def test_array_values_and_where():
    x = np.linspace(-1, 1, 5)
    (dx,) = dm.seed([x])
    y = dm.where(x > 0, dx * dx, -dx)
    np.testing.assert_array_equal(dm.partials(y, dx.tag, 1)[0], np.where(x > 0, 2 * x, -1.0))


@given(finite, finite, finite)
def test_product_and_quotient_rules(a, b, x0):
    f = lambda x: np.sin(a * x) + b  # noqa: E731
    g = lambda x: np.exp(b * x) + 2.0  # noqa: E731
    _, fp = d(f, x0)
    _, gp = d(g, x0)
    _, prod = d(lambda x: f(x) * g(x), x0)
    _, quot = d(lambda x: f(x) / g(x), x0)
    fv, gv = f(x0), g(x0)
    assert prod == pytest.approx(fp * gv + fv * gp, rel=1e-12, abs=1e-12)
    assert quot == pytest.approx((fp * gv - fv * gp) / gv ** 2, rel=1e-12, abs=1e-12)


@given(st.floats(0.1, 3.0), st.floats(-2.0, 2.0))
def test_power_with_dual_exponent(x0, p0):
    x, p = dm.seed([x0, p0])
    y = x ** p
    dx, dp = dm.partials(y, x.tag, 2)
    assert dx == pytest.approx(p0 * x0 ** (p0 - 1), rel=1e-12)
    assert dp == pytest.approx(x0 ** p0 * np.log(x0), rel=1e-12, abs=1e-15)
