import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from transportkit.calculus import DifferentiableMap, KFormFamily, TimeDepVectorField, pullback
from transportkit.domains import CellComplex, make_box, make_cut_sheet, make_wave_slab
from transportkit.flow import (
    BLOWUP,
    LEFT_DOMAIN,
    OK,
    AdvectionError,
    FlowMap,
    advect_complex,
    pullback_along_flow,
    semigroup_residual,
)
from transportkit.scenarios import lorenz_field
from transportkit.scenarios.wave import SandwichWave


def field(*fns, time_dependent=False):
    return TimeDepVectorField(list(fns), time_dependent)


def test_constant_field_exact():
    F = FlowMap(field(lambda t, q: 2.0 + 0 * q[0], lambda t, q: -1.0 + 0 * q[0]))
    q = np.array([[0.3, 1.0], [0.2, -4.0]])
    res = F.flow(0.0, 1.5, q)
    np.testing.assert_allclose(res.endpoint, q + 1.5 * np.array([[2.0], [-1.0]]), atol=1e-14)
    assert np.all(res.status == OK)


def test_identity_at_equal_times():
    F = FlowMap(lorenz_field())
    q = np.array([1.0, 2.0, 3.0])
    res = F.flow_point(0.7, 0.7, q, want_jacobian=True)
    np.testing.assert_array_equal(res.endpoint, q)
    np.testing.assert_array_equal(res.jacobian, np.eye(3))


def test_time_dependent_scalar():
    F = FlowMap(field(lambda t, q: t + 0 * q[0], time_dependent=True))
    res = F.flow_point(0.0, 2.0, [1.0])
    assert res.endpoint[0] == pytest.approx(3.0, abs=1e-9)


def test_lorenz_against_scipy():
    F = FlowMap(lorenz_field())
    q = np.array([1.0, 1.0, 1.0])
    ref = solve_ivp(lambda t, y: [10 * (y[1] - y[0]), y[0] * (28 - y[2]) - y[1], y[0] * y[1] - 8 / 3 * y[2]],
                    (0, 0.5), q, method="DOP853", rtol=1e-13, atol=1e-13).y[:, -1]
    np.testing.assert_allclose(F.flow_point(0.0, 0.5, q).endpoint, ref, rtol=1e-8)


def test_wave_field_blows_up_past_admissible_range():
    W = SandwichWave()
    F = FlowMap(W.closed_flow().generator())
    # t - x = 0.5, so the flow exists only for r < 2
    res = F.flow_point(0.0, 2.1, [0.5, 0.0, 1.0, 1.0])
    assert res.status in (BLOWUP, LEFT_DOMAIN)
    assert res.jacobian is None
    assert F.flow_point(0.0, 1.9, [0.5, 0.0, 1.0, 1.0]).status == OK


def test_closed_form_flow_outside_range():
    flow = SandwichWave().closed_flow()
    res = flow.flow(0.0, 2.1, np.array([[0.5], [0.0], [1.0], [1.0]]))
    assert res.status[0] == LEFT_DOMAIN


def test_semigroup_examples():
    F = FlowMap(lorenz_field())
    q = np.array([1.0, 1.0, 1.0])
    assert semigroup_residual(F, 0.3, 0.3, 0.3, q) == 0.0
    assert semigroup_residual(F, 0.0, 0.1, 0.25, q) <= 1e-7
    C = FlowMap(field(lambda t, q: 0.5 + 0 * q[0], lambda t, q: 3.0 + 0 * q[0]))
    assert semigroup_residual(C, 0.0, 0.4, 1.1, np.array([0.2, 0.1])) <= 1e-13


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_semigroup_property(t1, t2, t3):
    F = FlowMap(field(lambda t, q: -q[1] + np.sin(t), lambda t, q: q[0] - 0.1 * q[1] ** 3, time_dependent=True))
    q = np.array([[0.5, -1.0, 2.0], [1.0, 0.2, -0.5]])
    assert semigroup_residual(F, t1, t2, t3, q) <= 1e-8


def test_jacobian_matches_differences():
    F = FlowMap(lorenz_field())
    q = np.array([1.0, 2.0, 3.0])
    J = F.flow_point(0.0, 0.2, q, want_jacobian=True).jacobian
    h = 1e-6
    fd = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd[:, j] = (F.flow_point(0.0, 0.2, q + e).endpoint - F.flow_point(0.0, 0.2, q - e).endpoint) / (2 * h)
    np.testing.assert_allclose(J, fd, rtol=1e-5, atol=1e-6)


def test_linear_field_jacobian_is_expm():
    A = np.array([[0.0, -1.0, 0.3], [1.0, 0.1, 0.0], [0.2, 0.0, -0.5]])
    F = FlowMap(field(*[(lambda row: (lambda t, q: row[0] * q[0] + row[1] * q[1] + row[2] * q[2]))(A[i]) for i in range(3)]))
    res = F.flow_point(0.0, 1.3, [1.0, -1.0, 0.5], want_jacobian=True)
    np.testing.assert_allclose(res.jacobian, expm(1.3 * A), rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(res.endpoint, expm(1.3 * A) @ [1.0, -1.0, 0.5], rtol=1e-8)


def test_rotation_preserves_area():
    F = FlowMap(field(lambda t, q: -q[1], lambda t, q: q[0]))
    res = F.flow(0.0, 2.0, np.random.default_rng(0).normal(size=(2, 8)), "full")
    dets = np.linalg.det(np.moveaxis(res.jacobian, -1, 0))
    np.testing.assert_allclose(dets, 1.0, atol=1e-9)


def test_advect_examples():
    S = CellComplex([make_box([(0, 1), (0, 1)])])
    c = np.array([0.5, -2.0])
    F = FlowMap(field(lambda t, q: c[0] + 0 * q[0], lambda t, q: c[1] + 0 * q[0]))
    p = np.random.default_rng(1).uniform(size=(2, 10))
    same = advect_complex(F, S, 0.0).cells[0].evaluate(p)
    np.testing.assert_allclose(same, S.cells[0].evaluate(p), atol=0)
    moved = advect_complex(F, S, 0.7).cells[0]
    np.testing.assert_allclose(moved.evaluate(p), p + 0.7 * c[:, None], atol=1e-14)
    assert moved.orientation_sign == 1


def test_advect_forward_and_back():
    F = FlowMap(lorenz_field())
    S = make_cut_sheet(1.0)
    p = np.array([[0.3, 0.8], [0.1, -0.4], [0.5, -0.9]])
    fwd = advect_complex(F, S, 0.15)
    x = fwd.cells[0].evaluate(p)
    back = F.flow(0.15, 0.0, x).endpoint
    np.testing.assert_allclose(back, S.cells[0].evaluate(p), atol=1e-8)


def test_advection_error_names_cell():
    F = FlowMap(field(lambda t, q: q[0] ** 2))
    S = CellComplex([make_box([(1.0, 3.0)])])
    cell = advect_complex(F, S, 0.9).cells[0]
    with pytest.raises(AdvectionError, match="box"):
        cell.evaluate(np.array([[2.5]]))


def test_wave_advection_matches_closed_form():
    W = SandwichWave()
    S0 = make_wave_slab(1.0, 1.0, 1.0)
    rng = np.random.default_rng(2)
    cell = S0.cells[0]
    p = cell.sample_parameters(12, rng)
    p = p[:, np.all(np.abs(p) < 5, axis=0)]
    ode = advect_complex(FlowMap(W.closed_flow().generator()), S0, 0.4).cells[0].evaluate(p)
    exact = np.array(W.flow_map(0.4, list(cell.evaluate(p))))
    np.testing.assert_allclose(ode, exact, atol=1e-6, rtol=1e-6)


def test_pullback_volume_under_lorenz():
    F = FlowMap(lorenz_field())
    S = make_cut_sheet(1.0)
    cell = S.cells[0]
    vol = KFormFamily(3, 3, {(0, 1, 2): 1.0}, False)
    p = cell.sample_parameters(10, np.random.default_rng(3))
    p = p[:, np.all(np.abs(p) < 3, axis=0)]
    base = pullback_along_flow(F, vol, 0.0, cell).coefficients(0.0, list(p))
    for t in (0.05, 0.2):
        got = pullback_along_flow(F, vol, t, cell).coefficients(0.0, list(p))
        np.testing.assert_allclose(got, math.exp(-41 * t / 3) * base, rtol=1e-6)


def test_wave_flow_preserves_alpha():
    W = SandwichWave()
    a = W.alpha()
    rng = np.random.default_rng(4)
    N = 20
    u = rng.uniform(0.1, 1.6, N)
    x = rng.uniform(-0.5, 0.5, N)
    q = np.array([x + u, x, rng.uniform(0.5, 2.0, N) * rng.choice([-1, 1], N), rng.uniform(0.5, 2.0, N)])
    phi = DifferentiableMap(lambda qq: W.flow_map(0.3, qq), 4, 4)
    got = pullback(phi, a).coefficients(0.0, list(q))
    ref = a.coefficients(0.0, list(q))
    assert np.max(np.abs(got - ref)) <= 1e-6 * max(1.0, np.max(np.abs(ref)))


def test_wave_closed_form_semigroup():
    flow = SandwichWave().closed_flow()
    q = np.array([[0.6, 0.9], [-0.2, 0.1], [1.2, -0.7], [0.8, 1.5]])
    assert semigroup_residual(flow, 0.0, 0.2, 0.45, q) <= 1e-9
