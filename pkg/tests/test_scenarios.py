import math

import numpy as np
import pytest
from scipy import special

from transportkit.calculus import exterior_derivative, interior_product
from transportkit.domains import CellComplex, DomainSpecError, make_box
from transportkit.flow import semigroup_residual
from transportkit.quadrature import DivergenceError, integrate_form
from transportkit.scenarios import (
    BUILTIN,
    PreflightError,
    SandwichWave,
    build,
    lorenz_sheet,
    pyramid_gaussian,
    reynolds_custom,
    reynolds_translate,
    sandwich_wave,
    single_pyramid_reference,
)
from transportkit.transport import lhs_time_derivative

PI32_HALF = math.pi ** 1.5 / 2


def test_reynolds_initial_integral():
    sc = reynolds_translate()
    assert sc.integral(0.0, 1e-9).value == pytest.approx(PI32_HALF, abs=1e-7)
    assert PI32_HALF == pytest.approx(2.7841639, abs=1e-7)
    # independent oracle: the half-line factor by scipy's erf
    assert sc.exact["integral"](0.7) == pytest.approx(math.pi * math.sqrt(math.pi) / 2 * (1 + special.erf(0.7)))


def test_reynolds_rate_at_zero():
    sc = reynolds_translate()
    assert lhs_time_derivative(sc, 0.0) == pytest.approx(math.pi, abs=1e-4)


def test_reynolds_custom_reproduces_translate():
    a = reynolds_translate(t_grid=[0.0, 0.5])
    b = reynolds_custom({"rho": "exp(-(x^2+y^2+z^2))", "v": "(1,0,0)"}, t_grid=[0.0, 0.5])
    for t in (0.0, 0.5):
        assert b.integral(t).value == pytest.approx(a.integral(t).value, abs=2e-6)
        assert b.integral(t).value == pytest.approx(a.exact["integral"](t), abs=2e-6)


SPACETIME_FIXTURES = [
    ({"rho": "exp(-(x^2+y^2+z^2))", "v": "(1, 0, 0)"}, None, 1e-6),
    ({"rho": "1 + x*y + z^2", "v": "(-y, x, 0)"}, [(0, 1), (0, 1), (0, 1)], 1e-7),
    ({"rho": "exp(-x^2)*(2+sin(y))", "v": "(0.5*z, 0, 0.1)"}, [(-1, 1), (0, 1), (0, 2)], 1e-7),
]


@pytest.mark.parametrize("cfg,box,tol", SPACETIME_FIXTURES)
def test_spacetime_view_matches_parameter_view(cfg, box, tol):
    grid = [0.0, 0.3, 0.6]
    base = dict(cfg)
    if box is not None:
        base["domain"] = CellComplex([make_box(box)])
    par = reynolds_custom(dict(base, spacetime=False), tol=tol, t_grid=grid)
    spc = reynolds_custom(dict(base, spacetime=True), tol=tol, t_grid=grid)
    assert spc.n == 4 and spc.S0.n == 4
    for t in grid:
        assert abs(par.integral(t).value - spc.integral(t).value) <= 2 * (2 * tol)


def test_constant_density_on_half_space_diverges():
    sc = reynolds_custom({"rho": "1", "v": "(1,0,0)"})
    with pytest.raises(DivergenceError):
        sc.integral(0.0)


def test_reynolds_custom_rejects_bad_velocity():
    with pytest.raises(DomainSpecError):
        reynolds_custom({"v": "(1, 0)"})


def test_lorenz_volume_decay():
    sc = lorenz_sheet(weight="volume", t_grid=[0.0, 0.2])
    I0 = sc.integral(0.0, 1e-10).value
    assert I0 == pytest.approx(2.0, rel=1e-12)
    ratio = sc.integral(0.2, 1e-8).value / I0
    assert ratio == pytest.approx(math.exp(-41 * 0.2 / 3), rel=1e-3)


def test_lorenz_gaussian_initial_integral_is_direct():
    sc = lorenz_sheet(weight="gaussian")
    direct = integrate_form(sc.form, sc.S0, 0.0, sc.tol).value
    assert sc.integral(0.0).value == direct
    assert np.isfinite(direct) and direct > 0


def test_lorenz_rejects_non_positive_height():
    with pytest.raises(DomainSpecError):
        lorenz_sheet(H=0.0)
    with pytest.raises(DomainSpecError):
        lorenz_sheet(H=-1.0)


def test_lorenz_fixture_metadata():
    sc = lorenz_sheet()
    assert sc.metadata["sigma"] == 10.0 and sc.metadata["r"] == 28.0
    assert sc.metadata["divergence"] == pytest.approx(-41 / 3)


@pytest.mark.parametrize("kw", [dict(sigma=2.0, u0=1.0), dict(sigma=1.0, u0=0.4), dict(a0=0.0), dict(b0=-1.0)])
def test_wave_parameter_constraints(kw):
    with pytest.raises(DomainSpecError):
        sandwich_wave(**kw)


def test_wave_rejects_inadmissible_grid():
    with pytest.raises(DomainSpecError):
        sandwich_wave(r_grid=[0.0, 2.0])


def test_wave_metadata_flags_reading():
    sc = sandwich_wave()
    assert "interpretive" in sc.metadata["beta_r"]
    assert sc.metadata["r_max"] == pytest.approx(2.0)


def _wave_points(rng, N=50):
    u = rng.uniform(0.05, 1.8, N)
    x = rng.uniform(-1.0, 1.0, N)
    return np.array([x + u, x, rng.uniform(0.3, 2.5, N) * rng.choice([-1, 1], N),
                     rng.uniform(0.3, 2.5, N) * rng.choice([-1, 1], N)])


def test_wave_X_dot_alpha_and_d_alpha_vanish():
    sc = sandwich_wave()
    q = _wave_points(np.random.default_rng(0))
    xa = interior_product(sc.field, sc.form).coefficients(0.0, list(q))
    da = exterior_derivative(sc.form).coefficients(0.0, list(q))
    assert np.max(np.abs(xa)) <= 1e-8
    assert np.max(np.abs(da)) <= 1e-8


def test_wave_small_u_series_branch():
    W = SandwichWave()
    # the series and direct branches must agree across the switch at |u| = 1e-6
    for u in (5e-7, 1e-4):
        q = [np.array([u + 0.1]), np.array([0.1]), np.array([0.7]), np.array([-0.4])]
        got = np.array(W.flow_map(0.3, q)).ravel()
        D = 1 - u * 0.3
        # outside the wave profile the flow is the flat-space formula
        assert got[2] == pytest.approx(0.7 / D, rel=1e-12)
        assert np.all(np.isfinite(got))


def test_wave_closed_form_semigroup_random():
    flow = SandwichWave().closed_flow()
    rng = np.random.default_rng(5)
    for _ in range(10):
        q = _wave_points(rng, 8)
        # u <= 1.8 and |r_i - r_j| <= 0.5 keep every composed flow admissible
        r1, r2, r3 = rng.uniform(-0.25, 0.25, 3)
        assert semigroup_residual(flow, r1, r2, r3, q) <= 1e-9 * max(1.0, np.abs(q).max())


def test_wave_mass_initial_finite():
    sc = sandwich_wave()
    M0 = sc.integral(0.0)
    assert M0.converged and M0.value > 0


def test_pyramid_radius_zero_matches_slicing_oracle():
    rep = pyramid_gaussian(1.0, 0).run(1e-10)
    assert rep.value == pytest.approx(single_pyramid_reference(1.0), abs=1e-10)
    assert len(rep.series) == 1


def test_pyramid_monotone_and_tail():
    vals = [pyramid_gaussian(1.0, r).run(1e-9) for r in (0, 1, 2, 3)]
    assert all(b.value > a.value for a, b in zip(vals, vals[1:]))
    assert abs(vals[3].value - vals[2].value) < vals[2].tail_bound
    inf = pyramid_gaussian(1.0, None).run(1e-8)
    assert inf.converged
    assert inf.value == pytest.approx(vals[3].value, abs=1e-7)


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_builtin_preflight(name):
    sc = build(name)
    rep = sc.preflight()
    assert rep["ok"] and np.isfinite(rep["integral_0"])


def test_preflight_detects_missing_flow():
    sc = sandwich_wave()
    sc.t_grid = [1.999]
    sc.h = 0.01
    with pytest.raises(PreflightError):
        sc.preflight(check_integral=False)


def test_build_unknown():
    with pytest.raises(KeyError):
        build("nope")
