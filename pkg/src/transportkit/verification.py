"""Seeded self-checks behind ``transportkit verify``.

Every check is a closed-form or cross-method comparison that returns a
:class:`Check`; output depends only on the seed, never on timing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np
from scipy import linalg

from .calculus import (
    DifferentiableMap,
    KFormFamily,
    TimeDepVectorField,
    coordinate_names,
    exterior_derivative,
    interior_product,
    lie_derivative,
    pullback,
    wedge,
)
from .domains import make_box
from .flow import FlowMap, semigroup_residual
from .quadrature import integrate_form
from .scenarios import lorenz_field, lorenz_sheet, reynolds_translate, sandwich_wave
from .transport import check_diff_lemma, classify_invariance, rhs_divergence_form, transport_report

__all__ = ["Check", "SUITES", "run_suite", "random_form", "random_field"]


@dataclass
class Check:
    name: str
    value: float
    limit: float
    passed: bool

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<44} {self.value:.2e}  (limit {self.limit:.0e})"


def _check(name, value, limit) -> Check:
    value = float(value)
    return Check(name, value, limit, bool(np.isfinite(value) and value <= limit))


# -- random fixtures ----------------------------------------------------------------------

_ATOMS = ("sin({a}*{x} + {b}*{y})", "cos({a}*{x} - {b}*{y})", "exp({a}*{x})", "({a}*{x}*{y} + {b})",
          "tanh({a}*{x} + {b})", "({a}*{x}^2 - {b}*{y})")


def _term(rng, coords) -> str:
    atom = _ATOMS[rng.integers(len(_ATOMS))]
    x, y = rng.choice(coords, 2, replace=True)
    a, b = np.round(rng.uniform(-1.5, 1.5, 2), 3)
    return atom.format(a=repr(float(a)), b=repr(float(b)), x=x, y=y)


def random_expression(rng, coords, terms: int = 2) -> str:
    return " + ".join(f"{_term(rng, coords)}*{_term(rng, coords)}" for _ in range(terms))


def random_form(rng, n: int, k: int, time_dependent: bool = False) -> KFormFamily:
    """A k-form on R^n with random smooth exprlang components."""
    coords = list(coordinate_names(n))
    names = coords + (["t"] if time_dependent and "t" not in coords else [])
    comps = {}
    for idx in combinations(range(n), k):
        key = "^".join("d" + coords[i] for i in idx) if k else "1"
        comps[key] = random_expression(rng, names)
    return KFormFamily.from_exprs(n, comps, coords)


def random_field(rng, n: int) -> TimeDepVectorField:
    coords = list(coordinate_names(n))
    return TimeDepVectorField.from_exprs([random_expression(rng, coords, 1) for _ in range(n)], coords)


def _max_coeff(a: KFormFamily, q, t: float = 0.0) -> float:
    if not a.components:
        return 0.0
    return float(np.max(np.abs(a.coefficients(t, list(q)))))


# -- suites -------------------------------------------------------------------------------

def algebra_suite(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    worst = 0.0
    for n, k in ((3, 0), (3, 1), (4, 1), (4, 2)):
        a = random_form(rng, n, k)
        q = rng.normal(size=(n, 40))
        worst = max(worst, _max_coeff(exterior_derivative(exterior_derivative(a)), q))
    out.append(_check("algebra/d_of_d_vanishes", worst, 1e-10))

    a = random_form(rng, 4, 3)
    q = rng.normal(size=(4, 40))
    V = [rng.normal(size=(4, 40)) for _ in range(3)]
    base = a(0.0, q, V)
    swapped = a(0.0, q, [V[1], V[0], V[2]])
    rotated = a(0.0, q, [V[1], V[2], V[0]])
    scale = max(1.0, float(np.max(np.abs(base))))
    alt = max(np.max(np.abs(base + swapped)), np.max(np.abs(base - rotated))) / scale
    out.append(_check("algebra/alternation", alt, 1e-12))

    # linear field with exact flow exp(tA): L_X a = d/dt Phi_t^* a at t = 0
    A = rng.normal(scale=0.5, size=(3, 3))
    X = TimeDepVectorField([(lambda i: (lambda t, x: A[i, 0] * x[0] + A[i, 1] * x[1] + A[i, 2] * x[2]))(i)
                            for i in range(3)], time_dependent=False)
    a = random_form(rng, 3, 2)
    q = rng.normal(size=(3, 30))

    def pulled(s):
        M = linalg.expm(s * A)
        psi = DifferentiableMap(lambda x: [M[i, 0] * x[0] + M[i, 1] * x[1] + M[i, 2] * x[2] for i in range(3)], 3, 3)
        return pullback(psi, a).coefficients(0.0, list(q))

    h = 1e-3
    d1 = (pulled(h) - pulled(-h)) / (2 * h)
    d2 = (pulled(h / 2) - pulled(-h / 2)) / h
    fd = (4 * d2 - d1) / 3
    lie = lie_derivative(X, a).coefficients(0.0, list(q))
    out.append(_check("algebra/cartan_matches_flow", np.max(np.abs(fd - lie)) / max(1.0, np.max(np.abs(lie))), 1e-6))

    # same oracle with the Lorenz flow and rho d^3x: coefficient of Phi_h^* a is rho(Phi_h q) det DPhi_h
    Xl = lorenz_field()
    F = FlowMap(Xl)
    vol = KFormFamily(3, 3, {(0, 1, 2): lambda t, x: np.exp(-0.05 * (x[0] ** 2 + x[1] ** 2 + x[2] ** 2))}, False)
    q = rng.uniform(-2, 2, size=(3, 20))

    def lorenz_pulled(s):
        res = F.flow(0.0, s, q, "full")
        return vol.components[(0, 1, 2)](s, res.endpoint) * np.linalg.det(np.moveaxis(res.jacobian, -1, 0))

    d1 = (lorenz_pulled(h) - lorenz_pulled(-h)) / (2 * h)
    d2 = (lorenz_pulled(h / 2) - lorenz_pulled(-h / 2)) / h
    fd = (4 * d2 - d1) / 3
    lie = lie_derivative(Xl, vol).coefficients(0.0, list(q))[0]
    out.append(_check("algebra/cartan_matches_lorenz_flow", np.max(np.abs(fd - lie)) / max(1.0, np.max(np.abs(lie))), 1e-6))

    X = random_field(rng, 3)
    f = random_form(rng, 3, 0)
    a = random_form(rng, 3, 2)
    q = rng.normal(size=(3, 30))
    fX = X.scale(f.components[()])
    lhs = lie_derivative(fX, a)
    rhs = lie_derivative(X, a).scale(f.components[()]) + wedge(exterior_derivative(f), interior_product(X, a))
    out.append(_check("algebra/lie_of_fX", _max_coeff(lhs - rhs, q), 1e-9))

    W = rng.normal(size=(3, 2))
    psi = DifferentiableMap(lambda p: [np.sin(W[i, 0] * p[0]) + W[i, 1] * p[1] * p[0] for i in range(3)], 2, 3)
    a = random_form(rng, 3, 1)
    p = rng.normal(size=(2, 30))
    nat = pullback(psi, exterior_derivative(a)) - exterior_derivative(pullback(psi, a))
    out.append(_check("algebra/naturality_of_d", _max_coeff(nat, p), 1e-9))
    return out


def _gauss(n):
    return KFormFamily(n, n, {tuple(range(n)): lambda t, q: np.exp(-sum(qi * qi for qi in q))},
                       time_dependent=False)


def quadrature_suite(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    line = make_box([(-np.inf, np.inf)])
    out.append(_check("quadrature/gaussian_line", abs(integrate_form(_gauss(1), line, tol=1e-12).value - math.sqrt(math.pi)), 1e-10))
    plane = make_box([(-np.inf, np.inf), (-np.inf, np.inf)])
    out.append(_check("quadrature/gaussian_plane", abs(integrate_form(_gauss(2), plane, tol=1e-10).value - math.pi), 1e-8))

    c = rng.uniform(0.5, 2.0, 2)
    a = KFormFamily(2, 2, {(0, 1): lambda t, q: np.cos(c[0] * q[0]) * np.exp(-c[1] * q[1] ** 2)}, False)
    box = make_box([(0.0, 2.0), (-np.inf, np.inf)])
    v = integrate_form(a, box, tol=1e-9).value
    w = integrate_form(a, box.reversed(), tol=1e-9).value
    out.append(_check("quadrature/orientation_antisymmetry", abs(v + w), 0.0))

    tol = 1e-9
    at = float(rng.uniform(0.2, 1.8))
    left, right = box.split(0, at)
    parts = integrate_form(a, left, tol=tol).value + integrate_form(a, right, tol=tol).value
    out.append(_check("quadrature/split_additivity", abs(parts - integrate_form(a, box, tol=tol).value) / tol, 2.0))
    return out


def flow_suite(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    F = FlowMap(lorenz_field(), rel_tol=1e-10, abs_tol=1e-12)
    q = rng.uniform(-5, 5, size=(3, 16))
    t1, t2, t3 = np.sort(rng.uniform(-0.1, 0.4, 3))
    out.append(_check("flow/lorenz_semigroup", semigroup_residual(F, float(t1), float(t2), float(t3), q), 1e-7))

    q0 = rng.uniform(-3, 3, size=3)
    res = F.flow_point(0.0, 0.3, q0, want_jacobian=True)
    eps = 1e-6
    fd = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = eps
        fd[:, j] = (F.flow_point(0.0, 0.3, q0 + e).endpoint - F.flow_point(0.0, 0.3, q0 - e).endpoint) / (2 * eps)
    out.append(_check("flow/lorenz_jacobian_vs_differences",
                      np.max(np.abs(res.jacobian - fd)) / np.max(np.abs(fd)), 1e-5))

    sc = sandwich_wave()
    cell = sc.S0.cells[0].with_bounds([(-0.5, 0.0), (1.0, 4.0), (0.0, 2 * np.pi)])
    x = cell.evaluate(cell.sample_parameters(20, rng))
    exact = sc.flow.flow(0.0, 0.3, x).endpoint
    ode = sc.extras["ode_flow"].flow(0.0, 0.3, x).endpoint
    out.append(_check("flow/wave_ode_vs_closed_form",
                      np.max(np.abs(ode - exact) / np.maximum(1.0, np.abs(exact))), 1e-6))
    return out


def transport_suite(seed: int = 0, workers: int = 1) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    line = make_box([(-np.inf, np.inf)])
    a = KFormFamily(1, 1, {(0,): lambda t, q: np.exp(-t) * np.exp(-q[0] ** 2)}, True)
    t = float(rng.uniform(0.0, 1.0))
    out.append(_check("transport/diff_lemma_gaussian", check_diff_lemma(line, a, t, tol=1e-11).residual, 1e-7))
    sq = make_box([(0.0, 1.0), (0.0, 1.0)])
    b = KFormFamily(2, 2, {(0, 1): lambda s, q: np.sin(s) + 0.0 * q[0]}, True)
    d = check_diff_lemma(sq, b, 0.0, tol=1e-10)
    out.append(_check("transport/diff_lemma_square", max(abs(d.lhs - 1.0), abs(d.rhs - 1.0)), 1e-8))
    hs = np.array([1e-2, 5e-3, 2.5e-3])
    res = [check_diff_lemma(line, a, t, h=float(h), tol=1e-12, richardson=False).residual for h in hs]
    slope = np.polyfit(np.log(hs), np.log(res), 1)[0]
    out.append(_check("transport/diff_lemma_h2_slope_deficit", max(0.0, 1.9 - slope), 0.0))

    sc = reynolds_translate(t_grid=[0.0, 0.5])
    rep = transport_report(sc, workers=workers)
    out.append(_check("transport/reynolds_relative_residual", max(rep.relative_residual), 1e-4))
    out.append(_check("transport/reynolds_rate_at_0", abs(rep.lhs[0] - math.pi), 1e-4))
    div = rhs_divergence_form(sc, 0.5)
    out.append(_check("transport/divergence_form_agreement", abs(div.value - rep.rhs[1]) / abs(rep.rhs[1]), 1e-6))

    lz = lorenz_sheet(t_grid=[0.2])
    ratio = lz.integral(0.2).value / lz.integral(0.0).value
    out.append(_check("transport/lorenz_volume_decay", abs(ratio / math.exp(-41 * 0.2 / 3) - 1.0), 1e-3))

    wave = sandwich_wave(r_grid=[-0.5, 0.3, 1.5])
    M = [wave.integral(r).value for r in wave.t_grid]
    out.append(_check("transport/wave_mass_conserved", (max(M) - min(M)) / abs(M[0]), 1e-3))
    pts = wave.S0.cells[0].evaluate(wave.S0.cells[0].sample_parameters(50, rng))
    inv = classify_invariance(wave.field, wave.form, pts, tol=1e-8)
    out.append(_check("transport/wave_absolutely_invariant", 0.0 if inv.absolutely_invariant else 1.0, 0.0))
    return out


SUITES: dict[str, Callable] = {
    "algebra": algebra_suite,
    "quadrature": quadrature_suite,
    "flow": flow_suite,
    "transport": transport_suite,
}


def run_suite(name: str, seed: int = 0, workers: int = 1) -> list[Check]:
    names = list(SUITES) if name == "all" else [name]
    checks = []
    for s in names:
        if s not in SUITES:
            raise KeyError(f"unknown suite {s!r}; choose from {', '.join(SUITES)} or all")
        fn = SUITES[s]
        checks.extend(fn(seed, workers) if s == "transport" else fn(seed))
    return checks
