"""Acceptance criteria 1-7, each at its stated tolerance and runtime budget.

Every test prints one ``criterion N: PASS|FAIL`` line; the lines are
repeated in the terminal summary so they appear in any captured log.
"""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from transportkit.calculus import KFormFamily, exterior_derivative, interior_product
from transportkit.domains import make_box
from transportkit.scenarios import lorenz_sheet, reynolds_translate, sandwich_wave
from transportkit.transport import (
    check_diff_lemma,
    classify_invariance,
    rhs_divergence_form,
    rhs_time_dependent,
    transport_report,
)
from transportkit.verification import algebra_suite, flow_suite, quadrature_suite

ROOT = Path(__file__).resolve().parents[1]
FIX = Path(__file__).resolve().parent / "fixtures"
RESULTS: list[str] = []


def report(n, ok, elapsed, budget, detail):
    timing = f"{elapsed:.2f} s" + (f" of {budget:g} s" if budget else "")
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  ({timing})  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def by_name(checks):
    return {c.name.split("/", 1)[1]: c.value for c in checks}


def test_criterion_1_exterior_algebra():
    limits = {"d_of_d_vanishes": 1e-10, "alternation": 1e-12, "cartan_matches_flow": 1e-6,
              "cartan_matches_lorenz_flow": 1e-6, "lie_of_fX": 1e-9, "naturality_of_d": 1e-9}
    t0 = time.perf_counter()
    v = by_name(algebra_suite(seed=42))
    elapsed = time.perf_counter() - t0
    worst = {k: v[k] for k in limits}
    ok = all(worst[k] <= lim for k, lim in limits.items()) and elapsed < 10
    detail = ", ".join(f"{k}={worst[k]:.1e}" for k in limits)
    assert report(1, ok, elapsed, 10, detail), detail


def test_criterion_2_quadrature():
    t0 = time.perf_counter()
    v = by_name(quadrature_suite(seed=42))
    elapsed = time.perf_counter() - t0
    ok = (v["gaussian_line"] <= 1e-10 and v["gaussian_plane"] <= 1e-8
          and v["orientation_antisymmetry"] == 0.0 and v["split_additivity"] <= 2.0 and elapsed < 30)
    detail = (f"sqrt(pi) err {v['gaussian_line']:.1e}, pi err {v['gaussian_plane']:.1e}, "
              f"orientation {v['orientation_antisymmetry']:.1e}, split/tol {v['split_additivity']:.2f}")
    assert report(2, ok, elapsed, 30, detail), detail


def test_criterion_3_flow():
    t0 = time.perf_counter()
    v = by_name(flow_suite(seed=42))
    elapsed = time.perf_counter() - t0
    ok = (v["lorenz_semigroup"] <= 1e-7 and v["lorenz_jacobian_vs_differences"] <= 1e-5
          and v["wave_ode_vs_closed_form"] <= 1e-6 and elapsed < 60)
    detail = (f"semigroup {v['lorenz_semigroup']:.1e}, jacobian rel {v['lorenz_jacobian_vs_differences']:.1e}, "
              f"wave ode {v['wave_ode_vs_closed_form']:.1e}")
    assert report(3, ok, elapsed, 60, detail), detail


def test_criterion_4_differentiation_lemma():
    t0 = time.perf_counter()
    line = make_box([(-np.inf, np.inf)])
    fixtures = [
        (line, KFormFamily(1, 1, {(0,): lambda t, q: np.exp(-t) * np.exp(-q[0] ** 2)}, True), 0.4),
        (line, KFormFamily(1, 1, {(0,): lambda t, q: np.exp(-(1 + t * t) * q[0] ** 2)}, True), 0.7),
        (make_box([(0, 1), (0, 1)]), KFormFamily(2, 2, {(0, 1): lambda t, q: np.sin(t) + 0 * q[0]}, True), 0.0),
        (make_box([(0, 2), (-np.inf, np.inf)]),
         KFormFamily(2, 2, {(0, 1): lambda t, q: np.cos(t * q[0]) * np.exp(-q[1] ** 2)}, True), 0.5),
    ]
    residuals = [check_diff_lemma(S, a, t, tol=1e-11).residual for S, a, t in fixtures]
    a = fixtures[0][1]
    hs = np.array([1e-2, 5e-3, 2.5e-3])
    res = [check_diff_lemma(line, a, 0.4, h=float(h), tol=1e-12, richardson=False).residual for h in hs]
    slope = float(np.polyfit(np.log(hs), np.log(res), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = max(residuals) <= 1e-7 and slope >= 1.9 and elapsed < 30
    detail = f"max residual {max(residuals):.1e}, slope {slope:.3f}"
    assert report(4, ok, elapsed, 30, detail), detail


def test_criterion_5_transport_theorem():
    t0 = time.perf_counter()
    sc = reynolds_translate()
    rep = transport_report(sc, workers=1)
    rel = max(rep.relative_residual)
    lhs0 = rep.lhs[rep.t_grid.index(0.0)]
    lz = lorenz_sheet(weight="volume", t_grid=[0.0, 0.2])
    I0 = lz.integral(0.0).value
    ratio_err = abs(lz.integral(0.2).value / (I0 * math.exp(-41 * 0.2 / 3)) - 1.0)
    div_err = 0.0
    for s, t in ((sc, 0.5), (lz, 0.2)):
        g = rhs_time_dependent(s, t).value
        d = rhs_divergence_form(s, t).value
        div_err = max(div_err, abs(d - g) / abs(g))
    elapsed = time.perf_counter() - t0
    ok = rel <= 1e-4 and abs(lhs0 - math.pi) <= 1e-4 and ratio_err <= 1e-3 and div_err <= 1e-6 and elapsed < 300
    detail = (f"reynolds rel residual {rel:.1e}, |lhs(0)-pi| {abs(lhs0 - math.pi):.1e}, "
              f"lorenz rel err {ratio_err:.1e}, divergence-form rel diff {div_err:.1e}")
    assert report(5, ok, elapsed, 300, detail), detail


def test_criterion_6_sandwich_wave():
    t0 = time.perf_counter()
    grid = [-0.5, -0.25, 0.0, 0.25, 0.5, 0.8, 1.0, 1.5]
    sc = sandwich_wave(r_grid=grid, tol=1e-6)
    M = [sc.integral(r).value for r in grid]
    spread = (max(M) - min(M)) / abs(M[grid.index(0.0)])
    rng = np.random.default_rng(42)
    cell = sc.S0.cells[0]
    pts = cell.evaluate(cell.sample_parameters(50, rng))
    xa = np.max(np.abs(interior_product(sc.field, sc.form).coefficients(0.0, list(pts))))
    da = np.max(np.abs(exterior_derivative(sc.form).coefficients(0.0, list(pts))))
    inv = classify_invariance(sc.field, sc.form, pts, tol=1e-8)
    elapsed = time.perf_counter() - t0
    ok = spread <= 1e-3 and xa <= 1e-8 and da <= 1e-8 and inv.absolutely_invariant and elapsed < 600
    detail = (f"M(0)={M[grid.index(0.0)]:.10g}, relative spread {spread:.1e}, |X.a| {xa:.1e}, |da| {da:.1e}, "
              f"absolutely_invariant={inv.absolutely_invariant}")
    assert report(6, ok, elapsed, 600, detail), detail


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "transportkit.cli", *map(str, args)],
                          capture_output=True, text=True, cwd=ROOT)


def test_criterion_7_cli_determinism():
    t0 = time.perf_counter()
    a = _cli("verify", "all", "--seed", "42", "--workers", "1")
    b = _cli("verify", "all", "--seed", "42", "--workers", "1")
    same = a.stdout == b.stdout and a.returncode == b.returncode == 0 and a.stdout
    fail = _cli("run", FIX / "failing-residual.ini", "--workers", "1")
    bad = _cli("run", "no-such-scenario")
    elapsed = time.perf_counter() - t0
    ok = bool(same) and fail.returncode == 2 and bad.returncode == 1
    detail = (f"identical verify output: {bool(same)}, failing fixture exit {fail.returncode}, "
              f"unknown scenario exit {bad.returncode}")
    assert report(7, ok, elapsed, None, detail), detail
