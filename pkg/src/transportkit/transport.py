"""Both sides of the transport identities, evaluated numerically.

For a form family ``alpha_t`` and a flow ``Phi`` of ``X_t`` the quantity
``I(t) = integral over S_t of alpha_t`` is differentiated in two ways:

* the left side ``dI/dt`` by central differences with one Richardson step,
  using a *fixed* node set (the adapted rule of ``I(t)``) so that the
  discrete integral is a smooth function of t;
* the right side as an integral over ``S_t`` (equivalently over ``S_0``
  after pulling back) of ``d/dt alpha_t + L_{X_t} alpha_t``, or of
  ``L_X alpha`` for time-independent forms, or of
  ``d/dt alpha_t + div(X_t) alpha_t`` for nowhere-vanishing top-degree forms.

All hypothesis checks here are sampling based: they can falsify a
boundedness or invariance claim, never prove it.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .calculus import (
    DegreeError,
    DensityField,
    KFormFamily,
    SingularVolumeError,
    TimeDepVectorField,
    divergence,
    exterior_derivative,
    interior_product,
    lie_derivative,
    pulled_back_coefficient,
    time_derivative,
)
from .domains import CellComplex, CornerCell, as_complex
from .flow import AdvectedCell
from .quadrature import FixedRule, QuadratureResult, form_integrand, integrate_form

__all__ = [
    "UsageError",
    "InvarianceAssertionError",
    "TransportReport",
    "DiffLemmaReport",
    "BoundednessReport",
    "InvarianceReport",
    "lhs_time_derivative",
    "rhs_time_dependent",
    "rhs_time_independent",
    "rhs_divergence_form",
    "check_diff_lemma",
    "boundedness_witness",
    "classify_invariance",
    "pullback_rate_identity",
    "transport_report",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "integral", "lhs", "rhs", "residual", "scale", "abs_integral", "converged")


class UsageError(ValueError):
    """An operation was called on inputs outside its contract."""


class InvarianceAssertionError(AssertionError):
    """Absolute invariance was found without invariance (numerically inconsistent samples)."""


# -- helpers -----------------------------------------------------------------------

def _base_cell(cell: CornerCell) -> CornerCell:
    return cell.base if isinstance(cell, AdvectedCell) else cell


def _cell_at(cell: CornerCell, flow, s: float) -> CornerCell:
    base = _base_cell(cell)
    if s == 0.0:
        return base
    return AdvectedCell(base, flow, s)


def _rule_integral(rule: FixedRule, a: KFormFamily, flow, s: float) -> float:
    """Apply a frozen rule to ``psi_s^* a_s`` with cells advected to time s."""
    f = form_integrand(a, s)
    total = 0.0
    for ci, (cell, p, w) in enumerate(zip(rule.cells, rule.points, rule.weights)):
        if w.size:
            total += float(np.dot(w, f(ci, _cell_at(cell, flow, s), p)))
    return total


def _central(rule, a, flow, t, h, richardson):
    def D(hh):
        return (_rule_integral(rule, a, flow, t + hh) - _rule_integral(rule, a, flow, t - hh)) / (2.0 * hh)

    d1 = D(h)
    if not richardson:
        return d1
    d2 = D(0.5 * h)
    return (4.0 * d2 - d1) / 3.0


def _rhs_form(sc) -> KFormFamily:
    return time_derivative(sc.form) + lie_derivative(sc.field, sc.form)


# -- the two sides ---------------------------------------------------------------------

def lhs_time_derivative(sc, t: float, h: float | None = None, tol: float | None = None,
                        richardson: bool = True, integral: QuadratureResult | None = None) -> float:
    """``d/dt`` of ``integral over S_t of alpha_t`` by fixed-node central differences.

    ``integral`` may pass an already adapted ``I(t)`` carrying a rule.
    """
    h = float(h if h is not None else sc.h)
    if not h > 0:
        raise UsageError("h must be positive")
    if integral is None or integral.rule is None:
        integral = sc.integral(t, tol, keep_rule=True)
    return _central(integral.rule, sc.form, sc.flow, t, h, richardson)


def rhs_time_dependent(sc, t: float, tol: float | None = None) -> QuadratureResult:
    """``integral over S_0 of Phi_t^*(d/dt alpha_t + L_{X_t} alpha_t)``."""
    return integrate_form(_rhs_form(sc), sc.advected(t), t, tol or sc.tol)


def rhs_time_independent(sc, t: float, tol: float | None = None) -> QuadratureResult:
    """``integral over S_0 of Phi_t^*(L_X alpha)`` for a form without explicit t-dependence."""
    if sc.form.time_dependent:
        raise UsageError(
            "the form depends explicitly on the parameter; use rhs_time_dependent instead"
        )
    return integrate_form(lie_derivative(sc.field, sc.form), sc.advected(t), t, tol or sc.tol)


def rhs_divergence_form(sc, t: float, tol: float | None = None, threshold: float = 1e-300) -> QuadratureResult:
    """``integral over S_t of (d/dt alpha_t + div_t(X_t) alpha_t)``.

    The divergence is taken with respect to ``alpha_t`` itself, so the form
    must be top degree and must not vanish at any quadrature node
    (:class:`SingularVolumeError` otherwise; the general right side has no
    such restriction).
    """
    a = sc.form
    if a.k != a.n:
        raise DegreeError("the divergence form needs a top-degree form")
    top = tuple(range(a.n))
    f = a.components.get(top)
    if f is None:
        raise SingularVolumeError("the form vanishes identically")
    fdot = time_derivative(a).components.get(top)
    X = sc.field
    div = divergence(X, a, threshold)

    def comp(s, q):
        val = div(s, q) * f(s, q)
        if fdot is not None:
            val = val + fdot(s, q)
        return val

    b = KFormFamily(a.n, a.n, {top: comp}, a.time_dependent or X.time_dependent)
    return integrate_form(b, sc.advected(t), t, tol or sc.tol)


# -- reports ------------------------------------------------------------------------------

@dataclass
class TransportReport:
    scenario: str
    param_name: str
    t_grid: list
    integral: list
    lhs: list
    rhs: list
    residual: list
    scale: list
    abs_integral: list
    converged: list
    residual_tol: float
    metadata: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    @property
    def relative_residual(self) -> list:
        return [r / s for r, s in zip(self.residual, self.scale)]

    @property
    def passed(self) -> bool:
        return all(r <= self.residual_tol * s for r, s in zip(self.residual, self.scale))

    def rows(self):
        for i, t in enumerate(self.t_grid):
            yield (t, self.integral[i], self.lhs[i], self.rhs[i], self.residual[i], self.scale[i],
                   self.abs_integral[i], self.converged[i])

    def to_csv(self, fh=None) -> str:
        """RFC-4180 style CSV with the fixed columns of :data:`CSV_COLUMNS`."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def table(self) -> str:
        head = f"{self.param_name:>8} {'integral':>16} {'lhs':>14} {'rhs':>14} {'residual':>10} {'rel':>10} conv"
        lines = [f"scenario {self.scenario}"]
        lines += [f"  {k} = {v}" for k, v in sorted(self.metadata.items())]
        lines.append(head)
        for t, I, l, r, res, sc, ab, cv in self.rows():
            lines.append(f"{t:8.4f} {I:16.10g} {l:14.6e} {r:14.6e} {res:10.2e} {res / sc:10.2e} {'yes' if cv else 'no'}")
        lines.append(f"residual tolerance {self.residual_tol:g} x scale: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return format(float(v), ".17g")


def _evaluate_t(sc, t, tol, h, rhs_kind):
    I = sc.integral(t, tol, keep_rule=True)
    lhs = lhs_time_derivative(sc, t, h, tol, integral=I)
    if rhs_kind == "time_independent":
        R = rhs_time_independent(sc, t, tol)
    elif rhs_kind == "divergence":
        R = rhs_divergence_form(sc, t, tol)
    else:
        R = rhs_time_dependent(sc, t, tol)
    return I, lhs, R


def transport_report(sc, tol: float | None = None, h: float | None = None, t_grid: Sequence | None = None,
                     rhs: str = "time_dependent", workers: int = 1) -> TransportReport:
    """Evaluate both sides at every grid parameter.

    Per-t evaluations may run in a thread pool (``workers > 1``); results
    are assembled in grid order, so the report does not depend on
    scheduling.
    """
    tol = float(tol or sc.tol)
    h = float(h or sc.h)
    grid = [float(t) for t in (t_grid if t_grid is not None else sc.t_grid)]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as ex:
            results = list(ex.map(lambda t: _evaluate_t(sc, t, tol, h, rhs), grid))
    else:
        results = [_evaluate_t(sc, t, tol, h, rhs) for t in grid]
    rep = TransportReport(sc.name, sc.param_name, grid, [], [], [], [], [], [], [], sc.residual_tol,
                          dict(sc.metadata))
    for t, (I, lhs, R) in zip(grid, results):
        res = abs(lhs - R.value)
        rep.integral.append(I.value)
        rep.lhs.append(lhs)
        rep.rhs.append(R.value)
        rep.residual.append(res)
        rep.scale.append(max(abs(lhs), abs(R.value), 1.0))
        rep.abs_integral.append(I.abs_integral)
        rep.converged.append(bool(I.converged and R.converged))
        rep.diagnostics.append({"integral": I, "rhs": R})
    return rep


@dataclass
class DiffLemmaReport:
    lhs: float
    rhs: float
    residual: float
    integral: float
    h: float
    converged: bool


def check_diff_lemma(S, a: KFormFamily, t: float, h: float = 1e-3, tol: float = 1e-10,
                     richardson: bool = True) -> DiffLemmaReport:
    """Fixed domain: ``d/dt integral of alpha_t`` against ``integral of d/dt alpha_t``.

    The left side differentiates the integral with frozen nodes, the right
    side is an independent adaptive integral.
    """
    S = as_complex(S)
    I = integrate_form(a, S, t, tol, keep_rule=True)
    rule = I.rule

    def at(s):
        f = form_integrand(a, s)
        return rule.apply(f)

    def D(hh):
        return (at(t + hh) - at(t - hh)) / (2.0 * hh)

    lhs = D(h)
    if richardson:
        lhs = (4.0 * D(0.5 * h) - lhs) / 3.0
    R = integrate_form(time_derivative(a), S, t, tol)
    return DiffLemmaReport(float(lhs), R.value, abs(lhs - R.value), I.value, h, bool(I.converged and R.converged))


@dataclass
class BoundednessReport:
    """Outcome of a sampling check of ``|d/dt Phi_t^* alpha_t| <= beta`` on S0.

    A clean report is a witness at the sampled points only, never a proof.
    """

    samples: int
    t_grid: list
    violations: list
    max_ratio: float
    heuristic: bool
    note: str

    @property
    def ok(self) -> bool:
        return not self.violations


def _candidate_values(beta: DensityField, cell: CornerCell, p: np.ndarray) -> np.ndarray:
    if beta.kind == "parameter":
        return np.broadcast_to(np.asarray(beta.fn(p), dtype=float), p.shape[1:])
    x, jac = cell.evaluate_with_jacobian(p)
    return beta.values(0.0, p, x, jac)


def _rate_coefficients(sc, t: float, cell: CornerCell, p: np.ndarray, rate_form: KFormFamily) -> np.ndarray:
    c = _cell_at(cell, sc.flow, t)
    x, jac = c.evaluate_with_jacobian(p)
    return np.abs(pulled_back_coefficient(rate_form, t, x, jac))


def boundedness_witness(sc, t_grid: Sequence | None = None, sample_count: int = 64, seed: int = 0,
                        candidate: DensityField | str | None = None, max_report: int = 20) -> BoundednessReport:
    """Sample ``|d/dt (Phi_t^* alpha_t)|`` on S0 and compare with a candidate bound.

    ``candidate`` defaults to the scenario's ``bound_candidate``; ``"auto"``
    uses 1.05 times the empirical envelope over the sampled times, which is
    flagged as heuristic.
    """
    grid = [float(t) for t in (t_grid if t_grid is not None else sc.t_grid)]
    cand = candidate if candidate is not None else (sc.bound_candidate or "auto")
    rate = _rhs_form(sc)
    rng = np.random.default_rng(seed)
    violations = []
    max_ratio = 0.0
    for ci, cell in enumerate(sc.S0.cells):
        p = cell.sample_parameters(sample_count, rng)
        rates = np.array([_rate_coefficients(sc, t, cell, p, rate) for t in grid])  # (T, N)
        if isinstance(cand, str):
            if cand != "auto":
                raise UsageError(f"unknown candidate {cand!r}")
            bound = 1.05 * rates.max(axis=0)
        else:
            bound = _candidate_values(cand, cell, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, rates / bound, np.where(rates > 0, np.inf, 0.0))
        max_ratio = max(max_ratio, float(np.max(ratio)))
        bad = np.argwhere(rates > bound)
        for ti, j in bad[: max(0, max_report - len(violations))]:
            violations.append({"cell": ci, "parameter": p[:, j].tolist(), "t": grid[ti],
                               "rate": float(rates[ti, j]), "bound": float(bound[j])})
        if bad.size and len(violations) >= max_report:
            break
    heuristic = isinstance(cand, str)
    note = ("sampling witness at {} points per cell; not a proof of boundedness".format(sample_count)
            + ("; candidate is the empirical envelope x 1.05 (heuristic)" if heuristic else ""))
    return BoundednessReport(sample_count, grid, violations, max_ratio, heuristic, note)


@dataclass
class InvarianceReport:
    invariant: bool
    absolutely_invariant: bool
    max_residuals: dict
    note: str = "classification at sampled points"


def classify_invariance(X: TimeDepVectorField, a: KFormFamily, samples, tol: float = 1e-8,
                        t: float = 0.0) -> InvarianceReport:
    """Invariance (``L_X a = 0``) and absolute invariance (``X.a = 0`` and ``X.da = 0``) at samples."""
    if a.time_dependent:
        raise UsageError("invariance is classified for time-independent forms")
    q = np.asarray(samples, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    lie = lie_derivative(X, a)
    r_lie = float(np.max(np.abs(lie.coefficients(t, list(q))))) if lie.components else 0.0
    if a.k >= 1:
        ia = interior_product(X, a)
        r_i = float(np.max(np.abs(ia.coefficients(t, list(q))))) if ia.components else 0.0
    else:
        r_i = 0.0
    if a.k < a.n:
        ida = interior_product(X, exterior_derivative(a))
        r_id = float(np.max(np.abs(ida.coefficients(t, list(q))))) if ida.components else 0.0
    else:
        r_id = 0.0
    invariant = r_lie <= tol
    absolute = r_i <= tol and r_id <= tol
    if absolute and not invariant:
        raise InvarianceAssertionError(
            f"X.a and X.da vanish to {max(r_i, r_id):.2e} but L_X a is {r_lie:.2e} at the samples"
        )
    return InvarianceReport(invariant, absolute, {"lie": r_lie, "interior": r_i, "interior_d": r_id})


def pullback_rate_identity(sc, t: float, cell_index: int = 0, sample_count: int = 32, seed: int = 0,
                           h: float = 1e-4) -> float:
    """Check ``d/dt Phi_t^* alpha_t = Phi_t^*(alpha_dot + L_X alpha)`` at sampled parameters.

    The left side is a central difference (with Richardson) of pulled-back
    coefficients; returns the largest relative deviation.
    """
    cell = sc.S0.cells[cell_index]
    p = cell.sample_parameters(sample_count, np.random.default_rng(seed))

    def coef(s):
        c = _cell_at(cell, sc.flow, s)
        x, jac = c.evaluate_with_jacobian(p)
        return pulled_back_coefficient(sc.form, s, x, jac)

    d1 = (coef(t + h) - coef(t - h)) / (2 * h)
    d2 = (coef(t + h / 2) - coef(t - h / 2)) / h
    lhs = (4 * d2 - d1) / 3
    c = _cell_at(cell, sc.flow, t)
    x, jac = c.evaluate_with_jacobian(p)
    rhs = pulled_back_coefficient(_rhs_form(sc), t, x, jac)
    scale = max(float(np.max(np.abs(rhs))), float(np.max(np.abs(lhs))), 1e-300)
    return float(np.max(np.abs(lhs - rhs)) / scale)
