"""Mass transport of a density by a velocity field in R^3.

Two views are available.  In the parameter view the flow parameter is
time, ``alpha_t = rho(t, x) d^3x`` and ``X = v``.  In the spacetime view
the ambient space is R^4 with coordinates ``(t, x, y, z)``, the field is
``d/dt + v`` and ``alpha = rho dx ^ dy ^ dz`` is a fixed 3-form; the initial
domain lies in the slice ``t = 0``.
"""
from __future__ import annotations

import math
from typing import Mapping

import numpy as np
from scipy import special

from ..calculus import DensityField, KFormFamily, TimeDepVectorField, coordinate_names
from ..domains import AxisBound, CellComplex, CornerCell, DomainSpecError
from ..exprlang import compile_expr
from ..flow import ClosedFormFlow, FlowMap
from .base import Scenario

__all__ = ["reynolds_translate", "reynolds_custom", "half_space", "parse_vector", "to_spacetime"]

_PI32 = math.pi ** 1.5


def half_space() -> CellComplex:
    """``{x1 <= 0}`` in R^3 as a single identity cell."""
    cell = CornerCell([AxisBound(-np.inf, 0.0), (-np.inf, np.inf), (-np.inf, np.inf)], None, 3, 1,
                      name="half-space")
    return CellComplex([cell], name="half-space x1<=0")


def parse_vector(text) -> list[str]:
    """Split ``"(a, b, c)"`` into component strings at top-level commas."""
    if not isinstance(text, str):
        return [str(c) for c in text]
    s = text.strip()
    if s.startswith("(") and s.endswith(")"):
        s = s[1:-1]
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur).strip())
    return parts


def to_spacetime(S: CellComplex) -> CellComplex:
    """Embed a complex of R^3 into the slice ``t = 0`` of R^4."""

    def lift(cell: CornerCell) -> CornerCell:
        base = cell.embed

        def embed(p):
            x = base(p)
            return [0.0 * x[0]] + list(x)

        return CornerCell(cell.bounds, embed, 4, cell.orientation_sign, name=f"{cell.name}@t=0")

    return CellComplex([lift(c) for c in S.cells], name=f"{S.name} in t=0", metadata=S.metadata)


def reynolds_translate(tol: float = 1e-6, t_grid=None) -> Scenario:
    """Gaussian density translated with unit speed out of the half-space ``x1 <= 0``.

    ``I(t) = pi * sqrt(pi)/2 * (1 + erf(t))`` and ``dI/dt = pi exp(-t^2)``.
    """
    sc = reynolds_custom({"rho": "exp(-(x^2+y^2+z^2))", "v": "(1, 0, 0)"}, tol=tol, t_grid=t_grid)
    sc.name = "reynolds-translate"
    # the flow is an exact translation; the generic ODE flow stays available for comparison
    sc.extras["ode_flow"] = sc.flow
    sc.flow = ClosedFormFlow(lambda r, q: [q[0] + r, q[1] + 0.0 * r, q[2] + 0.0 * r], 3)
    sc.exact = {
        "integral": lambda t: 0.5 * _PI32 * (1.0 + special.erf(t)),
        "integral_rate": lambda t: math.pi * math.exp(-t * t),
    }
    sc.residual_tol = 1e-4
    return sc


def reynolds_custom(config: Mapping, tol: float | None = None, t_grid=None) -> Scenario:
    """Scenario from expression strings.

    Recognised keys: ``rho`` (density), ``v`` (velocity, ``"(v1, v2, v3)"``),
    ``spacetime`` (bool), ``domain`` (a CellComplex in R^3; default the
    half-space ``x1 <= 0``), ``t_min``/``t_max``/``t_steps``, ``tol``, ``h``,
    ``bound`` (expression for a boundedness candidate on S0 parameters).
    """
    rho = str(config.get("rho", "exp(-(x^2+y^2+z^2))"))
    v = parse_vector(config.get("v", "(1, 0, 0)"))
    if len(v) != 3:
        raise DomainSpecError(f"velocity needs 3 components, got {len(v)}")
    spacetime = _as_bool(config.get("spacetime", False))
    S0 = config.get("domain") or half_space()
    if S0.n != 3 or S0.k != 3:
        raise DomainSpecError("the initial domain must be a 3-complex in R^3")
    tol = float(tol if tol is not None else config.get("tol", 1e-6))
    if t_grid is None:
        t_min = float(config.get("t_min", 0.0))
        t_max = float(config.get("t_max", 1.0))
        steps = int(config.get("t_steps", 5))
        t_grid = list(np.linspace(t_min, t_max, steps))
    t_grid = [float(t) for t in t_grid]
    interval = (min(min(t_grid), 0.0), max(max(t_grid), 0.0))
    meta = {"rho": rho, "v": "(" + ", ".join(v) + ")", "view": "spacetime" if spacetime else "parameter"}
    if not spacetime:
        coords = coordinate_names(3)
        rho_c = compile_expr(rho, coords, "t")
        form = KFormFamily(3, 3, {(0, 1, 2): rho_c}, time_dependent=rho_c.depends_on_param, name="rho d3x")
        field = TimeDepVectorField.from_exprs(v, coords, "t")
        n = 3
    else:
        coords = coordinate_names(4)
        rho_c = compile_expr(rho, coords, "r")
        form = KFormFamily(4, 3, {(1, 2, 3): rho_c}, time_dependent=False, name="rho dx^dy^dz")
        vcomp = [compile_expr(e, coords, "r") for e in v]
        field = TimeDepVectorField([lambda s, q: 1.0 + 0.0 * q[0]] + vcomp, time_dependent=False)
        S0 = to_spacetime(S0)
        n = 4
    bound = None
    if "bound" in config:
        bexpr = compile_expr(str(config["bound"]), coordinate_names(3), None)
        bound = DensityField.on_parameters(lambda p: bexpr(0.0, p))
    return Scenario(
        name="reynolds-custom" + ("-spacetime" if spacetime else ""),
        n=n,
        S0=S0,
        form=form,
        field=field,
        flow=FlowMap(field),
        t_interval=interval,
        t_grid=t_grid,
        tol=tol,
        h=float(config.get("h", 1e-3)),
        bound_candidate=bound,
        metadata=meta,
    )


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes", "on")
    return bool(v)
