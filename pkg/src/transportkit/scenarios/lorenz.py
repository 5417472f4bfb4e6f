"""The cut sheet advected by the Lorenz equations.

The Lorenz field ``(s (y - x), x (r - z) - y, x y - b z)`` has constant
divergence ``-(s + 1 + b)``, so volumes shrink like
``exp(-(s + 1 + b) t)``.  In ``"volume"`` mode the form is ``d^3x`` on a
compact sub-cell of the sheet; in ``"gaussian"`` mode it is
``exp(-|x|^2) d^3x`` on the whole (unbounded) sheet.
"""
from __future__ import annotations

import math

import numpy as np

from ..calculus import KFormFamily, TimeDepVectorField
from ..domains import CellComplex, DomainSpecError, make_cut_sheet
from ..flow import FlowMap
from .base import Scenario

__all__ = ["lorenz_field", "lorenz_sheet"]


def lorenz_field(sigma: float = 10.0, b: float = 8.0 / 3.0, r_param: float = 28.0) -> TimeDepVectorField:
    def fx(t, q):
        return sigma * (q[1] - q[0])

    def fy(t, q):
        return q[0] * (r_param - q[2]) - q[1]

    def fz(t, q):
        return q[0] * q[1] - b * q[2]

    return TimeDepVectorField([fx, fy, fz], time_dependent=False, name="lorenz")


def lorenz_sheet(sigma: float = 10.0, b: float = 8.0 / 3.0, r_param: float = 28.0, H: float = 1.0,
                 weight: str = "volume", tol: float = 1e-6, t_grid=None) -> Scenario:
    """Sheet of height H under the Lorenz flow.

    ``weight="volume"`` restricts to the compact sub-cell with parameters
    ``[0, 1] x [-1, 1] x [-1, 1]`` (volume ``2 H``) and integrates ``d^3x``.
    """
    if not H > 0:
        raise DomainSpecError(f"sheet height must be positive, got {H}")
    sheet = make_cut_sheet(H)
    X = lorenz_field(sigma, b, r_param)
    decay = sigma + 1.0 + b
    if weight == "volume":
        cell = sheet.cells[0].with_bounds([(0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)])
        S0 = CellComplex([cell], name=f"cut-sheet sub-cell (H={H:g})")
        form = KFormFamily(3, 3, {(0, 1, 2): 1.0}, time_dependent=False, name="d3x")
        vol0 = 2.0 * H
        exact = {
            "integral": lambda t: vol0 * math.exp(-decay * t),
            "integral_rate": lambda t: -decay * vol0 * math.exp(-decay * t),
        }
    elif weight == "gaussian":
        S0 = sheet
        form = KFormFamily(3, 3, {(0, 1, 2): lambda t, q: np.exp(-(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]))},
                           time_dependent=False, name="exp(-|x|^2) d3x")
        exact = {}
    else:
        raise ValueError(f"weight must be 'volume' or 'gaussian', got {weight!r}")
    if t_grid is None:
        t_grid = [0.0, 0.1, 0.2, 0.3]
    t_grid = [float(t) for t in t_grid]
    return Scenario(
        name=f"lorenz-{weight}",
        n=3,
        S0=S0,
        form=form,
        field=X,
        flow=FlowMap(X),
        t_interval=(min(min(t_grid), 0.0), max(max(t_grid), 0.0)),
        t_grid=t_grid,
        tol=tol,
        metadata={"sigma": sigma, "b": b, "r": r_param, "H": H, "weight": weight,
                  "divergence": -decay},
        exact=exact,
    )
