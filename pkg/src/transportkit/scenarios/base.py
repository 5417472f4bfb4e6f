"""The :class:`Scenario` bundle shared by all built-in and configured runs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..calculus import DensityField, KFormFamily, TimeDepVectorField
from ..domains import CellComplex
from ..flow import OK, advect_complex
from ..quadrature import QuadratureResult, integrate_form

__all__ = ["Scenario", "PreflightError"]


class PreflightError(RuntimeError):
    """A scenario failed its consistency checks before running."""


@dataclass
class Scenario:
    """Initial domain, form family, vector field and flow, plus run settings.

    ``t_grid`` holds the parameter values at which transport identities are
    checked; ``param_name`` is only used for labelling ("t" or "r").
    """

    name: str
    n: int
    S0: CellComplex
    form: KFormFamily
    field: TimeDepVectorField
    flow: object
    t_interval: tuple
    t_grid: list
    tol: float = 1e-6
    h: float = 1e-3
    residual_tol: float = 1e-3
    bound_candidate: DensityField | None = None
    param_name: str = "t"
    metadata: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    exact: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_grid = [float(t) for t in self.t_grid]
        lo, hi = self.t_interval
        if not lo <= 0.0 <= hi:
            raise PreflightError(f"parameter interval [{lo}, {hi}] must contain 0")
        if self.form.k != self.S0.k or self.form.n != self.S0.n:
            raise PreflightError(
                f"form degree {self.form.k} on R^{self.form.n} does not match the {self.S0.k}-complex in R^{self.S0.n}"
            )
        if self.field.n != self.n or self.S0.n != self.n:
            raise PreflightError("field, domain and scenario dimensions disagree")

    def advected(self, t: float) -> CellComplex:
        """``S_t`` (the initial complex itself at t = 0)."""
        if t == 0.0:
            return self.S0
        return advect_complex(self.flow, self.S0, t)

    def integral(self, t: float, tol: float | None = None, **kw) -> QuadratureResult:
        """``integral over S_t of alpha_t``."""
        return integrate_form(self.form, self.advected(t), t, tol or self.tol, **kw)

    def preflight(self, samples: int = 16, seed: int = 0, check_integral: bool = True) -> dict:
        """Check that sampled points of S0 flow to every grid time and that I(0) is finite.

        Returns a small report; raises :class:`PreflightError` on failure.
        """
        rng = np.random.default_rng(seed)
        checked = 0
        for ci, cell in enumerate(self.S0.cells):
            p = cell.sample_parameters(samples, rng)
            x0 = cell.evaluate(p)
            for t in self.t_grid:
                for s in (t - self.h, t, t + self.h):
                    res = self.flow.flow(0.0, s, x0)
                    if not np.all(res.status == OK):
                        j = int(np.argmax(res.status != OK))
                        raise PreflightError(
                            f"{self.name}: point {x0[:, j].tolist()} of cell {ci} does not flow to "
                            f"{self.param_name}={s:g} (status {res.status[j]})"
                        )
                    checked += res.endpoint.shape[1]
        report = {"scenario": self.name, "flowed_points": checked, "ok": True}
        if check_integral:
            I0 = self.integral(0.0, max(self.tol, 1e-4))
            if not np.isfinite(I0.value):
                raise PreflightError(f"{self.name}: the initial integral is not finite")
            report["integral_0"] = I0.value
        return report

    def describe(self) -> dict:
        return {"name": self.name, "n": self.n, "k": self.form.k, "param": self.param_name,
                "t_grid": list(self.t_grid), "tol": self.tol, **self.metadata}
