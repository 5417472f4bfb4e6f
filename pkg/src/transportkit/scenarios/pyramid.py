"""Gaussian mass of a lattice of disjoint pyramids (a pure integration job)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from ..calculus import DensityField
from ..domains import make_pyramid_lattice, pyramid_gaussian_tail
from ..quadrature import QuadratureResult, integrate_density

__all__ = ["PyramidJob", "PyramidReport", "pyramid_gaussian", "single_pyramid_reference"]


def _gauss(t, x):
    return np.exp(-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]))


def single_pyramid_reference(L: float) -> float:
    """Gaussian mass of the centre pyramid by slicing: ``pi * int_0^L e^{-z^2} erf(h(z))^2 dz``."""
    def f(zv):
        h = 0.5 * L * (1.0 - zv / L)
        return np.exp(-zv * zv) * special.erf(h) ** 2

    val, _ = integrate.quad(f, 0.0, L, epsabs=1e-15, epsrel=1e-14, limit=200)
    return float(np.pi * val)


@dataclass
class PyramidReport:
    L: float
    radius: int | None
    value: float
    abs_error_estimate: float
    tail_bound: float
    converged: bool
    series: list = field(default_factory=list)
    quadrature: QuadratureResult | None = None


@dataclass
class PyramidJob:
    L: float = 1.0
    radius: int | None = 0
    name: str = "pyramid-gaussian"

    def run(self, tol: float = 1e-8) -> PyramidReport:
        S = make_pyramid_lattice(self.L, self.radius)
        res = integrate_density(DensityField.from_ambient(_gauss), S, tol)
        vals = res.cell_values
        series = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        tail = S.tail_bound if S.tail_bound is not None else res.tail_estimate
        return PyramidReport(self.L, self.radius, res.value, res.abs_error_estimate, float(tail),
                             res.converged, series, res)


def pyramid_gaussian(L: float = 1.0, radius: int | None = 0) -> PyramidJob:
    """Integration job for ``exp(-|x|^2)`` over the pyramid lattice.

    ``radius=None`` integrates the infinite lattice shell by shell.
    """
    return PyramidJob(float(L), radius)
