"""Mass transport through a linearly polarised gravitational sandwich wave.

Coordinates on R^4 are ``(t, x, y, z)`` with the retarded time
``u = t - x``.  The wave profile is the bump ``beta`` of width ``sigma``
centred at ``u0``, and the auxiliary function is

    phi(u) = 1/2 * integral from u0 - sigma/2 to u of v * beta'(v)**2 dv.

The flow ``Phi_r`` is explicit and moves ``u`` to ``u / (1 - u r)``; the
vector field X is its r-derivative at r = 0.  The 3-form ``alpha`` below
satisfies ``X . alpha = 0`` and ``d alpha = 0`` identically, so the mass
``M(r)`` of the advected slab is conserved.
"""
from __future__ import annotations

import numpy as np

from .. import dual as dm
from ..calculus import KFormFamily
from ..domains import DomainSpecError, make_wave_slab
from ..flow import ClosedFormFlow, FlowMap
from .base import Scenario

__all__ = ["SandwichWave", "sandwich_wave"]

_SMALL_U = 1e-6


class SandwichWave:
    """Closed-form objects of the wave spacetime for given constants."""

    def __init__(self, u0: float = 1.0, sigma: float = 1.0, a0: float = 1.0, b0: float = 1.0,
                 grid: int = 256, order: int = 16):
        if not 0 < sigma / 2 < u0:
            raise DomainSpecError(f"need 0 < sigma/2 < u0, got sigma={sigma}, u0={u0}")
        if not (a0 > 0 and b0 > 0):
            raise DomainSpecError("a0 and b0 must be positive")
        self.u0, self.sigma, self.a0, self.b0 = float(u0), float(sigma), float(a0), float(b0)
        self.hw = 0.5 * self.sigma
        self.lo = self.u0 - self.hw
        self.hi = self.u0 + self.hw
        self._gl_x, self._gl_w = np.polynomial.legendre.leggauss(order)
        self._edges = np.linspace(self.lo, self.hi, grid + 1)
        self._cum = np.concatenate([[0.0], np.cumsum(self._segment(self._edges[:-1], self._edges[1:]))])

    # -- profile -------------------------------------------------------------------
    def beta(self, u):
        s = (u - self.u0) / self.hw
        inside = np.abs(dm.value_of(s)) < 1.0
        ss = dm.where(inside, s, 0.0)
        return dm.where(inside, np.exp(-1.0 / (1.0 - ss * ss)), 0.0)

    def dbeta(self, u):
        s = (u - self.u0) / self.hw
        inside = np.abs(dm.value_of(s)) < 1.0
        ss = dm.where(inside, s, 0.0)
        w = 1.0 - ss * ss
        val = np.exp(-1.0 / w) * (-2.0 * ss / (w * w)) / self.hw
        return dm.where(inside, val, 0.0)

    def dphi(self, u):
        b = self.dbeta(u)
        return 0.5 * u * b * b

    def _segment(self, a, b):
        """Gauss-Legendre integral of phi' over [a, b] (arrays)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        nodes = mid[..., None] + half[..., None] * self._gl_x
        return half * np.sum(self._gl_w * self.dphi(nodes), axis=-1)

    def phi(self, u):
        """Auxiliary function; exact derivatives through dual numbers."""
        if dm.is_dual(u):
            return u._chain(self.phi(u.val), self.dphi(u.val))
        u = np.asarray(u, dtype=float)
        uc = np.clip(u, self.lo, self.hi)
        j = np.clip(np.searchsorted(self._edges, uc, side="right") - 1, 0, len(self._edges) - 2)
        out = self._cum[j] + self._segment(self._edges[j], uc)
        out = np.where(u >= self.hi, self._cum[-1], out)
        out = np.where(u <= self.lo, 0.0, out)
        return out if out.ndim else float(out)

    # -- flow ------------------------------------------------------------------------
    def flow_map(self, r, q):
        """``Phi_r(t, x, y, z)``; accepts dual numbers in r and q."""
        t, x, y, z = q
        u = t - x
        D = 1.0 - u * r
        U = u / D
        phr = self.phi(U)
        dphi = phr - self.phi(u)
        dbeta = self.beta(U) - self.beta(u)
        e2 = np.exp(2.0 * phr)
        g = np.exp(2.0 * dphi)
        # (y^2 e^{2 db} / D - g y^2) / u and its z analogue, in a form without 0/0
        small = np.abs(dm.value_of(u)) < _SMALL_U
        us = dm.where(small, 1.0, u)
        kp = np.expm1(2.0 * dbeta) / us
        km = np.expm1(-2.0 * dbeta) / us
        kphi = np.expm1(2.0 * dphi) / us
        if np.any(small):
            bp = self.dbeta(u)
            ser_b = 2.0 * bp * u * r / D
            ser_phi = u * u * bp * bp * r / D
            kp = dm.where(small, ser_b, kp)
            km = dm.where(small, -ser_b, km)
            kphi = dm.where(small, ser_phi, kphi)
        Kp = (kp - kphi + r * g) / D
        Km = (km - kphi + r * g) / D
        common = 0.5 * g * (t + x) - 0.5 * e2 * u + 0.5 * (y * y * Kp + z * z * Km)
        T = 0.5 * (e2 + 1.0) * U + common
        Xc = 0.5 * (e2 - 1.0) * U + common
        Y = np.exp(dbeta) * y / D
        Z = np.exp(-dbeta) * z / D
        return [T, Xc, Y, Z]

    def admissible(self, r, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        u = q[0] - q[1]
        return 1.0 - u * r > 0

    # -- the form ------------------------------------------------------------------
    def _pieces(self, q):
        t, x, y, z = q
        u = t - x
        ph = self.phi(u)
        b = self.beta(u)
        bp = self.dbeta(u)
        xx = x * x + y * y + z * z
        c = self.lo
        w = (xx - t * t) * np.exp(-2.0 * ph) / u + u - c
        den = z * z * np.exp(2.0 * b) + y * y * np.exp(-2.0 * b)
        om = (0.5 * self.a0) * np.exp(-2.0 * ph - w * w / (4.0 * self.b0)) / (den * den)
        common = (t * t - xx) * bp * bp * u * u + 2.0 * u * (y * y - z * z) * bp + y * y + z * z
        e2 = np.exp(2.0 * ph)
        return u, bp, om, e2, common

    def alpha(self) -> KFormFamily:
        """The conserved 3-form on R^4 (time independent)."""

        def a123(s, q):
            u, bp, om, e2, common = self._pieces(q)
            return om * ((e2 + 1.0) * u * u + common)

        def a023(s, q):
            u, bp, om, e2, common = self._pieces(q)
            return -om * ((e2 - 1.0) * u * u + common)

        def a013(s, q):
            u, bp, om, e2, common = self._pieces(q)
            return 2.0 * om * (u + u * u * bp) * q[2]

        def a012(s, q):
            u, bp, om, e2, common = self._pieces(q)
            return -2.0 * om * (u - u * u * bp) * q[3]

        return KFormFamily(4, 3, {(1, 2, 3): a123, (0, 2, 3): a023, (0, 1, 3): a013, (0, 1, 2): a012},
                           time_dependent=False, name="wave-alpha")

    def closed_flow(self) -> ClosedFormFlow:
        return ClosedFormFlow(self.flow_map, 4, self.admissible)

    @property
    def r_max(self) -> float:
        """Supremum of admissible flow parameters on the initial slab."""
        return 1.0 / (self.u0 - self.hw)


def sandwich_wave(u0: float = 1.0, sigma: float = 1.0, a0: float = 1.0, b0: float = 1.0, R: float = 1.0,
                  r_grid=None, tol: float = 1e-6) -> Scenario:
    """The wave scenario: slab of matter with a cylindrical hole, advected through the wave.

    The closed-form flow drives the run; an ODE flow of the generated field
    is attached as ``extras['ode_flow']`` for cross-validation.
    """
    W = SandwichWave(u0, sigma, a0, b0)
    S0 = make_wave_slab(u0, sigma, R)
    flow = W.closed_flow()
    X = flow.generator()
    X.name = "wave-X"
    r_max = W.r_max
    if r_grid is None:
        r_grid = [-0.5, -0.25, 0.0, 0.25, 0.5, 0.8, 1.0, 1.5]
    r_grid = [float(r) for r in r_grid]
    bad = [r for r in r_grid if not r < r_max]
    if bad:
        raise DomainSpecError(f"flow parameters {bad} outside the admissible range r < {r_max:g}")
    lo = min(min(r_grid), 0.0)
    hi = max(max(r_grid), 0.0)
    return Scenario(
        name="sandwich-wave",
        n=4,
        S0=S0,
        form=W.alpha(),
        field=X,
        flow=flow,
        t_interval=(lo, hi),
        t_grid=r_grid,
        tol=tol,
        param_name="r",
        metadata={"u0": u0, "sigma": sigma, "a0": a0, "b0": b0, "R": R,
                  "phi": "1/2 int v beta'(v)^2", "beta_r": "beta(u/(1-u r)) (interpretive reading)",
                  "r_max": r_max},
        extras={"wave": W, "ode_flow": FlowMap(X, rel_tol=1e-11, abs_tol=1e-13)},
        exact={"integral_rate": lambda r: 0.0},
        residual_tol=1e-3,
    )
