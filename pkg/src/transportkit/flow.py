"""Time-dependent flows of vector fields.

:class:`FlowMap` integrates ``q' = X_t(q)`` with an embedded Runge-Kutta
5(4) pair (Dormand-Prince) and proportional-integral step control.  Many
initial points are integrated at once, each with its own step size.
Tangent vectors are carried along by the variational equation
``J' = DX_t(q) J``; the product ``DX J`` is obtained in one dual-number
evaluation of the field seeded in the directions of J, so the Jacobian of
X is never formed.

:class:`ClosedFormFlow` wraps an explicit flow formula behind the same
interface, and :func:`advect_complex` turns a cell complex ``S0`` into the
advected complex ``S_t``.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import dual as dm
from .calculus import KFormFamily, TimeDepVectorField, pulled_back_coefficient, DegreeError
from .domains import CellComplex, CornerCell

__all__ = [
    "FlowMap",
    "ClosedFormFlow",
    "FlowResult",
    "AdvectionError",
    "AdvectedCell",
    "semigroup_residual",
    "advect_complex",
    "pullback_along_flow",
    "OK",
    "LEFT_DOMAIN",
    "BLOWUP",
    "STEP_LIMIT",
]

log = logging.getLogger(__name__)

OK, LEFT_DOMAIN, BLOWUP, STEP_LIMIT = "ok", "left_domain", "blowup", "step_limit"


class AdvectionError(RuntimeError):
    """A point of a cell could not be flowed to the requested time."""


@dataclass
class FlowResult:
    """Endpoints (n, N), optional tangent images (n, m, N) and per-point status."""

    endpoint: np.ndarray
    jacobian: np.ndarray | None
    status: np.ndarray
    steps: np.ndarray | None = None

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK

    @property
    def all_ok(self) -> bool:
        return bool(np.all(self.status == OK))


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_BHAT = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _BHAT


def _tangent_array(tangent, n: int, N: int, single: bool):
    """Normalise a tangent request to None or an (n, m, N) array."""
    if tangent is None:
        return None
    if isinstance(tangent, str):
        if tangent != "full":
            raise ValueError(f"unknown tangent option {tangent!r}")
        return np.repeat(np.eye(n)[:, :, None], N, axis=2)
    T = np.asarray(tangent, dtype=float)
    if single and T.ndim == 2:
        T = T[:, :, None]
    return np.array(np.broadcast_to(T, (n, T.shape[1], N)))


class FlowMap:
    """Numerical flow ``Phi_{t1,t0}`` of a time-dependent vector field.

    Parameters
    ----------
    field : TimeDepVectorField
    rel_tol, abs_tol : float
        Local error tolerances (applied to state and tangent alike).
    max_step : float
        Upper bound on |step|.
    max_steps : int
        Per-point step budget; exceeding it gives status ``step_limit``.
    blowup : float
        State-norm threshold for status ``blowup``.
    """

    def __init__(self, field: TimeDepVectorField, rel_tol: float = 1e-10, abs_tol: float = 1e-12,
                 max_step: float = math.inf, max_steps: int = 100000, blowup: float = 1e8):
        if not (rel_tol > 0 and abs_tol > 0):
            raise ValueError("tolerances must be positive")
        self.field = field
        self.n = field.n
        self.rel_tol = float(rel_tol)
        self.abs_tol = float(abs_tol)
        self.max_step = float(max_step)
        self.max_steps = int(max_steps)
        self.blowup = float(blowup)

    def __repr__(self):
        return f"<FlowMap n={self.n} rel_tol={self.rel_tol:g} abs_tol={self.abs_tol:g}>"

    # -- right-hand side ----------------------------------------------------------
    def _rhs(self, t, q, J):
        """Field values (n, M) and, if J is given, DX J of shape (n, m, M)."""
        if J is None:
            with np.errstate(all="ignore"):
                vals = [np.asarray(v, dtype=float) for v in self.field.evaluate_all(t, list(q))]
            shape = q.shape[1:]
            return np.array([np.broadcast_to(v, shape) for v in vals]), None
        m = J.shape[1]
        tag_holder = dm.seed([0.0])  # fresh tag for this evaluation
        tag = tag_holder[0].tag
        qd = [dm.Dual(q[i], [J[i, c] for c in range(m)], tag) for i in range(self.n)]
        shape = q.shape[1:]
        f = np.empty((self.n,) + shape)
        dJ = np.empty((self.n, m) + shape)
        with np.errstate(all="ignore"):
            for i, res in enumerate(self.field.evaluate_all(t, qd)):
                f[i] = dm.primal(res, tag)
                for c, g in enumerate(dm.partials(res, tag, m)):
                    dJ[i, c] = g
        return f, dJ

    # -- driver ----------------------------------------------------------------------
    def flow(self, t0: float, t1: float, q, tangent=None) -> FlowResult:
        """Flow points ``q`` of shape (n, N) (or (n,)) from t0 to t1.

        Parameters
        ----------
        tangent : None, "full" or array (n, m, N)
            Tangent vectors at q to push forward; ``"full"`` means the
            identity, so the result's ``jacobian`` is ``D Phi_{t1,t0}(q)``.
        """
        q = np.asarray(q, dtype=float)
        single = q.ndim == 1
        if single:
            q = q[:, None]
        n, N = q.shape
        if n != self.n:
            raise DegreeError(f"points live in R^{n}, field in R^{self.n}")
        J = _tangent_array(tangent, n, N, single)
        res = self._integrate(float(t0), float(t1), q.copy(), None if J is None else J.copy())
        if single:
            res = FlowResult(res.endpoint[:, 0], None if res.jacobian is None else res.jacobian[..., 0],
                             res.status[0], res.steps[:1])
        return res

    def flow_point(self, t0: float, t1: float, q, want_jacobian: bool = False) -> FlowResult:
        """Single-point convenience: ``jacobian`` is the full n x n matrix or None."""
        res = self.flow(t0, t1, np.asarray(q, dtype=float).reshape(-1), "full" if want_jacobian else None)
        if res.status != OK:
            res.jacobian = None
        return res

    def _integrate(self, t0, t1, q, J) -> FlowResult:
        n, N = q.shape
        status = np.full(N, OK, dtype=object)
        steps = np.zeros(N, dtype=int)
        if t0 == t1 or N == 0:
            return FlowResult(q, J, status.astype(str), steps)
        direction = 1.0 if t1 > t0 else -1.0
        span = abs(t1 - t0)
        m = 0 if J is None else J.shape[1]
        t = np.full(N, t0)
        f0, k0J = self._rhs(t, q, J)
        h = self._initial_step(t, q, J, f0, k0J, direction, span)
        err_old = np.full(N, 1e-4)
        k_first = f0
        kJ_first = k0J
        active = np.all(np.isfinite(f0), axis=0)
        if J is not None:
            active &= np.all(np.isfinite(k0J), axis=(0, 1))
        status[~active] = LEFT_DOMAIN

        while True:
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            # slices (views) instead of gathers while every point is still active
            sel = slice(None) if idx.size == N else idx
            ta = t[sel]
            ha = h[sel]
            remaining = np.abs(t1 - ta)
            ha = direction * np.minimum(np.abs(ha), remaining)
            ha = direction * np.minimum(np.abs(ha), self.max_step)
            ya = q[:, sel]
            Ja = None if J is None else J[:, :, sel]
            ks = [k_first[:, sel]]
            kJs = None if J is None else [kJ_first[:, :, sel]]
            for s in range(1, 7):
                ys = ya.copy()
                Js = None if J is None else Ja.copy()
                for j, a in enumerate(_A[s]):
                    if a:
                        ys += (ha * a) * ks[j]
                        if J is not None:
                            Js += (ha * a) * kJs[j]
                f, fJ = self._rhs(ta + _C[s] * ha, ys, Js)
                ks.append(f)
                if J is not None:
                    kJs.append(fJ)
            ynew = ys  # stage 7 point = 5th-order solution (FSAL)
            Jnew = Js
            ey = sum((ha * _E[j]) * ks[j] for j in range(7) if _E[j])
            scale = self.abs_tol + self.rel_tol * np.maximum(np.abs(ya), np.abs(ynew))
            err2 = np.sum((ey / scale) ** 2, axis=0)
            cnt = n
            if J is not None:
                eJ = sum((ha * _E[j]) * kJs[j] for j in range(7) if _E[j])
                sJ = self.abs_tol + self.rel_tol * np.maximum(np.abs(Ja), np.abs(Jnew))
                err2 = err2 + np.sum((eJ / sJ) ** 2, axis=(0, 1))
                cnt += n * m
            err = np.sqrt(err2 / cnt)
            finite = np.isfinite(err) & np.all(np.isfinite(ynew), axis=0)
            # non-finite trial: shrink hard; persistently non-finite means the trajectory left the domain
            err = np.where(finite, err, np.inf)
            accept = err <= 1.0
            # PI controller (Hairer's DOPRI5 constants)
            beta = 0.04
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                fac11 = np.where(finite, np.maximum(err, 1e-300) ** (0.2 - 0.75 * beta), 10.0)
                fac = fac11 / err_old[idx] ** beta
                fac = np.clip(fac / 0.9, 0.2, 10.0)
                fac_rej = np.minimum(10.0, fac11 / 0.9)
            hnew = np.where(accept, ha / fac, ha / fac_rej)
            hnew = np.where(~finite, ha * 0.2, hnew)

            acc_idx = idx[accept]
            tn = ta[accept] + ha[accept]
            t[acc_idx] = np.where(np.abs(t1 - tn) <= 1e-15 * max(1.0, abs(t1)), t1, tn)
            if accept.all():
                q[:, sel] = ynew
                k_first[:, sel] = ks[6]
                if J is not None:
                    J[:, :, sel] = Jnew
                    kJ_first[:, :, sel] = kJs[6]
            else:
                q[:, acc_idx] = ynew[:, accept]
                k_first[:, acc_idx] = ks[6][:, accept]
                if J is not None:
                    J[:, :, acc_idx] = Jnew[:, :, accept]
                    kJ_first[:, :, acc_idx] = kJs[6][:, :, accept]
            err_old[acc_idx] = np.maximum(err[accept], 1e-4)
            h[idx] = hnew
            steps[idx] += 1

            done = np.abs(t - t1) == 0
            norms = np.sqrt(np.sum(q[:, idx] ** 2, axis=0))
            blow = (norms > self.blowup) & ~done[idx]
            tiny = np.abs(hnew) < 1e-14 * np.maximum(1.0, np.abs(ta))
            lim = steps[idx] >= self.max_steps
            status[idx[blow]] = BLOWUP
            left = tiny & ~blow & ~done[idx]
            status[idx[left]] = LEFT_DOMAIN
            status[idx[lim & ~blow & ~left & ~done[idx]]] = STEP_LIMIT
            active[idx] = ~done[idx] & (status[idx] == OK)

        ok = status == OK
        if J is not None:
            J[:, :, ~ok] = np.nan
        return FlowResult(q, J, status.astype(str), steps)

    def _initial_step(self, t, q, J, f0, fJ0, direction, span):
        """Hairer's starting-step heuristic, per point."""
        sc = self.abs_tol + self.rel_tol * np.abs(q)
        d0 = np.sqrt(np.mean((q / sc) ** 2, axis=0))
        d1 = np.sqrt(np.mean((f0 / sc) ** 2, axis=0))
        with np.errstate(all="ignore"):
            h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / d1)
            h0 = np.minimum(h0, span)
            y1 = q + direction * h0 * f0
            f1, _ = self._rhs(t + direction * h0, y1, None)
            d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2, axis=0)) / h0
            dm_ = np.maximum(d1, d2)
            h1 = np.where(dm_ <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / dm_) ** 0.2)
            h = np.minimum(100 * h0, h1)
        h = np.where(np.isfinite(h) & (h > 0), h, 1e-6)
        h = np.minimum(h, span)
        return direction * h


class ClosedFormFlow:
    """An explicit autonomous flow ``Phi_r(q)`` behind the :class:`FlowMap` interface.

    Parameters
    ----------
    fn : callable
        ``fn(r, q) -> sequence of n outputs``, written with numpy calls so
        that it accepts dual numbers in both r and q.
    n : int
    valid : callable, optional
        ``valid(r, q) -> bool mask`` of points where ``Phi_r`` is defined.
    """

    def __init__(self, fn: Callable, n: int, valid: Callable | None = None):
        self.fn = fn
        self.n = n
        self.valid = valid

    def __call__(self, r, q):
        return self.fn(r, q)

    def flow(self, t0: float, t1: float, q, tangent=None) -> FlowResult:
        q = np.asarray(q, dtype=float)
        single = q.ndim == 1
        if single:
            q = q[:, None]
        n, N = q.shape
        r = float(t1) - float(t0)
        ok = np.ones(N, dtype=bool) if self.valid is None else np.asarray(self.valid(r, q), dtype=bool)
        status = np.where(ok, OK, LEFT_DOMAIN).astype(str)
        if r == 0:
            out = FlowResult(q.copy(), _tangent_array(tangent, n, N, single), status, None)
        else:
            out = self._eval(r, q, tangent, single, ok, status)
        if single:
            return FlowResult(out.endpoint[:, 0], None if out.jacobian is None else out.jacobian[..., 0],
                              out.status[0], None)
        return out

    def _eval(self, r, q, tangent, single, ok, status):
        n, N = q.shape
        with np.errstate(all="ignore"):
            if tangent is None:
                vals = self.fn(r, list(q))
                x = np.array([np.broadcast_to(np.asarray(v, dtype=float), (N,)) for v in vals])
                J = None
            else:
                T = _tangent_array(tangent, n, N, single)
                m = T.shape[1]
                tag = dm.seed([0.0])[0].tag
                qd = [dm.Dual(q[i], [T[i, c] for c in range(m)], tag) for i in range(n)]
                vals = self.fn(r, qd)
                x = np.empty((n, N))
                J = np.empty((n, m, N))
                for i, v in enumerate(vals):
                    x[i] = dm.primal(v, tag)
                    for c, g in enumerate(dm.partials(v, tag, m)):
                        J[i, c] = g
        bad = ~np.all(np.isfinite(x), axis=0)
        status = np.where(bad & ok, LEFT_DOMAIN, status).astype(str)
        if J is not None:
            J[:, :, status != OK] = np.nan
        return FlowResult(x, J, status, None)

    def flow_point(self, t0, t1, q, want_jacobian=False) -> FlowResult:
        res = self.flow(t0, t1, np.asarray(q, dtype=float).reshape(-1), "full" if want_jacobian else None)
        if res.status != OK:
            res.jacobian = None
        return res

    def generator(self) -> TimeDepVectorField:
        """The vector field ``X = d/dr Phi_r |_{r=0}``, exact via dual numbers."""

        def make(i):
            def comp(t, q):
                (rs,) = dm.seed([0.0])
                out = self.fn(rs, q)[i]
                return dm.partials(out, rs.tag, 1)[0]

            return comp

        def joint(t, q):
            (rs,) = dm.seed([0.0])
            return [dm.partials(o, rs.tag, 1)[0] for o in self.fn(rs, q)]

        return TimeDepVectorField([make(i) for i in range(self.n)], time_dependent=False, joint=joint)


def semigroup_residual(F, t1: float, t2: float, t3: float, q) -> float:
    """``|Phi_{t3,t2}(Phi_{t2,t1}(q)) - Phi_{t3,t1}(q)|`` (max over points)."""
    a = F.flow(t1, t2, q)
    if not np.all(a.status == OK):
        raise AdvectionError(f"flow from {t1} to {t2} failed: {np.unique(a.status).tolist()}")
    b = F.flow(t2, t3, a.endpoint)
    c = F.flow(t1, t3, q)
    if not (np.all(b.status == OK) and np.all(c.status == OK)):
        raise AdvectionError("composed flow failed")
    d = np.asarray(b.endpoint - c.endpoint)
    return float(np.max(np.sqrt(np.sum(d ** 2, axis=0))))


class AdvectedCell(CornerCell):
    """The cell ``Phi_{t,t0} o psi``; evaluation integrates the flow from each parameter point."""

    def __init__(self, base: CornerCell, F, t: float, t0: float = 0.0):
        super().__init__(base.bounds, None, base.n, base.orientation_sign, name=f"{base.name}@{t:g}")
        self.base = base
        self.F = F
        self.t = float(t)
        self.t0 = float(t0)
        self.embed = self._embed

    def _embed(self, p):
        if any(dm.is_dual(v) for v in p):
            raise TypeError("advected cells are evaluated numerically; use evaluate_with_jacobian")
        return list(self.evaluate(np.asarray(p, dtype=float)))

    def _fail(self, res, p):
        bad = np.nonzero(res.status != OK)[0]
        j = int(bad[0])
        raise AdvectionError(
            f"cell {self.base.name!r}: parameter point {np.asarray(p)[:, j].tolist()} cannot be flowed "
            f"from {self.t0:g} to {self.t:g} (status {res.status[j]})"
        )

    def evaluate(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        x0 = self.base.evaluate(p)
        res = self.F.flow(self.t0, self.t, x0)
        if not np.all(res.status == OK):
            self._fail(res, p)
        return res.endpoint

    def evaluate_with_jacobian(self, p):
        p = np.asarray(p, dtype=float)
        x0, J0 = self.base.evaluate_with_jacobian(p)
        res = self.F.flow(self.t0, self.t, x0, tangent=J0)
        if not np.all(res.status == OK):
            self._fail(res, p)
        return res.endpoint, res.jacobian

    def _copy(self):
        c = object.__new__(type(self))
        c.__dict__.update(self.__dict__)
        c.embed = c._embed
        return c


def advect_complex(F, S0: CellComplex, t: float, t0: float = 0.0) -> CellComplex:
    """``S_t = Phi_{t,t0}(S0)``, evaluated lazily; orientations are carried over."""
    return S0.map_cells(lambda c: AdvectedCell(c, F, t, t0))


def pullback_along_flow(F, a: KFormFamily, t: float, cell: CornerCell, t0: float = 0.0) -> KFormFamily:
    """``(Phi_{t,t0} o psi)^* a_t`` as a form on the cell's parameter box.

    The components evaluate numerically (on plain arrays of parameter
    points); they are not differentiable with dual numbers.
    """
    if a.n != cell.n:
        raise DegreeError("form and cell live in different ambient spaces")
    if a.k > cell.k:
        raise DegreeError("form degree exceeds cell dimension")
    adv = AdvectedCell(cell, F, t, t0)

    def make(Jidx):
        def comp(s, p):
            p = np.asarray([np.asarray(v, dtype=float) for v in p])
            shape = p.shape[1:]
            flat = p.reshape(p.shape[0], -1)
            x, M = adv.evaluate_with_jacobian(flat)
            Msub = M[:, list(Jidx), :]
            return pulled_back_coefficient(a, t, x, Msub).reshape(shape)

        return comp

    comps = {J: make(J) for J in itertools.combinations(range(cell.k), a.k)}
    return KFormFamily(cell.k, a.k, comps, time_dependent=False)
