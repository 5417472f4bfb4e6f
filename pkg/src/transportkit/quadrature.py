"""Adaptive integration of forms and densities over cell complexes.

Every cell's parameter box is integrated with a tensor-product 7/15-point
Gauss-Kronrod rule and refined by bisecting, one box at a time, the box
with the largest error estimate along its worst axis.  All boxes of all
cells share one priority queue.

Unbounded axes are mapped to bounded ones by ``x = a + tan(y)`` (or
``x = tan(y)`` on the whole line), and the transformed axis is consumed in
*levels*: level 0 covers ``y in [0, pi/4]``, level ``L`` reaches
``y = pi/2 - pi/2**(L+2)``.  Each level adds a ring of boxes, and the
absolute contributions of successive rings are fed into a geometric-decay
test which either bounds the remaining tail or, if the contributions keep
failing to decay, declares the integral divergent.  Infinite lattices of
cells (a complex with a ``shells`` generator) are consumed in the same
way, one shell per level.

The per-box error estimate is the sum over axes of
``|K15 - (G7 on that axis, K15 elsewhere)|``; it is conservative for
smooth integrands.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .calculus import DensityField, KFormFamily, pulled_back_coefficient, DegreeError
from .domains import CellComplex, CornerCell, as_complex

__all__ = [
    "QuadratureResult",
    "FixedRule",
    "IntegrandDomainError",
    "DivergenceError",
    "InvariantViolationError",
    "integrate_cell",
    "integrate_cells",
    "integrate_form",
    "integrate_density",
    "form_integrand",
    "GK15_NODES",
    "GK15_WEIGHTS",
    "G7_WEIGHTS",
]

log = logging.getLogger(__name__)

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

GK15_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK15_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss weights on the 15-point grid (zero at Kronrod-only nodes)
_wg_half = np.zeros(8)
_wg_half[1::2] = _WG
G7_WEIGHTS = np.concatenate([_wg_half[:-1], _wg_half[::-1]])
_DW = GK15_WEIGHTS - G7_WEIGHTS

_EPS = np.finfo(float).eps


class IntegrandDomainError(ValueError):
    """The integrand is not finite at an interior quadrature node."""


class DivergenceError(ArithmeticError):
    """Contributions of successive shells fail to decay: not absolutely integrable."""

    def __init__(self, message: str, contributions: Sequence[float] = ()):
        super().__init__(message)
        self.contributions = list(contributions)


class InvariantViolationError(ValueError):
    """A density took a negative value."""


@dataclass
class FixedRule:
    """Frozen quadrature nodes: per cell, parameter points and weights.

    Reusing the nodes of an adapted rule at nearby parameter values gives
    integrals that depend smoothly on the parameter, which is what finite
    differences in time need.
    """

    cells: list
    points: list  # per cell, (k, N) parameter points
    weights: list  # per cell, (N,) weights including the substitution Jacobian

    def apply(self, integrand: Callable) -> float:
        """``sum_c sum_i w_i integrand(c_index, cell, p)_i``."""
        total = 0.0
        for ci, (cell, p, w) in enumerate(zip(self.cells, self.points, self.weights)):
            if w.size:
                total += float(np.dot(w, integrand(ci, cell, p)))
        return total

    @property
    def size(self) -> int:
        return int(sum(w.size for w in self.weights))


@dataclass
class QuadratureResult:
    value: float
    abs_error_estimate: float
    abs_integral: float
    cells_evaluated: int
    subdivisions: int
    converged: bool
    levels: int = 0
    tail_estimate: float = 0.0
    contributions: list = field(default_factory=list)
    cell_values: list = field(default_factory=list)
    rule: FixedRule | None = None
    message: str = ""

    def __float__(self):
        return float(self.value)


# -- axis substitution ----------------------------------------------------------

def _theta(level: int) -> float:
    return math.pi / 2 - math.pi / 2 ** (level + 2)


def _axis_range(kind: str, level: int) -> tuple[float, float]:
    th = _theta(level)
    if kind == "finite":
        return (-1.0, 1.0)  # placeholder, finite axes use their own bounds
    if kind == "infinite":
        return (-th, th)
    return (0.0, th)


def _axis_pieces(kind: str, level: int) -> list[tuple[float, float, bool]]:
    """Pieces of a transformed axis at `level`; the flag marks pieces new at this level."""
    if level == 0:
        lo, hi = _axis_range(kind, 0)
        return [(lo, hi, True)]
    a, b = _theta(level - 1), _theta(level)
    if kind == "infinite":
        return [(-a, a, False), (-b, -a, True), (a, b, True)]
    return [(0.0, a, False), (a, b, True)]


def _to_parameter(cell: CornerCell, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map transformed coordinates to parameters; returns (p, dp/dy product)."""
    p = np.empty_like(y)
    jac = np.ones(y.shape[1:])
    for i, b in enumerate(cell.bounds):
        kind = b.kind
        if kind == "finite":
            p[i] = y[i]
            continue
        c = np.cos(y[i])
        tn = np.tan(y[i])
        if kind == "lower":
            p[i] = b.lower + tn
        elif kind == "upper":
            p[i] = b.upper - tn
        else:
            p[i] = tn
        jac = jac / (c * c)
    return p, jac


def _level_boxes(cell: CornerCell, level: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Boxes (in transformed coordinates) that `level` adds for one cell."""
    kinds = [b.kind for b in cell.bounds]
    unbounded = [i for i, kd in enumerate(kinds) if kd != "finite"]
    if level > 0 and not unbounded:
        return []
    per_axis = []
    for i, b in enumerate(cell.bounds):
        if kinds[i] == "finite":
            per_axis.append([(b.lower, b.upper, False)])
        else:
            per_axis.append(_axis_pieces(kinds[i], level))
    out = []
    for combo in itertools.product(*per_axis):
        if level > 0 and not any(piece[2] for piece in combo):
            continue
        lo = np.array([piece[0] for piece in combo])
        hi = np.array([piece[1] for piece in combo])
        out.append((lo, hi))
    return out


# -- the adaptive core ----------------------------------------------------------

class _Queue:
    """All live boxes of one level, processed largest-error first."""

    def __init__(self):
        self.lo: list[np.ndarray] = []
        self.hi: list[np.ndarray] = []
        self.cell: list[int] = []
        self.val: list[float] = []
        self.abs: list[float] = []
        self.err: list[float] = []
        self.axis_err: list[np.ndarray] = []
        self.serial: list[int] = []
        self.alive: list[bool] = []
        self._n = 0

    def add(self, ci, lo, hi, val, aval, err, aerr):
        self.lo.append(lo)
        self.hi.append(hi)
        self.cell.append(ci)
        self.val.append(val)
        self.abs.append(aval)
        self.err.append(err)
        self.axis_err.append(aerr)
        self.serial.append(self._n)
        self.alive.append(True)
        self._n += 1


def _tensor_nodes(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (k, B*15^k) for boxes lo/hi of shape (B, k), plus half-widths (B, k)."""
    B, k = lo.shape
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    grids = np.meshgrid(*([GK15_NODES] * k), indexing="ij")
    xi = np.stack([g.ravel() for g in grids])  # (k, 15^k)
    y = c.T[:, :, None] + h.T[:, :, None] * xi[:, None, :]  # (k, B, 15^k)
    return y.reshape(k, -1), h


def _contract(F: np.ndarray, weights: list[np.ndarray]) -> np.ndarray:
    """Contract F of shape (B, 15, ..., 15) against one weight vector per axis."""
    out = F
    for w in reversed(weights):
        out = out @ w
    return out


def _evaluate_boxes(cells, integrand, ci: int, lo: np.ndarray, hi: np.ndarray):
    cell = cells[ci]
    B, k = lo.shape
    y, h = _tensor_nodes(lo, hi)
    p, tj = _to_parameter(cell, y)
    with np.errstate(over="ignore", invalid="ignore"):
        f = np.asarray(integrand(ci, cell, p), dtype=float)
        f = np.broadcast_to(f, tj.shape) * tj
    if not np.all(np.isfinite(f)):
        j = int(np.argmin(np.isfinite(f)))
        raise IntegrandDomainError(
            f"integrand not finite ({f[j]}) on cell {ci} {cell.name!r} at parameter point {p[:, j].tolist()}"
        )
    F = f.reshape((B,) + (15,) * k)
    vol = np.prod(h, axis=1)
    wK = [GK15_WEIGHTS] * k
    val = _contract(F, wK) * vol
    aval = _contract(np.abs(F), wK) * vol
    aerr = np.empty((B, k))
    for j in range(k):
        w = list(wK)
        w[j] = _DW
        aerr[:, j] = np.abs(_contract(F, w) * vol)
    return val, aval, aerr


def _adapt(cells, integrand, boxes: list[tuple[int, np.ndarray, np.ndarray]], tol: float,
           budget: list[int], batch: int, want_rule: bool):
    """Refine `boxes` until the summed error estimate is below `tol`.

    ``budget`` is a one-element list holding the remaining number of
    subdivisions (shared across levels).
    """
    q = _Queue()
    evaluated_cells = set()

    def run(items):
        by_cell: dict[int, list] = {}
        for order, (ci, lo, hi) in enumerate(items):
            by_cell.setdefault(ci, []).append((order, lo, hi))
        results = [None] * len(items)
        for ci in sorted(by_cell):
            group = by_cell[ci]
            lo = np.array([g[1] for g in group])
            hi = np.array([g[2] for g in group])
            val, aval, aerr = _evaluate_boxes(cells, integrand, ci, lo, hi)
            evaluated_cells.add(ci)
            for j, g in enumerate(group):
                results[g[0]] = (ci, g[1], g[2], val[j], aval[j], aerr[j])
        for ci, lo, hi, val, aval, aerr in results:
            q.add(ci, lo, hi, float(val), float(aval), float(aerr.sum()), aerr)

    run(boxes)
    subdivisions = 0
    while True:
        err = np.array(q.err)
        alive = np.array(q.alive)
        absv = np.array(q.abs)
        total = float(err[alive].sum())
        if total <= tol:
            break
        splittable = alive & (err > 50 * _EPS * absv) & (err > 0)
        if not splittable.any() or budget[0] <= 0:
            break
        idx = np.nonzero(splittable)[0]
        emax = err[idx].max()
        cand = idx[err[idx] >= 0.25 * emax]
        cells_arr = np.array(q.cell)
        order = np.lexsort((np.array(q.serial)[cand], cells_arr[cand], -err[cand]))
        chosen = cand[order][: min(batch, budget[0])]
        children = []
        for b in chosen:
            q.alive[b] = False
            axis = int(np.argmax(q.axis_err[b]))
            lo, hi = q.lo[b], q.hi[b]
            mid = 0.5 * (lo[axis] + hi[axis])
            hi1 = hi.copy()
            hi1[axis] = mid
            lo2 = lo.copy()
            lo2[axis] = mid
            children.append((q.cell[b], lo, hi1))
            children.append((q.cell[b], lo2, hi))
        budget[0] -= len(chosen)
        subdivisions += len(chosen)
        run(children)

    alive = np.array(q.alive)
    val = np.array(q.val)[alive]
    aval = np.array(q.abs)[alive]
    err = np.array(q.err)[alive]
    cells_alive = np.array(q.cell)[alive]
    per_cell = {}
    for ci, v in zip(cells_alive, val):
        per_cell[int(ci)] = per_cell.get(int(ci), 0.0) + float(v)
    rule_parts: dict[int, list] = {}
    if want_rule:
        lo_all = [q.lo[i] for i in np.nonzero(alive)[0]]
        hi_all = [q.hi[i] for i in np.nonzero(alive)[0]]
        for ci in sorted(set(int(c) for c in cells_alive)):
            sel = [j for j, c in enumerate(cells_alive) if c == ci]
            lo = np.array([lo_all[j] for j in sel])
            hi = np.array([hi_all[j] for j in sel])
            y, h = _tensor_nodes(lo, hi)
            p, tj = _to_parameter(cells[ci], y)
            k = lo.shape[1]
            W = GK15_WEIGHTS
            for _ in range(k - 1):
                W = np.multiply.outer(W, GK15_WEIGHTS)
            w_all = (np.prod(h, axis=1)[:, None] * W.ravel()[None, :]).ravel() * tj
            rule_parts[ci] = [(p, w_all)]
    total_err = float(err.sum())
    return {
        "value": float(math.fsum(val)),
        "abs": float(math.fsum(aval)),
        "err": total_err,
        "subdivisions": subdivisions,
        "converged": total_err <= tol,
        "per_cell": per_cell,
        "rule": rule_parts,
        "evaluated": evaluated_cells,
    }


def integrate_cells(S, integrand: Callable, tol: float = 1e-8, *, max_subdivisions: int = 20000,
                    batch: int = 256, window: int = 8, decay_ratio: float = 0.9,
                    max_level: int = 45, keep_rule: bool = False) -> QuadratureResult:
    """Integrate ``integrand(cell_index, cell, p)`` over the parameter boxes of `S`.

    Parameters
    ----------
    S : CellComplex or CornerCell
    integrand : callable
        Returns values at parameter points ``p`` of shape (k, N).
    tol : float
        Absolute tolerance on the total (quadrature error plus tail).
    window : int
        Number of consecutive non-decaying levels after which the integral
        is declared divergent.
    keep_rule : bool
        Attach the final nodes and weights as a :class:`FixedRule`.

    Raises
    ------
    IntegrandDomainError
        Non-finite integrand at a node.
    DivergenceError
        Level contributions stop decaying.
    """
    S = as_complex(S)
    if not tol > 0:
        raise ValueError("tol must be positive")
    cells: list[CornerCell] = list(S.cells)
    introduced = {i: 0 for i in range(len(cells))}
    budget = [int(max_subdivisions)]
    converged = True
    contributions: list[float] = []
    per_cell: dict[int, float] = {}
    rule_points: dict[int, list] = {}
    evaluated: set = set()
    tail = 0.0
    nondecay = 0
    message = ""
    level = 0
    deferred: list = []
    results: list = []

    while True:
        boxes = []
        for ci, cell in enumerate(cells):
            start = introduced[ci]
            if start == level:
                for lv in range(0, level + 1):
                    boxes.extend((ci, lo, hi) for lo, hi in _level_boxes(cell, lv))
            else:
                boxes.extend((ci, lo, hi) for lo, hi in _level_boxes(cell, level))
        if level > 0 and S.shells is not None:
            for cell in S.shells(level):
                if cell.k != S.k or cell.n != S.n:
                    raise DegreeError("shell cell has the wrong dimension")
                cells.append(cell)
                ci = len(cells) - 1
                introduced[ci] = level
                for lv in range(0, level + 1):
                    boxes.extend((ci, lo, hi) for lo, hi in _level_boxes(cell, lv))
        if not boxes:
            break
        ltol = tol / 4 if level == 0 else tol * 2.0 ** (-(level + 2))
        loose = max(ltol, 1e-3 * contributions[-1]) if nondecay >= 2 else ltol
        if loose > ltol:
            # growing shells: magnitude is all the decay test needs; redone below if they later decay
            r = _adapt(cells, integrand, boxes, loose, budget, batch, False)
            deferred.append((len(results), boxes, ltol))
        else:
            r = _adapt(cells, integrand, boxes, ltol, budget, batch, keep_rule)
        results.append(r)
        contributions.append(r["abs"])
        log.debug("level %d: %d boxes, contribution %.3e, err %.3e", level, len(boxes), r["abs"], r["err"])
        if level >= 2:
            c0, c1, c2 = contributions[-3:]
            q1 = _ratio(c1, c0)
            q2 = _ratio(c2, c1)
            qv = max(q1, q2)
            if qv < decay_ratio:
                nondecay = 0
                tail = c2 * qv / (1.0 - qv)
                if tail <= tol / 2:
                    break
            else:
                nondecay += 1
                tail = math.inf
                if nondecay >= window:
                    raise DivergenceError(
                        f"integral does not converge absolutely: contributions of the last "
                        f"{window + 2} levels fail to decay (ratios {q1:.3g}, {q2:.3g}; "
                        f"latest {c2:.3e})",
                        contributions,
                    )
        if level >= max_level:
            converged = False
            message = f"stopped at level {level} with tail estimate {tail:.3e}"
            break
        level += 1
    # levels integrated loosely while the series looked divergent get their proper tolerance now
    for j, boxes, ltol in deferred:
        results[j] = _adapt(cells, integrand, boxes, ltol, budget, batch, keep_rule)
    value = math.fsum(r["value"] for r in results)
    abs_total = math.fsum(r["abs"] for r in results)
    err_total = math.fsum(r["err"] for r in results)
    subdivisions = sum(r["subdivisions"] for r in results)
    for r in results:
        converged = converged and r["converged"]
        evaluated |= r["evaluated"]
        for ci, v in r["per_cell"].items():
            per_cell[ci] = per_cell.get(ci, 0.0) + v
        for ci, parts in r["rule"].items():
            rule_points.setdefault(ci, []).extend(parts)
    if not math.isfinite(abs_total):
        converged = False
    err_total += tail if math.isfinite(tail) else 0.0
    if err_total > tol:
        converged = False
    if budget[0] <= 0 and not converged:
        message = message or "subdivision budget exhausted"
    rule = None
    if keep_rule:
        pts, wts = [], []
        for ci in range(len(cells)):
            parts = rule_points.get(ci, [])
            if parts:
                pts.append(np.concatenate([pp for pp, _ in parts], axis=1))
                wts.append(np.concatenate([ww for _, ww in parts]))
            else:
                pts.append(np.zeros((cells[ci].k, 0)))
                wts.append(np.zeros(0))
        rule = FixedRule(list(cells), pts, wts)
    return QuadratureResult(
        value=float(value),
        abs_error_estimate=float(err_total),
        abs_integral=float(abs_total),
        cells_evaluated=len(evaluated),
        subdivisions=subdivisions,
        converged=bool(converged),
        levels=level + 1,
        tail_estimate=float(tail) if math.isfinite(tail) else math.inf,
        contributions=contributions,
        cell_values=[per_cell.get(i, 0.0) for i in range(len(cells))],
        rule=rule,
        message=message,
    )


def _ratio(a: float, b: float) -> float:
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return a / b


# -- public entry points ----------------------------------------------------------

def integrate_cell(f: Callable, cell: CornerCell, tol: float = 1e-8, **kw) -> QuadratureResult:
    """Integrate a scalar function ``f(p)`` of the parameters over the cell's box.

    The embedding and orientation play no role here; `f` is integrated
    against the Lebesgue measure of the parameter box.
    """
    return integrate_cells(CellComplex([cell]), lambda ci, c, p: f(p), tol, **kw)


def form_integrand(a: KFormFamily, t: float) -> Callable:
    """Integrand ``sgn * psi^*(a_t)`` for use with :func:`integrate_cells`."""

    def integrand(ci, cell, p):
        x, jac = cell.evaluate_with_jacobian(p)
        return cell.orientation_sign * pulled_back_coefficient(a, t, x, jac)

    return integrand


def integrate_form(a: KFormFamily, S, t: float = 0.0, tol: float = 1e-8, **kw) -> QuadratureResult:
    """``sum over cells of sgn * integral of psi^*(a_t)`` with an absolute-convergence certificate."""
    S = as_complex(S)
    if a.k != S.k or a.n != S.n:
        raise DegreeError(f"cannot integrate a {a.k}-form on R^{a.n} over a {S.k}-complex in R^{S.n}")
    return integrate_cells(S, form_integrand(a, t), tol, **kw)


def integrate_density(b: DensityField, S, tol: float = 1e-8, t: float = 0.0, **kw) -> QuadratureResult:
    """Orientation-free integral of a nonnegative density."""
    S = as_complex(S)
    if b.kind == "form" and (b.fn.k != S.k or b.fn.n != S.n):
        raise DegreeError("density form degree does not match the complex")

    def integrand(ci, cell, p):
        if b.kind == "parameter":
            x = jac = None
            vals = np.broadcast_to(np.asarray(b.fn(p), dtype=float), p.shape[1:])
        else:
            x, jac = cell.evaluate_with_jacobian(p)
            vals = b.values(t, p, x, jac)
        if np.any(vals < 0):
            j = int(np.argmin(vals))
            raise InvariantViolationError(
                f"density is negative ({vals.flat[j]:.3e}) on cell {ci} at parameter {p[:, j].tolist()}"
            )
        return vals

    return integrate_cells(S, integrand, tol, **kw)
