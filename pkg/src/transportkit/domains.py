"""Integration domains as collections of oriented parametrised cells.

A :class:`CornerCell` is a smooth map from a product of intervals (each
finite, half-infinite or the whole line) into R^n.  A :class:`CellComplex`
is a sequence of such cells whose images overlap only in null sets, plus an
optional generator of further cells for lattices with infinitely many
components.  Open versus closed endpoints are recorded but never change an
integral: quadrature nodes are interior.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import special

from . import dual as dm

__all__ = [
    "AxisBound",
    "CornerCell",
    "CellComplex",
    "DomainSpecError",
    "make_box",
    "make_cut_sheet",
    "make_pyramid_lattice",
    "make_wave_slab",
    "as_complex",
]


class DomainSpecError(ValueError):
    """Invalid domain parameters."""


@dataclass(frozen=True)
class AxisBound:
    """One factor of a parameter box.

    ``lower``/``upper`` may be ``-inf``/``+inf``.  The closedness flags only
    carry meaning at finite endpoints.
    """

    lower: float
    upper: float
    lower_closed: bool = True
    upper_closed: bool = True

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(hi):
            raise DomainSpecError("axis bound is NaN")
        if not lo < hi:
            raise DomainSpecError(f"axis bound needs lower < upper, got [{lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def coerce(cls, b) -> "AxisBound":
        """Accept an AxisBound, or a pair ``(lower, upper)`` (closed where finite)."""
        if isinstance(b, AxisBound):
            return b
        try:
            lo, hi = b
        except (TypeError, ValueError):
            raise DomainSpecError(f"cannot interpret {b!r} as an axis bound") from None
        return cls(float(lo), float(hi))

    @property
    def kind(self) -> str:
        """'finite', 'lower' (finite lower end), 'upper' (finite upper end) or 'infinite'."""
        lo_f, hi_f = math.isfinite(self.lower), math.isfinite(self.upper)
        if lo_f and hi_f:
            return "finite"
        if lo_f:
            return "lower"
        if hi_f:
            return "upper"
        return "infinite"

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def split(self, at: float) -> tuple["AxisBound", "AxisBound"]:
        if not self.lower < at < self.upper:
            raise DomainSpecError(f"split point {at} not inside ({self.lower}, {self.upper})")
        return (AxisBound(self.lower, at, self.lower_closed, False),
                AxisBound(at, self.upper, True, self.upper_closed))


def _identity(p):
    return list(p)


class CornerCell:
    """An oriented parametrised k-cell in R^n.

    Parameters
    ----------
    bounds : sequence of AxisBound
        The parameter box.
    embed : callable
        ``embed(p) -> sequence of n outputs`` for ``p`` a sequence of k
        arrays.  It must be written with numpy calls so that it also works
        on dual numbers (that is how its Jacobian is obtained).
    n : int
        Ambient dimension.
    orientation_sign : {+1, -1}
    """

    def __init__(self, bounds: Sequence, embed: Callable | None = None, n: int | None = None,
                 orientation_sign: int = 1, name: str = ""):
        bounds = tuple(AxisBound.coerce(b) for b in bounds)
        if not bounds:
            raise DomainSpecError("a cell needs at least one axis")
        self.bounds = bounds
        self.k = len(bounds)
        self.embed = embed or _identity
        self.n = self.k if n is None else int(n)
        if self.k > self.n:
            raise DomainSpecError(f"cell dimension {self.k} exceeds ambient dimension {self.n}")
        if orientation_sign not in (1, -1):
            raise DomainSpecError("orientation_sign must be +1 or -1")
        self.orientation_sign = orientation_sign
        self.name = name

    def __repr__(self):
        box = " x ".join(f"[{b.lower:g},{b.upper:g}]" for b in self.bounds)
        return f"<CornerCell {self.name or ''} k={self.k} n={self.n} box={box} sign={self.orientation_sign:+d}>"

    # evaluation ---------------------------------------------------------------
    def evaluate(self, p) -> np.ndarray:
        """Image points, shape (n, N), for parameter points p of shape (k, N)."""
        p = np.asarray(p, dtype=float)
        out = self.embed(list(p))
        return np.array([np.broadcast_to(np.asarray(o, dtype=float), p.shape[1:]) for o in out])

    def evaluate_with_jacobian(self, p) -> tuple[np.ndarray, np.ndarray]:
        """Image points (n, N) and Jacobian d(psi)/d(p) of shape (n, k, N)."""
        p = np.asarray(p, dtype=float)
        shape = p.shape[1:]
        ps = dm.seed(list(p))
        tag = ps[0].tag
        outs = self.embed(ps)
        x = np.empty((self.n,) + shape)
        jac = np.empty((self.n, self.k) + shape)
        for i, o in enumerate(outs):
            x[i] = dm.primal(o, tag)
            for j, g in enumerate(dm.partials(o, tag, self.k)):
                jac[i, j] = g
        return x, jac

    # derived cells ------------------------------------------------------------
    def with_orientation(self, sign: int) -> "CornerCell":
        c = self._copy()
        if sign not in (1, -1):
            raise DomainSpecError("orientation_sign must be +1 or -1")
        c.orientation_sign = sign
        return c

    def reversed(self) -> "CornerCell":
        return self.with_orientation(-self.orientation_sign)

    def with_bounds(self, bounds: Sequence) -> "CornerCell":
        c = self._copy()
        c.bounds = tuple(AxisBound.coerce(b) for b in bounds)
        return c

    def split(self, axis: int, at: float) -> tuple["CornerCell", "CornerCell"]:
        """Cut the parameter box by the hyperplane ``p[axis] = at``."""
        lo, hi = self.bounds[axis].split(at)
        b1 = list(self.bounds)
        b2 = list(self.bounds)
        b1[axis], b2[axis] = lo, hi
        return self.with_bounds(b1), self.with_bounds(b2)

    def _copy(self) -> "CornerCell":
        c = object.__new__(type(self))
        c.__dict__.update(self.__dict__)
        return c

    # sampling ------------------------------------------------------------------
    def sample_parameters(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Random interior parameter points (k, count).

        Unbounded axes are sampled through the tangent substitution so that
        the samples spread over all scales but stay concentrated near the
        finite end.
        """
        out = np.empty((self.k, count))
        for i, b in enumerate(self.bounds):
            kind = b.kind
            if kind == "finite":
                out[i] = b.lower + b.length * rng.uniform(0.001, 0.999, count)
            elif kind == "lower":
                out[i] = b.lower + np.tan(rng.uniform(0.001, 0.47 * np.pi, count))
            elif kind == "upper":
                out[i] = b.upper - np.tan(rng.uniform(0.001, 0.47 * np.pi, count))
            else:
                out[i] = np.tan(rng.uniform(-0.47 * np.pi, 0.47 * np.pi, count))
        return out

    def check_rank(self, samples: int = 16, seed: int = 0, rtol: float = 1e-10) -> None:
        """Raise if the Jacobian loses rank at a sampled interior point."""
        rng = np.random.default_rng(seed)
        p = self.sample_parameters(samples, rng)
        _, jac = self.evaluate_with_jacobian(p)
        sv = np.linalg.svd(np.moveaxis(jac, -1, 0), compute_uv=False)  # (N, k)
        bad = sv[:, -1] <= rtol * np.maximum(sv[:, 0], 1e-300)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise DomainSpecError(f"embedding of {self!r} is singular near parameter {p[:, j]}")


_next_shells = Callable[[int], Sequence[CornerCell]]


class CellComplex:
    """Cells with measure-zero overlaps, all of dimension k in R^n.

    Parameters
    ----------
    cells : sequence of CornerCell
        The finite part.
    shells : callable, optional
        ``shells(level) -> list of cells`` for ``level = 1, 2, ...``; makes
        the complex infinite.  Shells are consumed by the integrator until
        their contributions are negligible.
    tail_bound : callable, optional
        For truncated infinite domains, an a-priori bound on what was cut
        away, reported alongside integrals.
    """

    def __init__(self, cells: Sequence[CornerCell], shells: _next_shells | None = None,
                 name: str = "", tail_bound: float | None = None, metadata: dict | None = None):
        cells = tuple(cells)
        if not cells:
            raise DomainSpecError("a complex needs at least one cell")
        k, n = cells[0].k, cells[0].n
        for c in cells:
            if c.k != k or c.n != n:
                raise DomainSpecError("all cells of a complex must share k and n")
        self.cells = cells
        self.k = k
        self.n = n
        self.ambient_dim = n
        self.shells = shells
        self.name = name
        self.tail_bound = tail_bound
        self.metadata = dict(metadata or {})

    def __repr__(self):
        extra = " + shells" if self.shells else ""
        return f"<CellComplex {self.name or ''} k={self.k} n={self.n} cells={len(self.cells)}{extra}>"

    def __len__(self):
        return len(self.cells)

    def __iter__(self) -> Iterator[CornerCell]:
        return iter(self.cells)

    @property
    def is_infinite(self) -> bool:
        return self.shells is not None

    def map_cells(self, fn: Callable[[CornerCell], CornerCell]) -> "CellComplex":
        shells = None
        if self.shells is not None:
            base = self.shells
            shells = lambda level: [fn(c) for c in base(level)]
        return CellComplex([fn(c) for c in self.cells], shells, self.name, self.tail_bound, self.metadata)

    def reversed(self) -> "CellComplex":
        return self.map_cells(lambda c: c.reversed())

    def sample(self, count: int, seed: int = 0) -> list[tuple[int, np.ndarray]]:
        """``count`` random parameter points in every (finite-part) cell."""
        rng = np.random.default_rng(seed)
        return [(i, c.sample_parameters(count, rng)) for i, c in enumerate(self.cells)]


def as_complex(S) -> CellComplex:
    if isinstance(S, CellComplex):
        return S
    if isinstance(S, CornerCell):
        return CellComplex([S])
    return CellComplex(list(S))


# -- constructors ------------------------------------------------------------------

def make_box(bounds: Sequence) -> CornerCell:
    """Identity-embedded box cell, positively oriented."""
    if not bounds:
        raise DomainSpecError("empty bounds list")
    cell = CornerCell(bounds, None, None, 1, name="box")
    return cell


_S2 = math.sqrt(2.0)


def make_cut_sheet(H: float) -> CellComplex:
    """Infinite sheet of height H in R^3, cut diagonally along a sine curve.

    The image is ``{x : x2 - x1 <= sqrt(2) sin((x1 + x2)/sqrt(2)), |x3| <= H/2}``,
    parametrised over ``[0, inf) x R x [-1, 1]`` by
    ``y = (z2, sin z2 - z1, H z3 / 2)`` followed by a rotation by pi/4.
    """
    if not H > 0:
        raise DomainSpecError(f"sheet height must be positive, got {H}")
    H = float(H)

    def embed(z):
        z1, z2, z3 = z
        y1 = z2
        y2 = np.sin(z2) - z1
        return [(y1 - y2) / _S2, (y1 + y2) / _S2, (0.5 * H) * z3]

    cell = CornerCell([(0.0, np.inf), (-np.inf, np.inf), (-1.0, 1.0)], embed, 3, 1, name="cut-sheet")
    cell.check_rank()
    return CellComplex([cell], name=f"cut-sheet(H={H:g})", metadata={"H": H})


def _tetra_embed(v):
    v = np.asarray(v, dtype=float)
    e1, e2, e3 = v[1] - v[0], v[2] - v[1], v[3] - v[2]

    def embed(p):
        s, a, b = p
        sa = s * a
        sab = sa * b
        return [v[0][i] + s * e1[i] + sa * e2[i] + sab * e3[i] for i in range(3)]

    sign = np.sign(np.linalg.det(np.array([e1, e2, e3]).T))
    return embed, int(sign)


def _pyramid_cells(L: float, offset) -> list[CornerCell]:
    h = 0.5 * L
    o = np.asarray(offset, dtype=float)
    apex = o + [0.0, 0.0, L]
    # x2 <= x1 half and x2 > x1 half: two tetrahedra sharing the diagonal face
    halves = [
        [apex, o + [-h, -h, 0], o + [h, -h, 0], o + [h, h, 0]],
        [apex, o + [-h, -h, 0], o + [-h, h, 0], o + [h, h, 0]],
    ]
    cells = []
    for j, verts in enumerate(halves):
        embed, sign = _tetra_embed(verts)
        if sign < 0:
            # swap the last two edge directions to keep the Jacobian positive
            verts = [verts[0], verts[3], verts[2], verts[1]]
            embed, sign = _tetra_embed(verts)
        cells.append(CornerCell([(0, 1), (0, 1), (0, 1)], embed, 3, 1, name=f"pyramid{tuple(int(round(c / (2 * L))) for c in o)}/{j}"))
    return cells


def _lattice_offsets(radius: int, L: float, shell_only: bool = False):
    rng_ = range(-radius, radius + 1)
    for k in itertools.product(rng_, rng_, rng_):
        if shell_only and max(abs(c) for c in k) != radius:
            continue
        yield tuple(2.0 * L * c for c in k)


def pyramid_gaussian_tail(L: float, radius: int) -> float:
    """Bound on the integral of exp(-|x|^2) over pyramids outside ``|k|_inf <= radius``.

    Every such pyramid lies outside the cube ``|x_i| < L (2 radius + 1)``
    in at least one coordinate, so the tail is at most the Gaussian mass
    outside that cube.
    """
    c = special.erf(L * (2 * radius + 1))
    return float(np.pi ** 1.5 * (1.0 - c ** 3))


def make_pyramid_lattice(L: float, radius: int | None = 0) -> CellComplex:
    """Lattice of square pyramids ``P_0 + 2 L k`` for ``|k|_inf <= radius``.

    Each pyramid (base side L at height 0, apex at height L) is cut along
    the diagonal ``x2 = x1`` into two tetrahedral cells.  With
    ``radius=None`` the lattice is infinite: the centre pyramid forms the
    finite part and shell ``m`` holds all pyramids with ``|k|_inf = m``.
    """
    if not L > 0:
        raise DomainSpecError(f"pyramid size must be positive, got {L}")
    L = float(L)
    if radius is None:
        cells = _pyramid_cells(L, (0.0, 0.0, 0.0))

        def shells(level):
            out = []
            for off in _lattice_offsets(level, L, shell_only=True):
                out.extend(_pyramid_cells(L, off))
            return out

        return CellComplex(cells, shells, name=f"pyramid-lattice(L={L:g}, infinite)", metadata={"L": L})
    if radius < 0:
        raise DomainSpecError("radius must be >= 0")
    cells = []
    for off in _lattice_offsets(int(radius), L):
        cells.extend(_pyramid_cells(L, off))
    return CellComplex(cells, name=f"pyramid-lattice(L={L:g}, radius={radius})",
                       tail_bound=pyramid_gaussian_tail(L, int(radius)),
                       metadata={"L": L, "radius": int(radius)})


def make_wave_slab(u0: float, sigma: float, R: float) -> CellComplex:
    """Half-open slab ``{(0, x, y, z): -u0 + sigma/2 <= x < 0, y^2 + z^2 >= R^2}`` in R^4.

    One cell in polar coordinates ``(x, rho, theta)`` with the radial axis
    ``[R, inf)``; the orientation agrees with ``dx ^ dy ^ dz``.
    """
    if not 0 < sigma / 2 < u0:
        raise DomainSpecError(f"need 0 < sigma/2 < u0, got sigma={sigma}, u0={u0}")
    if not R > 0:
        raise DomainSpecError(f"hole radius must be positive, got {R}")

    def embed(p):
        x, rho, th = p
        return [0.0 * x, x, rho * np.cos(th), rho * np.sin(th)]

    bounds = [
        AxisBound(-u0 + sigma / 2, 0.0, True, False),
        AxisBound(R, np.inf, True, False),
        AxisBound(0.0, 2 * np.pi, True, False),
    ]
    cell = CornerCell(bounds, embed, 4, 1, name="wave-slab")
    cell.check_rank()
    return CellComplex([cell], name=f"wave-slab(u0={u0:g}, sigma={sigma:g}, R={R:g})",
                       metadata={"u0": u0, "sigma": sigma, "R": R})
