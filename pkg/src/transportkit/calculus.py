"""Exterior calculus on R^n with time-parametrised components.

Forms are stored in the increasing multi-index basis: a k-form on R^n is a
map from index tuples ``(i1 < ... < ik)`` to component functions
``f(t, q)``, where ``t`` is the family parameter and ``q`` a sequence of n
coordinate arrays.  Missing keys are zero components.  Component functions
are written with ordinary numpy calls; derivatives come from evaluating
them on :class:`~transportkit.dual.Dual` inputs, so wedge, d, contraction,
Lie derivative and pullback are exact algebra on components.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Callable, Mapping, Sequence

import numpy as np

from . import dual as dm
from .exprlang import compile_expr

__all__ = [
    "KFormFamily",
    "TimeDepVectorField",
    "DensityField",
    "DifferentiableMap",
    "DegreeError",
    "SingularVolumeError",
    "wedge",
    "exterior_derivative",
    "interior_product",
    "lie_derivative",
    "time_derivative",
    "pullback",
    "divergence",
    "partial",
    "coordinate_names",
    "permutation_sign",
    "det",
]

Component = Callable


class DegreeError(ValueError):
    """Form degrees or dimensions do not fit the requested operation."""


class SingularVolumeError(ValueError):
    """A volume form (nearly) vanishes where a divergence was requested."""


def coordinate_names(n: int) -> tuple[str, ...]:
    """Default coordinate names: x, y, z in R^1..R^3; t, x, y, z in R^4."""
    if n <= 3:
        return ("x", "y", "z")[:n]
    if n == 4:
        return ("t", "x", "y", "z")
    return tuple(f"x{i + 1}" for i in range(n))


def permutation_sign(seq: Sequence[int]) -> int:
    """Sign of the permutation sorting `seq` (0 if entries repeat)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def det(m: Sequence[Sequence]):
    """Determinant of a small square matrix of (possibly dual) entries."""
    k = len(m)
    if k == 0:
        return 1.0
    if k == 1:
        return m[0][0]
    if k == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    if k == 3:
        return (
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        )
    total = 0.0
    for perm in itertools.permutations(range(k)):
        term = permutation_sign(perm)
        for i, j in enumerate(perm):
            term = term * m[i][j]
        total = total + term
    return total


def _is_zero(v) -> bool:
    return not dm.is_dual(v) and np.ndim(v) == 0 and v == 0


def partial(f: Component, coord: int) -> Component:
    """Partial derivative of a component function.

    ``coord = -1`` differentiates in the parameter t, ``coord = i`` in q[i].
    Nested use (differentiating a derivative) is exact: each call seeds a
    fresh dual layer.
    """

    def df(t, q):
        if coord < 0:
            (ts,) = dm.seed([t])
            res = f(ts, q)
            tag = ts.tag
        else:
            qs = list(q)
            (s,) = dm.seed([qs[coord]])
            qs[coord] = s
            res = f(t, qs)
            tag = s.tag
        return dm.partials(res, tag, 1)[0]

    return df


def _const(c):
    def f(t, q):
        return c

    return f


def _add(f, g):
    return lambda t, q: f(t, q) + g(t, q)


def _mul(f, g):
    return lambda t, q: f(t, q) * g(t, q)


def _scale(c, f):
    return lambda t, q: c * f(t, q)


def _as_component(c) -> Component:
    if callable(c):
        return c
    return _const(float(c))


class KFormFamily:
    """A time-parametrised k-form on R^n.

    Parameters
    ----------
    n, k : int
        Ambient dimension and degree.
    components : mapping
        Increasing index tuple -> component function ``f(t, q)`` (or constant).
    time_dependent : bool
        False promises that no component depends on t; :func:`time_derivative`
        then returns the zero form.
    """

    def __init__(self, n: int, k: int, components: Mapping | None = None,
                 time_dependent: bool = True, name: str | None = None):
        if not 0 <= k <= n:
            raise DegreeError(f"degree {k} not in 0..{n}")
        self.n = n
        self.k = k
        comps = {}
        for idx, f in (components or {}).items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != k or list(idx) != sorted(set(idx)) or (k and not 0 <= idx[0] <= idx[-1] < n):
                raise DegreeError(f"bad multi-index {idx} for a {k}-form on R^{n}")
            comps[idx] = _as_component(f)
        self.components: dict[tuple, Component] = comps
        self.time_dependent = time_dependent
        self.name = name

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<KFormFamily{label} k={self.k} n={self.n} nonzero={sorted(self.components)}>"

    # -- construction helpers ----------------------------------------------------
    @classmethod
    def zero(cls, n: int, k: int) -> "KFormFamily":
        return cls(n, k, {}, time_dependent=False)

    @classmethod
    def basis(cls, n: int, idx: Sequence[int], coeff=1.0, time_dependent: bool = False):
        """``coeff * dx^{i1} ^ ... ^ dx^{ik}`` for any index order."""
        sign = permutation_sign(idx)
        if sign == 0:
            return cls.zero(n, len(idx))
        f = _as_component(coeff)
        if sign < 0:
            f = _scale(-1.0, f)
        return cls(n, len(idx), {tuple(sorted(idx)): f}, time_dependent=time_dependent)

    @classmethod
    def scalar(cls, n: int, f, time_dependent: bool = True) -> "KFormFamily":
        return cls(n, 0, {(): f}, time_dependent=time_dependent)

    @classmethod
    def from_exprs(cls, n: int, components: Mapping, coords: Sequence[str] | None = None,
                   param: str | None = None) -> "KFormFamily":
        """Build a form from expression strings.

        Keys are index tuples or strings of coordinate names such as
        ``"dx^dy^dz"`` (any order; the sign is taken care of).
        """
        coords = tuple(coords or coordinate_names(n))
        if param is None:
            param = "t" if "t" not in coords else "r"
        out = None
        k = None
        for key, text in components.items():
            idx = _parse_index(key, coords)
            if k is None:
                k = len(idx)
            elif len(idx) != k:
                raise DegreeError("components of mixed degree")
            comp = compile_expr(text, coords, param)
            term = cls.basis(n, idx, comp, time_dependent=comp.depends_on_param)
            out = term if out is None else out + term
        if out is None:
            raise DegreeError("no components given")
        return out

    # -- algebra -----------------------------------------------------------------
    def _check_compatible(self, other: "KFormFamily"):
        if self.n != other.n or self.k != other.k:
            raise DegreeError(f"cannot combine {self.k}-form on R^{self.n} with {other.k}-form on R^{other.n}")

    def __add__(self, other: "KFormFamily") -> "KFormFamily":
        self._check_compatible(other)
        comps = dict(self.components)
        for idx, g in other.components.items():
            comps[idx] = _add(comps[idx], g) if idx in comps else g
        return KFormFamily(self.n, self.k, comps, self.time_dependent or other.time_dependent)

    def __neg__(self) -> "KFormFamily":
        return self.scale(-1.0)

    def __sub__(self, other: "KFormFamily") -> "KFormFamily":
        return self + (-other)

    def scale(self, c, time_dependent: bool | None = None) -> "KFormFamily":
        """Multiply by a constant or by a scalar function ``c(t, q)``."""
        if callable(c):
            comps = {i: _mul(c, f) for i, f in self.components.items()}
            td = self.time_dependent if time_dependent is None else (self.time_dependent or time_dependent)
        else:
            comps = {i: _scale(float(c), f) for i, f in self.components.items()}
            td = self.time_dependent
        return KFormFamily(self.n, self.k, comps, td)

    def at_time(self, t0: float) -> "KFormFamily":
        """Freeze the parameter: a time-independent form equal to a_{t0}."""
        comps = {i: (lambda f: (lambda t, q: f(t0, q)))(f) for i, f in self.components.items()}
        return KFormFamily(self.n, self.k, comps, time_dependent=False)

    # -- evaluation ----------------------------------------------------------------
    def indices(self) -> list[tuple]:
        return list(itertools.combinations(range(self.n), self.k))

    def component_values(self, t, q) -> dict[tuple, object]:
        """Evaluate every nonzero component at (t, q)."""
        return {idx: f(t, q) for idx, f in self.components.items()}

    def coefficients(self, t, q) -> np.ndarray:
        """Array of shape (C(n,k),) + point shape in canonical index order."""
        shape = np.broadcast(*[np.asarray(dm.value_of(c)) for c in q]).shape if self.n else ()
        out = np.zeros((comb(self.n, self.k),) + shape)
        for j, idx in enumerate(self.indices()):
            f = self.components.get(idx)
            if f is not None:
                out[j] = dm.value_of(f(t, q))
        return out

    def __call__(self, t, q, vectors: Sequence | None = None):
        """Evaluate on tangent vectors: ``a_t|_q(V1, ..., Vk)``.

        ``vectors`` is a sequence of k vectors, each a length-n sequence of
        scalars or arrays broadcastable against the points.
        """
        vectors = list(vectors or [])
        if len(vectors) != self.k:
            raise DegreeError(f"{self.k}-form needs {self.k} vectors, got {len(vectors)}")
        total = 0.0
        for idx, f in self.components.items():
            minor = [[vectors[j][i] for j in range(self.k)] for i in idx]
            total = total + f(t, q) * det(minor)
        return total


def _parse_index(key, coords: Sequence[str]) -> tuple:
    if isinstance(key, tuple):
        return tuple(int(i) for i in key)
    if isinstance(key, int):
        return (key,)
    key = key.strip()
    if key in ("", "1", "()"):
        return ()
    parts = [p.strip() for p in key.replace("∧", "^").split("^")]
    idx = []
    for p in parts:
        name = p[1:] if p.startswith("d") else p
        if name not in coords:
            raise DegreeError(f"unknown coordinate differential {p!r}; coordinates are {list(coords)}")
        idx.append(coords.index(name))
    return tuple(idx)


class TimeDepVectorField:
    """A time-dependent vector field ``X_t(q)`` on R^n given by n components.

    ``joint``, if given, evaluates all components at once
    (``joint(t, q) -> sequence of n``); integrators use it when the
    components share expensive subexpressions.
    """

    def __init__(self, components: Sequence, time_dependent: bool = True, name: str | None = None,
                 joint: Callable | None = None):
        self.components = [_as_component(c) for c in components]
        self.n = len(self.components)
        self.time_dependent = time_dependent
        self.name = name
        self.joint = joint

    def evaluate_all(self, t, q) -> list:
        """All component values as a list (dual-compatible)."""
        if self.joint is not None:
            return list(self.joint(t, q))
        return [f(t, q) for f in self.components]

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<TimeDepVectorField{label} n={self.n}>"

    @classmethod
    def from_exprs(cls, exprs: Sequence[str], coords: Sequence[str] | None = None,
                   param: str | None = None) -> "TimeDepVectorField":
        n = len(exprs)
        coords = tuple(coords or coordinate_names(n))
        if param is None:
            param = "t" if "t" not in coords else "r"
        comps = [compile_expr(e, coords, param) for e in exprs]
        return cls(comps, time_dependent=any(c.depends_on_param for c in comps))

    @classmethod
    def zero(cls, n: int) -> "TimeDepVectorField":
        return cls([_const(0.0)] * n, time_dependent=False)

    def scale(self, f) -> "TimeDepVectorField":
        """The field ``f X`` for a scalar function ``f(t, q)``."""
        return TimeDepVectorField([_mul(f, c) for c in self.components], self.time_dependent)

    def __call__(self, t, q) -> np.ndarray:
        """Values as an array of shape (n,) + point shape."""
        shape = np.broadcast(np.asarray(t), *[np.asarray(c) for c in q]).shape
        out = np.empty((self.n,) + shape)
        for i, f in enumerate(self.components):
            out[i] = f(t, q)
        return out

    def jacobian(self, t, q) -> np.ndarray:
        """Spatial Jacobian dX^i/dq^j, shape (n, n) + point shape."""
        shape = np.broadcast(np.asarray(t), *[np.asarray(c) for c in q]).shape
        qs = dm.seed(list(q))
        tag = qs[0].tag
        out = np.empty((self.n, self.n) + shape)
        for i, f in enumerate(self.components):
            res = f(t, qs)
            for j, g in enumerate(dm.partials(res, tag, self.n)):
                out[i, j] = g
        return out


class DensityField:
    """A nonnegative density to integrate over a cell complex.

    Three flavours, chosen with the constructors:

    * :meth:`on_parameters` -- a function of the cell parameter point;
    * :meth:`from_ambient` -- ``rho(x)`` times the Euclidean k-volume element;
    * :meth:`from_form` -- the absolute value ``|a|`` of a k-form.
    """

    def __init__(self, kind: str, fn):
        if kind not in ("parameter", "ambient", "form"):
            raise ValueError(f"unknown density kind {kind!r}")
        self.kind = kind
        self.fn = fn

    @classmethod
    def on_parameters(cls, fn) -> "DensityField":
        return cls("parameter", _as_component(fn) if not callable(fn) else fn)

    @classmethod
    def from_ambient(cls, fn) -> "DensityField":
        return cls("ambient", _as_component(fn))

    @classmethod
    def from_form(cls, a: KFormFamily) -> "DensityField":
        return cls("form", a)

    def values(self, t, p, x, jac):
        """Density values at parameter points `p`.

        `x` are the ambient images (n, N) and `jac` the embedding Jacobian
        (n, k, N) of the cell at those points.
        """
        if self.kind == "parameter":
            return np.broadcast_to(np.asarray(self.fn(p), dtype=float), p.shape[1:])
        if self.kind == "form":
            return np.abs(pulled_back_coefficient(self.fn, t, x, jac))
        n, k = jac.shape[:2]
        if k == n:
            vol = np.abs(np.linalg.det(np.moveaxis(jac, -1, 0)))
        else:
            g = np.einsum("ikN,ilN->Nkl", jac, jac)
            vol = np.sqrt(np.abs(np.linalg.det(g)))
        return np.asarray(self.fn(t, x), dtype=float) * vol


def pulled_back_coefficient(a: KFormFamily, t, x, jac) -> np.ndarray:
    """Coefficient of the pullback of a k-form to a k-dimensional parameter box.

    ``x`` (n, N) are image points and ``jac`` (n, k, N) the Jacobian of the
    parametrisation; the result is ``sum_I a_I(t, x) det(jac[I, :])``.
    """
    n, k = jac.shape[:2]
    if a.k != k or a.n != n:
        raise DegreeError(f"cannot pull back a {a.k}-form on R^{a.n} to a {k}-cell in R^{n}")
    N = x.shape[1:]
    out = np.zeros(N)
    if not a.components:
        return out
    if k == 0:
        return np.broadcast_to(np.asarray(a.components[()](t, x), dtype=float), N).copy()
    jm = np.moveaxis(jac, -1, 0)  # (N, n, k)
    for idx, f in a.components.items():
        minor = jm[:, list(idx), :]
        d = np.linalg.det(minor) if k > 3 else _det_stack(minor)
        out = out + np.asarray(f(t, x), dtype=float) * d
    return out


def _det_stack(m: np.ndarray) -> np.ndarray:
    """Determinants of a stack of 1x1/2x2/3x3 matrices, computed explicitly."""
    k = m.shape[-1]
    if k == 1:
        return m[..., 0, 0]
    if k == 2:
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return (
        m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
        - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
        + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
    )


# -- operations ------------------------------------------------------------------

def wedge(a: KFormFamily, b: KFormFamily) -> KFormFamily:
    """Exterior product of a k-form and an l-form."""
    if a.n != b.n:
        raise DegreeError(f"dimension mismatch: R^{a.n} vs R^{b.n}")
    if a.k + b.k > a.n:
        raise DegreeError(f"degree {a.k}+{b.k} exceeds dimension {a.n}")
    comps: dict[tuple, Component] = {}
    for I, f in a.components.items():
        for J, g in b.components.items():
            if set(I) & set(J):
                continue
            sign = permutation_sign(I + J)
            K = tuple(sorted(I + J))
            term = _mul(f, g) if sign > 0 else _scale(-1.0, _mul(f, g))
            comps[K] = _add(comps[K], term) if K in comps else term
    return KFormFamily(a.n, a.k + b.k, comps, a.time_dependent or b.time_dependent)


def exterior_derivative(a: KFormFamily) -> KFormFamily:
    """Spatial exterior derivative; the family parameter is left alone."""
    if a.k >= a.n:
        raise DegreeError(f"d of a top-degree ({a.k}-)form on R^{a.n} is not defined here")
    comps: dict[tuple, Component] = {}
    for I, f in a.components.items():
        for j in range(a.n):
            if j in I:
                continue
            K = tuple(sorted(I + (j,)))
            pos = K.index(j)
            term = partial(f, j)
            if pos % 2:
                term = _scale(-1.0, term)
            comps[K] = _add(comps[K], term) if K in comps else term
    return KFormFamily(a.n, a.k + 1, comps, a.time_dependent)


def interior_product(X: TimeDepVectorField, a: KFormFamily) -> KFormFamily:
    """Contraction of X into the first slot of a."""
    if a.k == 0:
        raise DegreeError("interior product of a 0-form")
    if X.n != a.n:
        raise DegreeError(f"dimension mismatch: field on R^{X.n}, form on R^{a.n}")
    comps: dict[tuple, Component] = {}
    for I, f in a.components.items():
        for p, i in enumerate(I):
            J = I[:p] + I[p + 1:]
            term = _mul(X.components[i], f)
            if p % 2:
                term = _scale(-1.0, term)
            comps[J] = _add(comps[J], term) if J in comps else term
    return KFormFamily(a.n, a.k - 1, comps, a.time_dependent or X.time_dependent)


def lie_derivative(X: TimeDepVectorField, a: KFormFamily, t: float | None = None) -> KFormFamily:
    """``L_{X_t} a_t`` by Cartan's formula ``X.(da) + d(X.a)``.

    The returned family pairs ``X_t`` with ``a_t`` at the same parameter;
    passing `t` freezes it.
    """
    if X.n != a.n:
        raise DegreeError(f"dimension mismatch: field on R^{X.n}, form on R^{a.n}")
    if a.k == 0:
        out = interior_product(X, exterior_derivative(a))
    elif a.k == a.n:
        out = exterior_derivative(interior_product(X, a))
    else:
        out = interior_product(X, exterior_derivative(a)) + exterior_derivative(interior_product(X, a))
    return out.at_time(t) if t is not None else out


def time_derivative(a: KFormFamily) -> KFormFamily:
    """Componentwise derivative in the family parameter."""
    if not a.time_dependent:
        return KFormFamily.zero(a.n, a.k)
    comps = {I: partial(f, -1) for I, f in a.components.items()}
    return KFormFamily(a.n, a.k, comps, time_dependent=True)


@dataclass(frozen=True)
class DifferentiableMap:
    """A smooth map R^m -> R^n given by ``fn(p) -> sequence of n outputs``.

    ``fn`` must be written with numpy calls so that it accepts Duals.
    """

    fn: Callable
    dim_in: int
    dim_out: int

    def __call__(self, p):
        return list(self.fn(p))

    def value_and_jacobian(self, p):
        ps = dm.seed(list(p))
        tag = ps[0].tag
        outs = self.fn(ps)
        vals = [dm.primal(o, tag) for o in outs]
        jac = [dm.partials(o, tag, self.dim_in) for o in outs]
        return vals, jac

    def compose(self, inner: "DifferentiableMap") -> "DifferentiableMap":
        """``self o inner``."""
        if inner.dim_out != self.dim_in:
            raise DegreeError("cannot compose: dimension mismatch")
        return DifferentiableMap(lambda p: self.fn(inner.fn(p)), inner.dim_in, self.dim_out)


def pullback(psi: DifferentiableMap, a: KFormFamily) -> KFormFamily:
    """``psi^* a`` as a form on R^m (the domain of psi)."""
    if psi.dim_out != a.n:
        raise DegreeError(f"map lands in R^{psi.dim_out} but the form lives on R^{a.n}")
    if a.k > psi.dim_in:
        raise DegreeError(f"cannot pull a {a.k}-form back to R^{psi.dim_in}")
    m = psi.dim_in
    items = list(a.components.items())

    def make(J):
        def comp(t, p):
            vals, jac = psi.value_and_jacobian(p)
            total = 0.0
            for I, f in items:
                minor = [[jac[i][j] for j in J] for i in I]
                term = f(t, vals) * det(minor)
                total = total + term
            return total

        return comp

    comps = {J: make(J) for J in itertools.combinations(range(m), a.k)} if items else {}
    return KFormFamily(m, a.k, comps, a.time_dependent)


def divergence(X: TimeDepVectorField, vol: KFormFamily, threshold: float = 1e-300) -> Component:
    """Divergence of X with respect to the volume form ``f dx^1 ^ ... ^ dx^n``.

    Returns a scalar function ``div(t, q) = sum_i d_i(f X^i) / f``; it raises
    :class:`SingularVolumeError` wherever ``|f| <= threshold``.
    """
    if vol.k != vol.n or vol.n != X.n:
        raise DegreeError("divergence needs a top-degree form on the field's space")
    f = vol.components.get(tuple(range(vol.n)))
    if f is None:
        raise SingularVolumeError("volume form is identically zero")
    fluxes = [partial(_mul(f, Xi), i) for i, Xi in enumerate(X.components)]

    def div(t, q):
        fv = f(t, q)
        if np.any(np.abs(dm.value_of(fv)) <= threshold):
            raise SingularVolumeError("volume form vanishes at an evaluation point")
        total = 0.0
        for g in fluxes:
            total = total + g(t, q)
        return total / fv

    return div
