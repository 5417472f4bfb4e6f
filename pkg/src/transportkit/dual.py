"""Forward-mode dual numbers over numpy arrays.

A :class:`Dual` carries a value and a tuple of partial derivatives, one per
seeded variable.  Values and partials may be scalars, numpy arrays (the
usual case: one entry per evaluation point) or Duals themselves.  Nesting
gives exact higher derivatives; every Dual carries a *tag* so that nested
layers never confuse their perturbations (the layer seeded last has the
largest tag and sits at the top of the structure).

numpy ufuncs (``np.sin``, ``np.exp``, ...) and ``scipy.special.erf``
dispatch to Duals through ``__array_ufunc__``, so component functions can be
written once with plain numpy calls and evaluated either on arrays or on
Duals.
"""
from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "Dual",
    "seed",
    "value_of",
    "partials",
    "where",
    "take",
    "assemble",
    "is_dual",
    "DomainError",
]

_tags = itertools.count(1)


class DomainError(ValueError):
    """Raised when a function is evaluated outside its real domain."""


def is_dual(x) -> bool:
    return isinstance(x, Dual)


def _tag(x) -> int:
    return x.tag if isinstance(x, Dual) else 0


def value_of(x):
    """Strip every dual layer and return the underlying value."""
    while isinstance(x, Dual):
        x = x.val
    return x


class Dual:
    __slots__ = ("val", "der", "tag")
    __array_priority__ = 1000

    def __init__(self, val, der: Sequence, tag: int):
        self.val = val
        self.der = tuple(der)
        self.tag = tag

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {list(self.der)!r}, tag={self.tag})"

    @property
    def shape(self):
        return np.shape(value_of(self))

    # -- helpers -----------------------------------------------------------
    def _lift(self, other):
        """Return `other` as a Dual at this layer (constants get zero partials)."""
        if isinstance(other, Dual) and other.tag == self.tag:
            return other
        return Dual(other, (0.0,) * len(self.der), self.tag)

    def _chain(self, fval, fprime) -> "Dual":
        return Dual(fval, [fprime * g for g in self.der], self.tag)

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        return _binary(np.add, self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(np.subtract, self, other)

    def __rsub__(self, other):
        return _binary(np.subtract, other, self)

    def __mul__(self, other):
        return _binary(np.multiply, self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(np.true_divide, self, other)

    def __rtruediv__(self, other):
        return _binary(np.true_divide, other, self)

    def __pow__(self, other):
        return _binary(np.power, self, other)

    def __rpow__(self, other):
        return _binary(np.power, other, self)

    def __neg__(self):
        return Dual(-self.val, [-g for g in self.der], self.tag)

    def __pos__(self):
        return self

    def __abs__(self):
        return _unary(np.absolute, self)

    def __getitem__(self, idx):
        return take(self, idx)

    # comparisons act on the underlying values
    def __lt__(self, other):
        return value_of(self) < value_of(other)

    def __le__(self, other):
        return value_of(self) <= value_of(other)

    def __gt__(self, other):
        return value_of(self) > value_of(other)

    def __ge__(self, other):
        return value_of(self) >= value_of(other)

    def __float__(self):
        return float(value_of(self))

    # -- numpy protocol ----------------------------------------------------
    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        name = ufunc.__name__
        if len(inputs) == 1:
            return _unary(ufunc, inputs[0])
        if len(inputs) == 2:
            if name in _BINARY:
                return _binary(ufunc, *inputs)
            if name in ("greater", "greater_equal", "less", "less_equal", "equal", "not_equal"):
                return ufunc(value_of(inputs[0]), value_of(inputs[1]))
        return NotImplemented


# -- derivative rules --------------------------------------------------------

def _d_sqrt(x, fx):
    return 0.5 / fx


def _d_tan(x, fx):
    return 1.0 + fx * fx


def _d_tanh(x, fx):
    return 1.0 - fx * fx


def _d_abs(x, fx):
    return np.sign(value_of(x))


_UNARY_RULES: dict[str, Callable] = {
    "sin": lambda x, fx: np.cos(x),
    "cos": lambda x, fx: -np.sin(x),
    "tan": _d_tan,
    "exp": lambda x, fx: fx,
    "expm1": lambda x, fx: fx + 1.0,
    "log": lambda x, fx: 1.0 / x,
    "log1p": lambda x, fx: 1.0 / (1.0 + x),
    "sqrt": _d_sqrt,
    "tanh": _d_tanh,
    "sinh": lambda x, fx: np.cosh(x),
    "cosh": lambda x, fx: np.sinh(x),
    "arctan": lambda x, fx: 1.0 / (1.0 + x * x),
    "absolute": _d_abs,
    "negative": lambda x, fx: -1.0,
    "square": lambda x, fx: 2.0 * x,
    "reciprocal": lambda x, fx: -fx * fx,
    "erf": lambda x, fx: (2.0 / np.sqrt(np.pi)) * np.exp(-x * x),
}

_BINARY = {"add", "subtract", "multiply", "true_divide", "divide", "power", "maximum", "minimum"}


def _unary(ufunc, x):
    name = ufunc.__name__
    if not isinstance(x, Dual):
        return ufunc(x)
    rule = _UNARY_RULES.get(name)
    if rule is None:
        raise TypeError(f"no derivative rule for {name!r}")
    fx = ufunc(x.val)
    return x._chain(fx, rule(x.val, fx))


def _binary(ufunc, a, b):
    ta, tb = _tag(a), _tag(b)
    if ta == 0 and tb == 0:
        return ufunc(a, b)
    name = ufunc.__name__
    if name in ("maximum", "minimum"):
        pick = value_of(a) >= value_of(b) if name == "maximum" else value_of(a) <= value_of(b)
        return where(pick, a, b)
    top = a if ta >= tb else b
    if ta != tb:
        # the lower-tagged operand is a constant for the top layer
        if top is a:
            return _binary_const(name, a, b, const_right=True)
        return _binary_const(name, b, a, const_right=False)
    # same layer
    if name == "add":
        return Dual(a.val + b.val, [ga + gb for ga, gb in zip(a.der, b.der)], a.tag)
    if name == "subtract":
        return Dual(a.val - b.val, [ga - gb for ga, gb in zip(a.der, b.der)], a.tag)
    if name == "multiply":
        return Dual(a.val * b.val, [a.val * gb + b.val * ga for ga, gb in zip(a.der, b.der)], a.tag)
    if name in ("true_divide", "divide"):
        q = a.val / b.val
        return Dual(q, [(ga - q * gb) / b.val for ga, gb in zip(a.der, b.der)], a.tag)
    if name == "power":
        return np.exp(b * np.log(a))
    raise TypeError(f"unsupported binary operation {name!r}")


def _binary_const(name, d: Dual, c, const_right: bool):
    """Combine Dual `d` with constant `c` (relative to d's layer)."""
    if name == "add":
        return Dual(d.val + c, d.der, d.tag)
    if name == "subtract":
        if const_right:
            return Dual(d.val - c, d.der, d.tag)
        return Dual(c - d.val, [-g for g in d.der], d.tag)
    if name == "multiply":
        return Dual(d.val * c, [g * c for g in d.der], d.tag)
    if name in ("true_divide", "divide"):
        if const_right:
            return Dual(d.val / c, [g / c for g in d.der], d.tag)
        q = c / d.val
        return Dual(q, [-q * g / d.val for g in d.der], d.tag)
    if name == "power":
        if const_right:
            # d ** c with c constant
            cv = value_of(c)
            if np.ndim(cv) == 0 and not isinstance(c, Dual):
                if cv == 0:
                    return Dual(d.val ** 0.0, [0.0 * g for g in d.der], d.tag)
                return d._chain(d.val ** c, c * d.val ** (c - 1))
            return d._chain(d.val ** c, c * d.val ** (c - 1))
        # c ** d
        fx = c ** d.val
        return d._chain(fx, fx * np.log(c))
    raise TypeError(f"unsupported binary operation {name!r}")


# -- seeding & extraction ---------------------------------------------------

def seed(values: Sequence, active: Sequence[int] | None = None) -> list:
    """Seed a fresh dual layer.

    Parameters
    ----------
    values : sequence
        Input values (scalars, arrays or Duals of older layers).
    active : sequence of int, optional
        Indices of the inputs that receive a unit partial.  The derivative
        slots are numbered in the order given here.  Defaults to all inputs.

    Returns
    -------
    list
        Duals for active inputs, the untouched values otherwise.
    """
    tag = next(_tags)
    if active is None:
        active = range(len(values))
    active = list(active)
    m = len(active)
    out = list(values)
    for slot, i in enumerate(active):
        der = [0.0] * m
        der[slot] = 1.0
        out[i] = Dual(values[i], der, tag)
    return out


def partials(result, tag: int, m: int) -> list:
    """Extract the `m` partials of `result` with respect to layer `tag`."""
    if isinstance(result, Dual) and result.tag == tag:
        return list(result.der)
    return [0.0] * m


def primal(result, tag: int):
    if isinstance(result, Dual) and result.tag == tag:
        return result.val
    return result


# -- masking -----------------------------------------------------------------

def where(cond, a, b):
    """Elementwise select that understands Duals; `cond` is a plain mask."""
    cond = value_of(cond)
    ta, tb = _tag(a), _tag(b)
    if ta == 0 and tb == 0:
        return np.where(cond, a, b)
    top = a if ta >= tb else b
    da, db = top._lift(a), top._lift(b)
    return Dual(
        where(cond, da.val, db.val),
        [where(cond, ga, gb) for ga, gb in zip(da.der, db.der)],
        top.tag,
    )


def take(x, idx):
    """Index every array inside `x` (scalars pass through unchanged)."""
    if isinstance(x, Dual):
        return Dual(take(x.val, idx), [take(g, idx) for g in x.der], x.tag)
    if np.ndim(x) == 0:
        return x
    return np.asarray(x)[idx]


def assemble(mask, a, b, shape):
    """Build a full-shape object from `a` (on ``mask``) and `b` (elsewhere)."""
    ta, tb = _tag(a), _tag(b)
    if ta == 0 and tb == 0:
        dtype = np.result_type(np.asarray(a).dtype, np.asarray(b).dtype, np.float64)
        out = np.empty(shape, dtype=dtype)
        out[mask] = a
        out[~mask] = b
        return out
    top = a if ta >= tb else b
    da, db = top._lift(a), top._lift(b)
    return Dual(
        assemble(mask, da.val, db.val, shape),
        [assemble(mask, ga, gb, shape) for ga, gb in zip(da.der, db.der)],
        top.tag,
    )


def check_domain(x, lower_open: bool, name: str):
    """Raise DomainError if any underlying value is negative (or zero when
    ``lower_open``)."""
    v = value_of(x)
    bad = v <= 0 if lower_open else v < 0
    if np.any(bad):
        raise DomainError(f"{name} of negative argument")


erf = special.erf
