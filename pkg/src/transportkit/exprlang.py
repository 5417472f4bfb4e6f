"""A small expression language for densities and vector-field components.

Grammar (loosest to tightest binding)::

    expr   := expr ('+' | '-') expr
            | expr ('*' | '/') expr
            | '-' expr
            | atom '^' expr          (right associative, binds tighter than unary minus)
    atom   := number | name | name '(' args ')' | '(' expr ')'

Built-in calls are ``sin cos tan exp log sqrt tanh erf abs`` (one argument),
``min max`` (two) and the support guard ``if_abs_lt(u, r, then, else)``
which selects ``then`` where ``|u| < r`` and ``else`` elsewhere.  Only the
selected branch is evaluated at each point.

Expressions evaluate on floats, numpy arrays or :class:`~transportkit.dual.Dual`
numbers, so the same tree yields values and exact derivatives.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import special

from . import dual as dm
from .dual import Dual, DomainError

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ParseError",
    "DomainError",
    "UnboundVariableError",
    "parse",
    "to_string",
    "evaluate",
    "eval_dual",
    "free_variables",
    "compile_expr",
    "FUNCTIONS",
]


class ParseError(SyntaxError):
    """Syntax error carrying the byte offset of the offending token."""

    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} (at offset {offset})")
        self.message = message
        self.offset = offset
        self.text = text


class UnboundVariableError(NameError):
    pass


# -- AST ---------------------------------------------------------------------

class Expr:
    """Base class of expression nodes."""

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple


FUNCTIONS = {
    "sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1, "sqrt": 1,
    "tanh": 1, "erf": 1, "abs": 1, "min": 2, "max": 2, "if_abs_lt": 4,
}

# -- tokenizer -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos), text)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), _byte_offset(text, start)))
        pos = m.end()
    toks.append(_Tok("end", "", _byte_offset(text, n)))
    return toks


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


# -- Pratt parser ----------------------------------------------------------------

_INFIX = {"+": (10, "left"), "-": (10, "left"), "*": (20, "left"), "/": (20, "left"), "^": (40, "right")}
_UNARY_BP = 30


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if tok.text != text:
            got = repr(tok.text) if tok.kind != "end" else "end of input"
            raise ParseError(f"expected {text!r}, got {got}", tok.offset, self.text)
        return self.advance()

    def parse(self) -> Expr:
        e = self.expression(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"expected operator or end of input, got {tok.text!r}", tok.offset, self.text)
        return e

    def expression(self, min_bp: int) -> Expr:
        left = self.prefix()
        while True:
            tok = self.peek()
            if tok.kind != "op" or tok.text not in _INFIX:
                break
            bp, assoc = _INFIX[tok.text]
            if bp < min_bp or (bp == min_bp and assoc == "left"):
                break
            self.advance()
            if tok.text == "^":
                right = self.expression_unary_allowed(bp)
            else:
                right = self.expression(bp + 1 if assoc == "left" else bp)
            left = BinOp(tok.text, left, right)
        return left

    def expression_unary_allowed(self, bp: int) -> Expr:
        # right operand of '^' may itself start with unary minus: 2^-x
        return self.expression(bp)

    def prefix(self) -> Expr:
        tok = self.advance()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if self.peek().text == "(":
                return self.call(tok)
            if tok.text in FUNCTIONS:
                raise ParseError(f"function {tok.text!r} requires arguments", tok.offset, self.text)
            return Var(tok.text)
        if tok.text == "(":
            e = self.expression(0)
            self.expect(")")
            return e
        if tok.text == "-":
            return Neg(self.expression(_UNARY_BP))
        if tok.text == "+":
            return self.expression(_UNARY_BP)
        got = repr(tok.text) if tok.kind != "end" else "end of input"
        raise ParseError(f"expected expression, got {got}", tok.offset, self.text)

    def call(self, name_tok: _Tok) -> Expr:
        name = name_tok.text
        if name not in FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", name_tok.offset, self.text)
        self.expect("(")
        args = [self.expression(0)]
        while self.peek().text == ",":
            self.advance()
            args.append(self.expression(0))
        self.expect(")")
        if len(args) != FUNCTIONS[name]:
            raise ParseError(
                f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", name_tok.offset, self.text
            )
        return Call(name, tuple(args))


def parse(text: str) -> Expr:
    """Parse `text` into an expression tree.

    Raises
    ------
    ParseError
        On a syntax error or an unknown function name; ``offset`` is the byte
        offset of the offending token.
    """
    return _Parser(text).parse()


def to_string(e: Expr) -> str:
    """Fully parenthesised rendering that re-parses to an equal tree."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_string(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_string(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


def free_variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Call):
        out: set[str] = set()
        for a in e.args:
            out |= free_variables(a)
        return out
    raise TypeError(f"not an expression: {e!r}")


# -- evaluation ----------------------------------------------------------------------

def _log(x):
    dm.check_domain(x, lower_open=False, name="log")
    return np.log(x)


def _sqrt(x):
    dm.check_domain(x, lower_open=False, name="sqrt")
    return np.sqrt(x)


_CALLS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": _log,
    "sqrt": _sqrt,
    "tanh": np.tanh,
    "erf": special.erf,
    "abs": np.absolute,
    "min": np.minimum,
    "max": np.maximum,
}


def _as_number(v):
    if isinstance(v, (int, float)):
        return np.float64(v)
    return v


def _eval(e: Expr, env: Mapping):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariableError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, BinOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        return _power(a, b)
    if isinstance(e, Call):
        if e.name == "if_abs_lt":
            return _if_abs_lt(e, env)
        args = [_eval(a, env) for a in e.args]
        return _CALLS[e.name](*args)
    raise TypeError(f"not an expression: {e!r}")


def _power(a, b):
    # integer-valued plain exponents keep negative bases real
    bv = dm.value_of(b)
    if not isinstance(b, Dual) and np.ndim(bv) == 0 and float(bv).is_integer():
        return a ** int(bv)
    return a ** b


def _if_abs_lt(e: Call, env: Mapping):
    u = _eval(e.args[0], env)
    r = _eval(e.args[1], env)
    mask = np.abs(dm.value_of(u)) < dm.value_of(r)
    if np.ndim(mask) == 0:
        return _eval(e.args[2] if mask else e.args[3], env)
    shape = mask.shape
    if mask.all():
        return _eval(e.args[2], env)
    if not mask.any():
        return _eval(e.args[3], env)

    def restrict(sel):
        sub = {}
        for k, v in env.items():
            sub[k] = dm.take(v, sel) if np.shape(dm.value_of(v)) == shape else v
        return sub

    a = _eval(e.args[2], restrict(mask))
    b = _eval(e.args[3], restrict(~mask))
    return dm.assemble(mask, a, b, shape)


def evaluate(e: Expr, bindings: Mapping):
    """Evaluate `e` with variables bound to floats or arrays.

    Division by zero follows IEEE rules; ``log`` and ``sqrt`` of a negative
    argument raise :class:`DomainError`.
    """
    env = {k: _as_number(v) for k, v in bindings.items()}
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = _eval(e, env)
    if np.ndim(out) == 0 and not isinstance(out, Dual):
        return float(out)
    return out


def eval_dual(e: Expr, bindings: Mapping) -> Dual:
    """Evaluate with :class:`Dual` bindings; the result's partials are exact."""
    env = {k: _as_number(v) for k, v in bindings.items()}
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _eval(e, env)


def compile_expr(e: Expr | str, coords: Sequence[str], param: str | None = "t") -> Callable:
    """Turn an expression into a component function ``f(t, q)``.

    ``q[i]`` is bound to ``coords[i]`` and ``t`` to `param`.  Every free
    variable must be one of these names.
    """
    if isinstance(e, str):
        e = parse(e)
    allowed = set(coords) | ({param} if param else set())
    missing = free_variables(e) - allowed
    if missing:
        raise UnboundVariableError(
            f"unbound variable(s) {sorted(missing)}; allowed: {sorted(allowed)}"
        )
    coords = tuple(coords)

    def component(t, q):
        env = {name: q[i] for i, name in enumerate(coords)}
        if param:
            env[param] = t
        return evaluate(e, env)

    component.expr = e
    component.depends_on_param = bool(param) and param in free_variables(e)
    return component
