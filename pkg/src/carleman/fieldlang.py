"""Scalar field expressions with forward-mode second-order jets.

A small expression language over named coordinates.  Expressions are parsed
into an immutable tree which can be evaluated pointwise to a 2-jet (value,
gradient, Hessian), to a 1-jet, or elementwise on numpy arrays.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' INT)?
    atom   := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'

so ``-x1^2`` parses as ``-(x1^2)``.  Recognized functions are ``exp``, ``sin``
and ``cos``; ``pi`` is a constant.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "FieldError", "ParseError", "EvalError", "NonFiniteError",
    "Const", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Func",
    "Jet2", "ScalarField", "parse", "variable_names", "pretty",
    "eval_value", "eval_jet1", "eval_jet2",
]


class FieldError(Exception):
    """Base class for expression errors."""


class ParseError(FieldError):
    """Raised on malformed input; ``offset`` is the character position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.message = message
        self.offset = offset


class EvalError(FieldError, ArithmeticError):
    """Raised on division by zero during evaluation."""


class NonFiniteError(FieldError, ArithmeticError):
    """Raised when an evaluation produces inf or nan."""


# ---------------------------------------------------------------------------
# expression tree

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Add:
    left: object
    right: object


@dataclass(frozen=True)
class Sub:
    left: object
    right: object


@dataclass(frozen=True)
class Mul:
    left: object
    right: object


@dataclass(frozen=True)
class Div:
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str
    arg: object


FUNCTIONS = ("exp", "sin", "cos")


def variable_names(dim: int, time: bool = False) -> tuple[str, ...]:
    """Coordinate names: ``(t, x1, .., x{dim-1})`` or ``(x1, .., x{dim})``."""
    if dim < 1:
        raise ValueError("dim must be positive")
    if time:
        return ("t",) + tuple(f"x{i}" for i in range(1, dim))
    return tuple(f"x{i}" for i in range(1, dim + 1))


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str):
    pos = 0
    out = []
    n = len(src)
    while pos < n:
        if src[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {src[pos]!r}", pos)
        start = m.start(m.lastgroup)
        out.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    out.append(("eof", "", n))
    return out


class _Parser:
    def __init__(self, src: str, names: Sequence[str]):
        self.toks = _tokenize(src)
        self.i = 0
        self.index = {nm: k for k, nm in enumerate(names)}

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, val, pos = self.take()
        if val != text:
            got = "end of input" if kind == "eof" else repr(val)
            raise ParseError(f"expected {text!r}, got {got}", pos)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected token {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            arg = self.unary()
            # fold literal negation so printed negative constants round-trip
            if isinstance(arg, Const):
                return Const(-arg.value)
            return Neg(arg)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            kind, val, pos = self.peek()
            if (kind, val) == ("op", "-"):
                raise ParseError("negative exponent", pos)
            if kind != "num":
                raise ParseError("exponent must be a nonnegative integer literal", pos)
            self.take()
            if not re.fullmatch(r"\d+", val):
                raise ParseError("exponent must be a nonnegative integer literal", pos)
            return Pow(base, int(val))
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "ident":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            if val == "pi":
                return Const(math.pi)
            if val in self.index:
                return Var(self.index[val], val)
            raise ParseError(f"unknown identifier {val!r}", pos)
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        got = "end of input" if kind == "eof" else repr(val)
        raise ParseError(f"unexpected {got}", pos)


def parse(src: str, dim: int | None = None, time: bool = False,
          names: Sequence[str] | None = None):
    """Parse ``src`` into an expression tree.

    Parameters
    ----------
    src : str
        Source text.
    dim : int, optional
        Number of coordinates; used with ``time`` to build default names.
    time : bool
        Use ``(t, x1, ...)`` naming instead of ``(x1, ...)``.
    names : sequence of str, optional
        Explicit coordinate names, overriding ``dim`` and ``time``.
    """
    if names is None:
        if dim is None:
            raise ValueError("either dim or names is required")
        names = variable_names(dim, time)
    return _Parser(src, names).parse()


# ---------------------------------------------------------------------------
# printing

def _fmt_const(v: float) -> str:
    s = repr(float(v))
    if s in ("inf", "-inf", "nan"):
        raise FieldError("cannot print a non-finite constant")
    return f"({s})" if v < 0 or s.startswith("-") else s


def pretty(node) -> str:
    """Fully parenthesized text that reparses to an equal tree."""
    if isinstance(node, Const):
        return _fmt_const(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{pretty(node.arg)})"
    if isinstance(node, Pow):
        return f"({pretty(node.base)}^{node.exponent})"
    if isinstance(node, Func):
        return f"{node.name}({pretty(node.arg)})"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(node)]
    return f"({pretty(node.left)} {op} {pretty(node.right)})"


# ---------------------------------------------------------------------------
# evaluation

_UNARY = {
    "exp": (np.exp, np.exp, np.exp),
    "sin": (np.sin, np.cos, lambda u: -np.sin(u)),
    "cos": (np.cos, lambda u: -np.sin(u), lambda u: -np.cos(u)),
}


def eval_value(node, x):
    """Evaluate elementwise; ``x`` is a sequence of scalars or arrays."""
    with np.errstate(all="ignore"):
        out = _value(node, x)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("non-finite value")
    return out


def _value(node, x):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return x[node.index]
    if isinstance(node, Neg):
        return -_value(node.arg, x)
    if isinstance(node, Add):
        return _value(node.left, x) + _value(node.right, x)
    if isinstance(node, Sub):
        return _value(node.left, x) - _value(node.right, x)
    if isinstance(node, Mul):
        return _value(node.left, x) * _value(node.right, x)
    if isinstance(node, Div):
        den = _value(node.right, x)
        if np.any(np.asarray(den) == 0):
            raise EvalError("division by zero")
        return _value(node.left, x) / den
    if isinstance(node, Pow):
        return _value(node.base, x) ** node.exponent
    if isinstance(node, Func):
        return _UNARY[node.name][0](_value(node.arg, x))
    raise TypeError(f"not an expression node: {node!r}")


@dataclass
class Jet2:
    """Value, gradient and symmetric Hessian at a point."""

    value: float
    grad: np.ndarray
    hess: np.ndarray

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.value) and np.all(np.isfinite(self.grad))
                    and np.all(np.isfinite(self.hess)))


def _chain2(u, f0, f1, f2):
    v, g, H = u
    return f0, f1 * g, f1 * H + f2 * np.outer(g, g)


def _jet2(node, x, n):
    if isinstance(node, Const):
        return node.value, np.zeros(n), np.zeros((n, n))
    if isinstance(node, Var):
        g = np.zeros(n)
        g[node.index] = 1.0
        return float(x[node.index]), g, np.zeros((n, n))
    if isinstance(node, Neg):
        v, g, H = _jet2(node.arg, x, n)
        return -v, -g, -H
    if isinstance(node, (Add, Sub)):
        a = _jet2(node.left, x, n)
        b = _jet2(node.right, x, n)
        if isinstance(node, Add):
            return a[0] + b[0], a[1] + b[1], a[2] + b[2]
        return a[0] - b[0], a[1] - b[1], a[2] - b[2]
    if isinstance(node, Mul):
        va, ga, Ha = _jet2(node.left, x, n)
        vb, gb, Hb = _jet2(node.right, x, n)
        cross = np.outer(ga, gb)
        return va * vb, va * gb + vb * ga, va * Hb + vb * Ha + cross + cross.T
    if isinstance(node, Div):
        b = _jet2(node.right, x, n)
        if b[0] == 0:
            raise EvalError("division by zero")
        r = 1.0 / b[0]
        inv = _chain2(b, r, -r * r, 2.0 * r * r * r)
        va, ga, Ha = _jet2(node.left, x, n)
        vb, gb, Hb = inv
        cross = np.outer(ga, gb)
        return va * vb, va * gb + vb * ga, va * Hb + vb * Ha + cross + cross.T
    if isinstance(node, Pow):
        k = node.exponent
        if k == 0:
            return 1.0, np.zeros(n), np.zeros((n, n))
        u = _jet2(node.base, x, n)
        b = u[0]
        f2 = k * (k - 1) * b ** (k - 2) if k >= 2 else 0.0
        return _chain2(u, b ** k, k * b ** (k - 1), f2)
    if isinstance(node, Func):
        u = _jet2(node.arg, x, n)
        f0, f1, f2 = _UNARY[node.name]
        return _chain2(u, f0(u[0]), f1(u[0]), f2(u[0]))
    raise TypeError(f"not an expression node: {node!r}")


def eval_jet2(node, x) -> Jet2:
    """Forward-mode 2-jet of ``node`` at the point ``x``.

    Raises
    ------
    EvalError
        On division by zero.
    NonFiniteError
        If any component of the jet is inf or nan.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        v, g, H = _jet2(node, x, x.size)
    jet = Jet2(float(v), np.asarray(g, float), np.asarray(H, float))
    if not jet.is_finite():
        raise NonFiniteError("non-finite jet")
    return jet


def _jet1(node, x, n):
    if isinstance(node, Const):
        return node.value, np.zeros(n)
    if isinstance(node, Var):
        g = np.zeros(n)
        g[node.index] = 1.0
        return float(x[node.index]), g
    if isinstance(node, Neg):
        v, g = _jet1(node.arg, x, n)
        return -v, -g
    if isinstance(node, Add):
        a, b = _jet1(node.left, x, n), _jet1(node.right, x, n)
        return a[0] + b[0], a[1] + b[1]
    if isinstance(node, Sub):
        a, b = _jet1(node.left, x, n), _jet1(node.right, x, n)
        return a[0] - b[0], a[1] - b[1]
    if isinstance(node, Mul):
        a, b = _jet1(node.left, x, n), _jet1(node.right, x, n)
        return a[0] * b[0], a[0] * b[1] + b[0] * a[1]
    if isinstance(node, Div):
        a, b = _jet1(node.left, x, n), _jet1(node.right, x, n)
        if b[0] == 0:
            raise EvalError("division by zero")
        return a[0] / b[0], (a[1] * b[0] - a[0] * b[1]) / (b[0] * b[0])
    if isinstance(node, Pow):
        k = node.exponent
        if k == 0:
            return 1.0, np.zeros(n)
        v, g = _jet1(node.base, x, n)
        return v ** k, k * v ** (k - 1) * g
    if isinstance(node, Func):
        v, g = _jet1(node.arg, x, n)
        f0, f1, _ = _UNARY[node.name]
        return f0(v), f1(v) * g
    raise TypeError(f"not an expression node: {node!r}")


def eval_jet1(node, x):
    """Value and gradient of ``node`` at ``x``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        v, g = _jet1(node, x, x.size)
    g = np.asarray(g, float)
    if not (np.isfinite(v) and np.all(np.isfinite(g))):
        raise NonFiniteError("non-finite jet")
    return float(v), g


# ---------------------------------------------------------------------------
# field wrapper

def _lift(other):
    if isinstance(other, ScalarField):
        return other.node
    if isinstance(other, (int, float, np.floating, np.integer)):
        return Const(float(other))
    raise TypeError(f"cannot combine ScalarField with {type(other).__name__}")


class ScalarField:
    """A parsed expression bound to a coordinate system.

    Supports arithmetic with numbers and other fields on the same
    coordinates, which is how derived weights (``exp(lam*(psi - c))``,
    Taylor polynomials, ...) are assembled.
    """

    def __init__(self, node, names: Sequence[str]):
        self.node = node
        self.names = tuple(names)

    @classmethod
    def parse(cls, src: str, dim: int | None = None, time: bool = False,
              names: Sequence[str] | None = None) -> "ScalarField":
        if names is None:
            names = variable_names(dim, time)
        return cls(parse(src, names=names), names)

    @classmethod
    def constant(cls, value: float, names: Sequence[str]) -> "ScalarField":
        return cls(Const(float(value)), names)

    @classmethod
    def coordinate(cls, k: int, names: Sequence[str]) -> "ScalarField":
        return cls(Var(k, names[k]), names)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def is_constant(self) -> bool:
        return isinstance(self.node, Const)

    def __repr__(self):
        return f"ScalarField({pretty(self.node)!r}, names={self.names})"

    def __str__(self):
        return pretty(self.node)

    def __eq__(self, other):
        return (isinstance(other, ScalarField) and self.node == other.node
                and self.names == other.names)

    def __hash__(self):
        return hash((self.node, self.names))

    def _wrap(self, node):
        return ScalarField(node, self.names)

    def _check(self, other):
        if isinstance(other, ScalarField) and other.names != self.names:
            raise FieldError("fields live on different coordinates")

    def __add__(self, o):
        self._check(o)
        return self._wrap(Add(self.node, _lift(o)))

    def __radd__(self, o):
        return self._wrap(Add(_lift(o), self.node))

    def __sub__(self, o):
        self._check(o)
        return self._wrap(Sub(self.node, _lift(o)))

    def __rsub__(self, o):
        return self._wrap(Sub(_lift(o), self.node))

    def __mul__(self, o):
        self._check(o)
        return self._wrap(Mul(self.node, _lift(o)))

    def __rmul__(self, o):
        return self._wrap(Mul(_lift(o), self.node))

    def __truediv__(self, o):
        self._check(o)
        return self._wrap(Div(self.node, _lift(o)))

    def __rtruediv__(self, o):
        return self._wrap(Div(_lift(o), self.node))

    def __neg__(self):
        return self._wrap(Neg(self.node))

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise FieldError("exponent must be a nonnegative integer")
        return self._wrap(Pow(self.node, int(k)))

    def exp(self):
        return self._wrap(Func("exp", self.node))

    def sin(self):
        return self._wrap(Func("sin", self.node))

    def cos(self):
        return self._wrap(Func("cos", self.node))

    def jet(self, x) -> Jet2:
        return eval_jet2(self.node, x)

    def jet1(self, x):
        return eval_jet1(self.node, x)

    def value(self, x) -> float:
        return float(eval_value(self.node, np.asarray(x, float)))

    def __call__(self, *coords):
        """Elementwise evaluation on arrays, one array per coordinate."""
        if len(coords) == 1 and len(self.names) > 1:
            coords = tuple(np.moveaxis(np.asarray(coords[0], float), -1, 0))
        if len(coords) != len(self.names):
            raise FieldError(f"expected {len(self.names)} coordinates")
        arrs = np.broadcast_arrays(*[np.asarray(c, float) for c in coords])
        out = eval_value(self.node, arrs)
        return np.broadcast_to(np.asarray(out, float), arrs[0].shape).copy()

    @classmethod
    def quadratic(cls, value: float, grad, hess, center, names) -> "ScalarField":
        """``value + grad.(x-c) + (x-c).hess.(x-c)/2`` as an expression."""
        names = tuple(names)
        n = len(names)
        d = [cls.coordinate(k, names) - float(center[k]) for k in range(n)]
        out = cls.constant(value, names)
        for i in range(n):
            if grad[i] != 0:
                out = out + float(grad[i]) * d[i]
        for i in range(n):
            for j in range(i, n):
                c = hess[i][j] * (0.5 if i == j else 1.0)
                if c != 0:
                    out = out + float(c) * (d[i] * d[j])
        return out
