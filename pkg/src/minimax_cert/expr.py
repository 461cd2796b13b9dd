"""Expression trees over x1..xn, y1..ym with exact first and second derivatives.

Parsing follows a small recursive-descent grammar. Derivatives are computed by
forward accumulation of second-order jets (value, gradient, Hessian), so they
are exact up to floating-point rounding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from minimax_cert.errors import (
    DomainError,
    ExpressionSyntaxError,
    IndexOutOfRange,
    UnknownIdentifier,
)

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "y"
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class Add:
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Sub:
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Mul:
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Div:
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Expression"


Expression = Union[Num, Var, Neg, Add, Sub, Mul, Div, Pow, Func]

_BINARY = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {text[start]!r}", start, "token")
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int, m: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = n
        self.m = m

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def _expect(self, text: str) -> None:
        if self.tok.text != text:
            raise ExpressionSyntaxError(
                f"expected {text!r}, found {self.tok.text or 'end of input'!r}", self.tok.pos, text
            )
        self._advance()

    def parse(self) -> Expression:
        e = self.expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(
                f"unexpected {self.tok.text!r}", self.tok.pos, "operator or end of input"
            )
        return e

    def expr(self) -> Expression:
        left = self.term()
        while self.tok.text in ("+", "-"):
            op = self._advance().text
            right = self.term()
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def term(self) -> Expression:
        left = self.factor()
        while self.tok.text in ("*", "/"):
            op = self._advance().text
            right = self.factor()
            left = Mul(left, right) if op == "*" else Div(left, right)
        return left

    def factor(self) -> Expression:
        # unary minus binds looser than ^: -x1^2 == -(x1^2)
        if self.tok.text == "-":
            self._advance()
            return Neg(self.factor())
        base = self.base()
        if self.tok.text == "^":
            self._advance()
            return Pow(base, self._exponent())
        return base

    def _exponent(self) -> int:
        t = self.tok
        if t.kind != "num" or not t.text.isdigit():
            raise ExpressionSyntaxError("expected integer exponent", t.pos, "integer")
        self._advance()
        k = int(t.text)
        if self.tok.text == "^":
            # right-associative: 2^3 in exponent position folds to 8
            self._advance()
            k = k ** self._exponent()
        return k

    def base(self) -> Expression:
        t = self.tok
        if t.kind == "num":
            self._advance()
            return Num(float(t.text))
        if t.text == "(":
            self._advance()
            e = self.expr()
            self._expect(")")
            return e
        if t.kind == "ident":
            self._advance()
            if t.text in FUNCTIONS:
                self._expect("(")
                e = self.expr()
                self._expect(")")
                return Func(t.text, e)
            vm = re.fullmatch(r"([xy])(\d+)", t.text)
            if vm is None:
                raise UnknownIdentifier(t.text, t.pos)
            kind, idx = vm.group(1), int(vm.group(2))
            limit = self.n if kind == "x" else self.m
            if not 1 <= idx <= limit:
                raise IndexOutOfRange(t.text, limit, t.pos)
            return Var(kind, idx)
        raise ExpressionSyntaxError(
            f"unexpected {t.text or 'end of input'!r}", t.pos, "number, identifier or '('"
        )


def parse_expression(text: str, n: int, m: int) -> Expression:
    """Parse ``text`` into an expression tree over x1..xn, y1..ym."""
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0, "expression")
    return _Parser(text, n, m).parse()


def serialize(e: Expression) -> str:
    """Canonical, fully parenthesised text; ``parse_expression`` inverts it."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return f"{e.kind}{e.index}"
    if isinstance(e, Neg):
        return f"(-{serialize(e.arg)})"
    if isinstance(e, Pow):
        return f"({serialize(e.base)})^{e.exponent}"
    if isinstance(e, Func):
        return f"{e.name}({serialize(e.arg)})"
    return f"({serialize(e.left)} {_BINARY[type(e)]} {serialize(e.right)})"


def variables(e: Expression) -> set[tuple[str, int]]:
    if isinstance(e, Num):
        return set()
    if isinstance(e, Var):
        return {(e.kind, e.index)}
    if isinstance(e, (Neg, Func)):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.left) | variables(e.right)


def is_affine(e: Expression, kinds: str = "xy") -> bool:
    """Structural test: ``e`` is affine in the variables of ``kinds`` with
    constant coefficients (other variables may appear arbitrarily, but only
    in additive terms free of ``kinds``)."""
    return _affine_degree(e, kinds) is not None


def _affine_degree(e: Expression, kinds: str):
    # None: not affine; 0: free of kinds; 1: affine with constant coefficients
    if not any(k in kinds for k, _ in variables(e)):
        return 0
    if isinstance(e, Var):
        return 1
    if isinstance(e, Neg):
        return _affine_degree(e.arg, kinds)
    if isinstance(e, (Add, Sub)):
        a, b = _affine_degree(e.left, kinds), _affine_degree(e.right, kinds)
        return None if a is None or b is None else max(a, b)
    if isinstance(e, Mul):
        a, b = _affine_degree(e.left, kinds), _affine_degree(e.right, kinds)
        if a is None or b is None:
            return None
        if a == 1 and b == 1:
            return None
        other = e.right if a == 1 else e.left
        return 1 if not variables(other) else None
    if isinstance(e, Div):
        a = _affine_degree(e.left, kinds)
        return a if a is not None and not variables(e.right) else None
    if isinstance(e, Pow):
        if e.exponent == 1:
            return _affine_degree(e.base, kinds)
        return 0 if e.exponent == 0 else None
    return None


# ---------------------------------------------------------------------------
# evaluation


def _domain(msg: str, e: Expression) -> DomainError:
    return DomainError(msg, serialize(e))


def _lookup(e: Var, x, y):
    return x[e.index - 1] if e.kind == "x" else y[e.index - 1]


def _eval(e: Expression, x, y):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return _lookup(e, x, y)
    if isinstance(e, Neg):
        return -_eval(e.arg, x, y)
    if isinstance(e, Add):
        return _eval(e.left, x, y) + _eval(e.right, x, y)
    if isinstance(e, Sub):
        return _eval(e.left, x, y) - _eval(e.right, x, y)
    if isinstance(e, Mul):
        return _eval(e.left, x, y) * _eval(e.right, x, y)
    if isinstance(e, Div):
        den = _eval(e.right, x, y)
        if np.any(den == 0):
            raise _domain("division by zero", e)
        return _eval(e.left, x, y) / den
    if isinstance(e, Pow):
        b = _eval(e.base, x, y)
        return b ** e.exponent if e.exponent else np.ones_like(b) * 1.0
    a = _eval(e.arg, x, y)
    if e.name == "log":
        if np.any(a <= 0):
            raise _domain("log of non-positive value", e)
        return np.log(a)
    if e.name == "sqrt":
        if np.any(a < 0):
            raise _domain("sqrt of negative value", e)
        return np.sqrt(a)
    return getattr(np, e.name)(a)


def evaluate(e: Expression, x, y) -> float:
    """Evaluate at a single point ``(x, y)``; raises DomainError off-domain."""
    with np.errstate(over="ignore"):
        v = _eval(e, np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return float(v)


def evaluate_batch(e: Expression, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Vectorised evaluation; ``X`` is (N, n), ``Y`` is (N, m)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    N = X.shape[0] if X.ndim == 2 else Y.shape[0]
    with np.errstate(over="ignore"):
        v = _eval(e, X.T if X.ndim == 2 else X, Y.T if Y.ndim == 2 else Y)
    return np.broadcast_to(np.asarray(v, dtype=float), (N,)).copy()


# ---------------------------------------------------------------------------
# second-order forward accumulation


class Jet:
    """Value, gradient and Hessian of a scalar function of N variables."""

    __slots__ = ("v", "g", "H")

    def __init__(self, v: float, g: np.ndarray, H: np.ndarray):
        self.v = v
        self.g = g
        self.H = H

    @classmethod
    def constant(cls, v: float, N: int) -> "Jet":
        return cls(float(v), np.zeros(N), np.zeros((N, N)))

    @classmethod
    def variable(cls, v: float, i: int, N: int) -> "Jet":
        g = np.zeros(N)
        g[i] = 1.0
        return cls(float(v), g, np.zeros((N, N)))

    def chain(self, f0: float, f1: float, f2: float) -> "Jet":
        return Jet(f0, f1 * self.g, f1 * self.H + f2 * np.outer(self.g, self.g))

    def __add__(self, o: "Jet") -> "Jet":
        return Jet(self.v + o.v, self.g + o.g, self.H + o.H)

    def __sub__(self, o: "Jet") -> "Jet":
        return Jet(self.v - o.v, self.g - o.g, self.H - o.H)

    def __neg__(self) -> "Jet":
        return Jet(-self.v, -self.g, -self.H)

    def __mul__(self, o: "Jet") -> "Jet":
        cross = np.outer(self.g, o.g)
        return Jet(self.v * o.v, self.v * o.g + o.v * self.g, self.v * o.H + o.v * self.H + cross + cross.T)


def _jet(e: Expression, x: np.ndarray, y: np.ndarray, n: int, N: int) -> Jet:
    if isinstance(e, Num):
        return Jet.constant(e.value, N)
    if isinstance(e, Var):
        i = e.index - 1 if e.kind == "x" else n + e.index - 1
        return Jet.variable(_lookup(e, x, y), i, N)
    if isinstance(e, Neg):
        return -_jet(e.arg, x, y, n, N)
    if isinstance(e, Add):
        return _jet(e.left, x, y, n, N) + _jet(e.right, x, y, n, N)
    if isinstance(e, Sub):
        return _jet(e.left, x, y, n, N) - _jet(e.right, x, y, n, N)
    if isinstance(e, Mul):
        return _jet(e.left, x, y, n, N) * _jet(e.right, x, y, n, N)
    if isinstance(e, Div):
        den = _jet(e.right, x, y, n, N)
        if den.v == 0:
            raise _domain("division by zero", e)
        b = den.v
        return _jet(e.left, x, y, n, N) * den.chain(1.0 / b, -1.0 / b**2, 2.0 / b**3)
    if isinstance(e, Pow):
        u = _jet(e.base, x, y, n, N)
        k = e.exponent
        if k == 0:
            return Jet.constant(1.0, N)
        b = u.v
        f1 = k * b ** (k - 1)
        f2 = k * (k - 1) * b ** (k - 2) if k >= 2 else 0.0
        return u.chain(b**k, f1, f2)
    u = _jet(e.arg, x, y, n, N)
    a = u.v
    if e.name == "sin":
        return u.chain(math.sin(a), math.cos(a), -math.sin(a))
    if e.name == "cos":
        return u.chain(math.cos(a), -math.sin(a), -math.cos(a))
    if e.name == "exp":
        ea = math.exp(a)
        return u.chain(ea, ea, ea)
    if e.name == "log":
        if a <= 0:
            raise _domain("log of non-positive value", e)
        return u.chain(math.log(a), 1.0 / a, -1.0 / a**2)
    if a <= 0:
        # sqrt is not differentiable at 0
        raise _domain("sqrt of non-positive value (derivative undefined)", e)
    s = math.sqrt(a)
    return u.chain(s, 0.5 / s, -0.25 / (a * s))


def jet(e: Expression, x, y) -> Jet:
    """Value, gradient in (x, y) and Hessian of ``e`` at the point."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = x.size
    out = _jet(e, x, y, n, n + y.size)
    H = 0.5 * (out.H + out.H.T)
    return Jet(float(out.v), out.g, H)


def _xy(p, y=None):
    if y is not None:
        return p, y
    if isinstance(p, tuple):
        return p
    return p.x, p.y


def gradient(e: Expression, p, y=None) -> np.ndarray:
    """Exact gradient with respect to (x, y); ``p`` is a CandidatePoint, an
    ``(x, y)`` pair, or x with ``y`` given separately."""
    x, y = _xy(p, y)
    return jet(e, x, y).g


def hessian(e: Expression, p, y=None) -> np.ndarray:
    x, y = _xy(p, y)
    return jet(e, x, y).H
