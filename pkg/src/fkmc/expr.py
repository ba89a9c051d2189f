"""Coefficient expressions: parsing, vectorised evaluation, symbolic derivatives.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | VARIABLE | FUNC '(' expr ')' | '(' expr ')'

Variables are ``x1`` .. ``x<dimension>`` and ``t``.  Functions take exactly
one argument.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ExpressionSyntaxError, UnknownIdentifierError, VariableDimensionError

FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}


class ExpressionNode:
    """Immutable AST node; see the concrete subclasses below."""

    __slots__ = ()
    kind: str = ""

    @property
    def children(self) -> tuple:
        return ()

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, slots=True)
class Const(ExpressionNode):
    value: float
    kind = "constant"


@dataclass(frozen=True, slots=True)
class Var(ExpressionNode):
    name: str
    kind = "variable"


@dataclass(frozen=True, slots=True)
class Unary(ExpressionNode):
    op: str
    operand: ExpressionNode
    kind = "unary"

    @property
    def children(self):
        return (self.operand,)


@dataclass(frozen=True, slots=True)
class Binary(ExpressionNode):
    op: str
    left: ExpressionNode
    right: ExpressionNode
    kind = "binary"

    @property
    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, slots=True)
class Call(ExpressionNode):
    func: str
    arg: ExpressionNode
    kind = "call"

    @property
    def children(self):
        return (self.arg,)


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text, dimension):
        self.tokens = _tokenize(text)
        self.i = 0
        self.dimension = dimension

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind != "op":
            what = "end of input" if kind == "end" else repr(val)
            raise ExpressionSyntaxError(f"expected {value!r}, found {what}", pos)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in ("-", "+"):
            self.take()
            operand = self.unary()
            return Unary("-", operand) if val == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            return self.variable(val, pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ExpressionSyntaxError(f"unexpected {what}", pos)

    def variable(self, name, pos):
        if name == "t":
            return Var("t")
        m = re.fullmatch(r"x([1-9])", name)
        if m is None:
            raise UnknownIdentifierError(f"unknown identifier {name!r}", pos)
        if int(m.group(1)) > self.dimension:
            raise VariableDimensionError(
                f"variable {name!r} exceeds dimension {self.dimension}", pos
            )
        return Var(name)


def parse(text: str, dimension: int = 1) -> ExpressionNode:
    """Parse ``text`` into an AST whose variables fit ``dimension``."""
    if not isinstance(text, str) or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    if not 1 <= int(dimension) <= 9:
        raise ValueError(f"dimension must be in 1..9, got {dimension}")
    return _Parser(text, int(dimension)).parse()


# --------------------------------------------------------------------------
# evaluation

ArrayLike = Union[float, np.ndarray]


def _eval(node, x, t):
    if isinstance(node, Const):
        return np.float64(node.value)
    if isinstance(node, Var):
        if node.name == "t":
            return t
        return x[int(node.name[1:]) - 1]
    if isinstance(node, Binary):
        return _BINARY[node.op](_eval(node.left, x, t), _eval(node.right, x, t))
    if isinstance(node, Unary):
        return np.negative(_eval(node.operand, x, t))
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_eval(node.arg, x, t))
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node: ExpressionNode, x, t=0.0) -> ArrayLike:
    """Evaluate at position ``x`` and time ``t``.

    ``x`` is a length-``d`` vector, or a ``(d, n)`` array for ``n`` points at
    once; ``t`` may be a scalar or broadcast against the points.  Non-finite
    results are returned as-is.  The result may be a scalar even for array
    input when the expression does not depend on ``x``.
    """
    xs = np.asarray(x, dtype=np.float64)
    ts = np.asarray(t, dtype=np.float64)
    if xs.ndim == 0:
        xs = xs.reshape(1)
    with np.errstate(all="ignore"):
        out = _eval(node, xs, ts[()] if ts.ndim == 0 else ts)
    if np.ndim(out) == 0:
        return float(out)
    return out


def variables(node: ExpressionNode) -> frozenset:
    if isinstance(node, Var):
        return frozenset((node.name,))
    out = frozenset()
    for child in node.children:
        out |= variables(child)
    return out


def depends_on(node: ExpressionNode, name: str) -> bool:
    return name in variables(node)


def is_constant(node: ExpressionNode) -> bool:
    return not variables(node)


# --------------------------------------------------------------------------
# differentiation with literal constant folding

ZERO = Const(0.0)
ONE = Const(1.0)


def _lit(node, value=None):
    if not isinstance(node, Const):
        return False
    return value is None or node.value == value


def _fold(fn, *args):
    with np.errstate(all="ignore"):
        v = float(fn(*(np.float64(a.value) for a in args)))
    return Const(v) if np.isfinite(v) else None


def _neg(a):
    if _lit(a):
        return Const(-a.value)
    return Unary("-", a)


def _add(a, b):
    if _lit(a) and _lit(b):
        return _fold(np.add, a, b) or Binary("+", a, b)
    if _lit(a, 0.0):
        return b
    if _lit(b, 0.0):
        return a
    return Binary("+", a, b)


def _sub(a, b):
    if _lit(a) and _lit(b):
        return _fold(np.subtract, a, b) or Binary("-", a, b)
    if _lit(b, 0.0):
        return a
    if _lit(a, 0.0):
        return _neg(b)
    return Binary("-", a, b)


def _mul(a, b):
    if _lit(a) and _lit(b):
        return _fold(np.multiply, a, b) or Binary("*", a, b)
    if _lit(a, 0.0) or _lit(b, 0.0):
        return ZERO
    if _lit(a, 1.0):
        return b
    if _lit(b, 1.0):
        return a
    return Binary("*", a, b)


def _div(a, b):
    if _lit(a) and _lit(b):
        return _fold(np.divide, a, b) or Binary("/", a, b)
    if _lit(a, 0.0):
        return ZERO
    if _lit(b, 1.0):
        return a
    return Binary("/", a, b)


def _pow(a, b):
    if _lit(a) and _lit(b):
        return _fold(np.power, a, b) or Binary("^", a, b)
    if _lit(b, 1.0):
        return a
    if _lit(b, 0.0):
        return ONE
    return Binary("^", a, b)


def _call(func, a):
    if _lit(a):
        return _fold(FUNCTIONS[func], a) or Call(func, a)
    return Call(func, a)


def differentiate(node: ExpressionNode, variable: str) -> ExpressionNode:
    """Exact symbolic derivative of ``node`` with respect to ``variable``.

    ``abs`` differentiates to ``u'*u/abs(u)``, which is NaN where ``u = 0``.
    """
    v = variable
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == v else ZERO
    if isinstance(node, Unary):
        return _neg(differentiate(node.operand, v))
    if isinstance(node, Binary):
        a, b = node.left, node.right
        da = differentiate(a, v)
        db = differentiate(b, v)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if node.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, Const(2.0)))
        if node.op == "^":
            if not depends_on(b, v):
                return _mul(_mul(b, _pow(a, _sub(b, ONE))), da)
            if not depends_on(a, v):
                return _mul(_mul(node, _call("log", a)), db)
            return _mul(node, _add(_mul(db, _call("log", a)), _div(_mul(b, da), a)))
    if isinstance(node, Call):
        u = node.arg
        du = differentiate(u, v)
        if _lit(du, 0.0):
            return ZERO
        f = node.func
        if f == "exp":
            outer = node
        elif f == "log":
            return _div(du, u)
        elif f == "sin":
            outer = _call("cos", u)
        elif f == "cos":
            outer = _neg(_call("sin", u))
        elif f == "tanh":
            outer = _sub(ONE, _pow(node, Const(2.0)))
        elif f == "sqrt":
            return _div(du, _mul(Const(2.0), node))
        elif f == "abs":
            outer = _div(u, node)
        else:
            raise TypeError(f"unknown function {f!r}")
        return _mul(outer, du)
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_UNARY_PREC = 3
_ATOM_PREC = 5


def _prec(node):
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _UNARY_PREC
    if isinstance(node, Const) and (node.value < 0 or str(node.value).startswith("-")):
        return _UNARY_PREC
    return _ATOM_PREC


def _wrap(node, need):
    s = to_string(node)
    return f"({s})" if need else s


def to_string(node: ExpressionNode) -> str:
    """Render ``node`` so that ``parse`` rebuilds a tree of identical value.

    Parentheses follow the tree exactly, so floating-point association is
    preserved and evaluation is bit-identical after a round trip.
    """
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if isinstance(node, Unary):
        return "-" + _wrap(node.operand, _prec(node.operand) < _UNARY_PREC)
    if isinstance(node, Binary):
        p = _PREC[node.op]
        if node.op == "^":
            left = _wrap(node.left, _prec(node.left) <= p)
            right = _wrap(node.right, _prec(node.right) < _UNARY_PREC)
            return f"{left}^{right}"
        left = _wrap(node.left, _prec(node.left) < p)
        right = _wrap(node.right, _prec(node.right) <= p)
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")
