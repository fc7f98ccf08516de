"""Scalar field expressions on the bundle: parsing, printing and jet evaluation.

Grammar (``^`` takes a non-negative integer literal only)::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := ("-" | "+") unary | power
    power := atom ("^" INT)?
    atom  := NUMBER | VAR | FUNC "(" expr ")" | "(" expr ")"

Variables are ``x1..xn`` (base) and ``y1..ym`` (fibre).  In the jet
coordinate vector ``u`` the x's come first, so ``y1`` is ``u[n]``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .jets import MAX_ORDER, Jet

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh")
DIVISION_FLOOR = 1e-300


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int, source: str = ""):
        super().__init__(f"{message} at position {position}")
        self.position = position
        self.source = source


class UnknownIdentifierError(ExprError):
    pass


class VariableIndexError(ExprError):
    pass


class DomainError(ArithmeticError):
    """Evaluation hit a singular point; ``subexpression`` names the culprit."""

    def __init__(self, message: str, subexpression: str):
        super().__init__(f"{message}: {subexpression}")
        self.subexpression = subexpression


# ---------------------------------------------------------------- AST
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
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]


@dataclass(frozen=True)
class Expression:
    """Parsed expression together with the dimensions it was checked against."""

    root: Node
    dims: tuple

    def __str__(self) -> str:
        return to_string(self.root)

    def leaves(self) -> int:
        return _count_leaves(self.root)

    def variables(self) -> set:
        out = set()
        _collect_vars(self.root, out)
        return out


def _count_leaves(node) -> int:
    if isinstance(node, (Num, Var)):
        return 1
    if isinstance(node, BinOp):
        return _count_leaves(node.left) + _count_leaves(node.right)
    if isinstance(node, Pow):
        return _count_leaves(node.base)
    return _count_leaves(node.arg)


def _collect_vars(node, out):
    if isinstance(node, Var):
        out.add((node.kind, node.index))
    elif isinstance(node, BinOp):
        _collect_vars(node.left, out)
        _collect_vars(node.right, out)
    elif isinstance(node, Pow):
        _collect_vars(node.base, out)
    elif isinstance(node, (Neg, Call)):
        _collect_vars(node.arg, out)


# ---------------------------------------------------------------- lexer
_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str):
    pos = 0
    toks = []
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m:
            bad = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {src[bad]!r}", bad, src)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", len(src)))
    return toks


# identical subtrees are shared so that evaluation can reuse them
_INTERN: dict = {}


def _mk(cls, *args):
    key = (cls,) + tuple(id(a) if isinstance(a, (Num, Var, Neg, BinOp, Pow, Call)) else a for a in args)
    node = _INTERN.get(key)
    if node is None:
        node = _INTERN[key] = cls(*args)
    return node


class _Parser:
    def __init__(self, src: str, dims):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0
        self.n, self.m = dims

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[1] != value:
            raise ExprSyntaxError(f"expected {value!r}, found {t[1] or 'end of input'!r}", t[2], self.src)
        return t

    def parse(self):
        node = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ExprSyntaxError(f"unexpected token {t[1]!r}", t[2], self.src)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = _mk(BinOp, op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = _mk(BinOp, op, node, self.unary())
        return node

    def unary(self):
        t = self.peek()
        if t[0] == "op" and t[1] == "-":
            self.take()
            return _mk(Neg, self.unary())
        if t[0] == "op" and t[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            t = self.take()
            if t[0] != "num" or not re.fullmatch(r"\d+", t[1]):
                raise ExprSyntaxError("exponent must be a non-negative integer literal", t[2], self.src)
            base = _mk(Pow, base, int(t[1]))
            if self.peek()[1] == "^":
                raise ExprSyntaxError("chained exponents need parentheses", self.peek()[2], self.src)
        return base

    def atom(self):
        t = self.take()
        kind, text, pos = t
        if kind == "num":
            return _mk(Num, float(text))
        if kind == "ident":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return _mk(Call, text, arg)
            mv = re.fullmatch(r"([xy])(\d+)", text)
            if not mv:
                raise UnknownIdentifierError(f"unknown identifier {text!r} at position {pos}")
            k, idx = mv.group(1), int(mv.group(2))
            limit = self.n if k == "x" else self.m
            if idx < 1 or idx > limit:
                raise VariableIndexError(
                    f"variable {text!r} at position {pos} out of range for dims (n={self.n}, m={self.m})"
                )
            return _mk(Var, k, idx)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", pos, self.src)


def parse(source: str, dims) -> Expression:
    """Parse ``source`` for a bundle with ``dims = (n, m)``."""
    n, m = int(dims[0]), int(dims[1])
    if n < 1 or m < 1:
        raise ValueError("dims must be positive")
    if not isinstance(source, str):
        source = repr(float(source))
    return Expression(_Parser(source, (n, m)).parse(), (n, m))


# ---------------------------------------------------------------- printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_string(node) -> str:
    """Canonical text form; ``parse(to_string(e))`` rebuilds the same tree."""
    if isinstance(node, Expression):
        node = node.root
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if isinstance(node, Pow):
        b = to_string(node.base)
        if not isinstance(node.base, (Var, Num, Call)):
            b = f"({b})"
        return f"{b}^{node.exponent}"
    if isinstance(node, Neg):
        a = to_string(node.arg)
        if isinstance(node.arg, BinOp):
            a = f"({a})"
        return f"-{a}"
    p = _PREC[node.op]
    left = to_string(node.left)
    if isinstance(node.left, BinOp) and _PREC[node.left.op] < p:
        left = f"({left})"
    right = to_string(node.right)
    if isinstance(node.right, BinOp) and _PREC[node.right.op] <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


# ---------------------------------------------------------------- evaluation
def _func_derivs(name: str, v: float, node) -> list:
    if name == "sin":
        s, c = math.sin(v), math.cos(v)
        return [s, c, -s, -c]
    if name == "cos":
        s, c = math.sin(v), math.cos(v)
        return [c, -s, -c, s]
    if name == "exp":
        e = math.exp(v)
        return [e, e, e, e]
    if name == "tanh":
        t = math.tanh(v)
        s = 1.0 - t * t
        return [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
    if name in ("log", "sqrt") and not v > 0.0:
        raise DomainError(f"{name} of non-positive value {v!r}", to_string(node))
    if name == "log":
        return [math.log(v), 1.0 / v, -1.0 / v**2, 2.0 / v**3]
    r = math.sqrt(v)
    return [r, 0.5 / r, -0.25 / (r * v), 0.375 / (r * v * v)]


def _eval(node, u, order, n, memo=None):
    if memo is None:
        memo = {}
    hit = memo.get(id(node))
    if hit is not None:
        return hit
    out = memo[id(node)] = _eval1(node, u, order, n, memo)
    return out


def _eval1(node, u, order, n, memo):
    dim = u.shape[0]
    if isinstance(node, Num):
        return Jet.constant(node.value, dim, order)
    if isinstance(node, Var):
        idx = node.index - 1 if node.kind == "x" else n + node.index - 1
        return Jet.variable(u, idx, order)
    if isinstance(node, Neg):
        return -_eval(node.arg, u, order, n, memo)
    if isinstance(node, Pow):
        return _eval(node.base, u, order, n, memo) ** node.exponent
    if isinstance(node, Call):
        a = _eval(node.arg, u, order, n, memo)
        return a.compose(_func_derivs(node.func, float(a.value), node))
    a = _eval(node.left, u, order, n, memo)
    b = _eval(node.right, u, order, n, memo)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if abs(float(b.value)) < DIVISION_FLOOR:
        raise DomainError("division by a vanishing denominator", to_string(node.right))
    return a * b.reciprocal()


def eval_jet(e: Expression, u, order: int = MAX_ORDER, memo=None) -> Jet:
    """Value and all partial derivatives up to ``order`` of ``e`` at the point ``u``."""
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must lie in 0..{MAX_ORDER}")
    n, m = e.dims
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != n + m:
        raise ValueError(f"point has {u.shape[0]} coordinates, expected {n + m}")
    if not np.all(np.isfinite(u)):
        raise ValueError("point must be finite")
    return _eval(e.root, u, order, n, memo)


def _value(node, u, n) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return float(u[node.index - 1 if node.kind == "x" else n + node.index - 1])
    if isinstance(node, Neg):
        return -_value(node.arg, u, n)
    if isinstance(node, Pow):
        return _value(node.base, u, n) ** node.exponent
    if isinstance(node, Call):
        return _func_derivs(node.func, _value(node.arg, u, n), node)[0]
    a = _value(node.left, u, n)
    b = _value(node.right, u, n)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if abs(b) < DIVISION_FLOOR:
        raise DomainError("division by a vanishing denominator", to_string(node.right))
    return a / b


def evaluate(e: Expression, u) -> float:
    """Plain float evaluation, no derivatives."""
    return _value(e.root, np.asarray(u, dtype=float).reshape(-1), e.dims[0])


def eval_grid(grid, u, order: int = MAX_ORDER) -> Jet:
    """Evaluate a nested list (any depth) of expressions into one array-valued jet."""
    arr = np.asarray(grid, dtype=object)
    memo: dict = {}
    flat = [eval_jet(e, u, order, memo) for e in arr.reshape(-1)]
    return Jet.stack(flat, arr.shape)


# ---------------------------------------------------------------- symbolic derivative
_ZERO, _ONE = Num(0.0), Num(1.0)


def _add(a, b):
    if a == _ZERO:
        return b
    if b == _ZERO:
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if b == _ZERO:
        return a
    if a == _ZERO:
        return Neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if a == _ZERO or b == _ZERO:
        return _ZERO
    if a == _ONE:
        return b
    if b == _ONE:
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if a == _ZERO:
        return _ZERO
    if b == _ONE:
        return a
    return BinOp("/", a, b)


def _d(node, var):
    if isinstance(node, Num):
        return _ZERO
    if isinstance(node, Var):
        return _ONE if node == var else _ZERO
    if isinstance(node, Neg):
        d = _d(node.arg, var)
        return _ZERO if d == _ZERO else Neg(d)
    if isinstance(node, Pow):
        k = node.exponent
        if k == 0:
            return _ZERO
        db = _d(node.base, var)
        lower = _ONE if k == 1 else (node.base if k == 2 else Pow(node.base, k - 1))
        return _mul(_mul(Num(float(k)), lower), db)
    if isinstance(node, Call):
        da = _d(node.arg, var)
        if da == _ZERO:
            return _ZERO
        a = node.arg
        outer = {
            "sin": lambda: Call("cos", a),
            "cos": lambda: Neg(Call("sin", a)),
            "exp": lambda: node,
            "log": lambda: BinOp("/", _ONE, a),
            "sqrt": lambda: BinOp("/", Num(0.5), node),
            "tanh": lambda: BinOp("-", _ONE, Pow(node, 2)),
        }[node.func]()
        return _mul(outer, da)
    dl, dr = _d(node.left, var), _d(node.right, var)
    if node.op == "+":
        return _add(dl, dr)
    if node.op == "-":
        return _sub(dl, dr)
    if node.op == "*":
        return _add(_mul(dl, node.right), _mul(node.left, dr))
    # (l/r)' = l'/r - l r'/r^2
    return _sub(_div(dl, node.right), _div(_mul(node.left, dr), Pow(node.right, 2)))


def differentiate(e: Expression, kind: str, index: int) -> Expression:
    """Symbolic partial derivative with respect to ``x<index>`` or ``y<index>``."""
    return Expression(_d(e.root, Var(kind, index)), e.dims)
