"""Drift expressions: a tiny arithmetic language over the single variable ``x``.

Grammar (``^`` binds tighter than unary minus and is right-associative)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := base ('^' factor)?
    base   := NUMBER | 'x' | IDENT '(' expr ')' | '(' expr ')'

so ``-2^2`` is ``-(2^2)`` and ``2^-1`` is ``0.5``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Node",
    "ParseError", "DriftEvalError",
    "parse", "serialize", "evaluate", "fold", "affine_coefficients",
    "FUNCTIONS",
]

FUNCTIONS = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "abs": np.abs,
}

_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}


class ParseError(ValueError):
    """Malformed drift expression. ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class DriftEvalError(ArithmeticError):
    """Evaluation produced a division by zero, overflow or other non-finite value."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str = "x"


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Call]


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, _byte_offset(self.text, tok[2]))

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] == "eof":
            found = "end of input" if tok[0] == "eof" else repr(tok[1])
            raise self.error(f"expected {value!r}, found {found}")
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "eof":
            raise self.error(f"unexpected token {tok[1]!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.base()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", base, self.factor())
        return base

    def base(self) -> Node:
        tok = self.peek()
        kind, value, _ = tok
        if kind == "num":
            self.advance()
            return Num(float(value))
        if kind == "ident":
            self.advance()
            if value == "x":
                return Var()
            if self.peek()[:2] != ("op", "("):
                raise self.error(f"unknown identifier {value!r}", tok)
            if value not in FUNCTIONS:
                raise self.error(f"unknown function {value!r}", tok)
            self.advance()
            arg = self.expr()
            self.expect(")")
            return Call(value, arg)
        if (kind, value) == ("op", "("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "eof":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected token {value!r}")


def parse(text: str) -> Node:
    """Parse a drift expression such as ``"-0.001*x + 1"`` into an AST."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text).parse()


def serialize(node: Node) -> str:
    """Render an AST back to text; ``parse(serialize(t)) == t`` for parsed trees."""
    if isinstance(node, Num):
        if node.value < 0 or math.copysign(1.0, node.value) < 0:
            return f"(-{-node.value!r})"
        return repr(node.value)
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Neg):
        # parenthesised so that a negated base of ``^`` keeps its grouping
        return f"(-{serialize(node.operand)})"
    if isinstance(node, BinOp):
        return f"({serialize(node.left)} {node.op} {serialize(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({serialize(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def _eval(node: Node, x):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return np.negative(_eval(node.operand, x))
    if isinstance(node, BinOp):
        return _BINARY[node.op](_eval(node.left, x), _eval(node.right, x))
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_eval(node.arg, x))
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node: Node, x):
    """Evaluate ``node`` at ``x`` (scalar or array) in double precision.

    Raises DriftEvalError on division by zero, overflow or any non-finite result.
    """
    x = np.asarray(x, dtype=float)
    try:
        with np.errstate(divide="raise", over="raise", invalid="raise"):
            value = _eval(node, x)
    except FloatingPointError as exc:
        raise DriftEvalError(f"{serialize(node)}: {exc}") from None
    value = np.broadcast_to(np.asarray(value, dtype=float), x.shape)
    if not np.all(np.isfinite(value)):
        raise DriftEvalError(f"{serialize(node)}: non-finite value")
    if value.ndim == 0:
        return float(value)
    return value.copy()


def fold(node: Node) -> Node:
    """Constant-fold every subtree that does not depend on ``x``."""
    if isinstance(node, (Num, Var)):
        return node
    if isinstance(node, Neg):
        inner = fold(node.operand)
        if isinstance(inner, Num):
            return Num(-inner.value)
        return Neg(inner)
    if isinstance(node, BinOp):
        left, right = fold(node.left), fold(node.right)
        if isinstance(left, Num) and isinstance(right, Num):
            return Num(evaluate(BinOp(node.op, left, right), 0.0))
        return BinOp(node.op, left, right)
    if isinstance(node, Call):
        arg = fold(node.arg)
        if isinstance(arg, Num):
            return Num(evaluate(Call(node.func, arg), 0.0))
        return Call(node.func, arg)
    raise TypeError(f"not an expression node: {node!r}")


def _linear(node: Node):
    if isinstance(node, Num):
        return 0.0, node.value
    if isinstance(node, Var):
        return 1.0, 0.0
    if isinstance(node, Neg):
        inner = _linear(node.operand)
        return None if inner is None else (-inner[0], -inner[1])
    if isinstance(node, BinOp):
        left, right = _linear(node.left), _linear(node.right)
        if left is None or right is None:
            return None
        (a1, b1), (a2, b2) = left, right
        if node.op == "+":
            return a1 + a2, b1 + b2
        if node.op == "-":
            return a1 - a2, b1 - b2
        if node.op == "*":
            if a1 == 0.0:
                return b1 * a2, b1 * b2
            if a2 == 0.0:
                return a1 * b2, b1 * b2
            return None
        if node.op == "/":
            if a2 == 0.0 and b2 != 0.0:
                return a1 / b2, b1 / b2
            return None
        if node.op == "^" and a2 == 0.0 and b2 == 1.0:
            return a1, b1
        return None
    return None


def affine_coefficients(node: Node) -> tuple[float, float] | None:
    """Return ``(a, b)`` if the folded expression is exactly ``a*x + b``, else None."""
    return _linear(fold(node))
