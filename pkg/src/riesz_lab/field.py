"""External fields Q: a small expression language and grid-valued fields.

Grammar (standard precedence, ``^`` binds tightest and is right-associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | COORD | FUNC '(' [expr (',' expr)*] ')' | '(' expr ')'

``COORD`` is ``x1`` .. ``xd``.  Functions: ``abs(e)``, ``norm()`` (= |x|) and
``dist(p1, ..., pd)`` (= |x - p|, the arguments being the coordinates of p).

Every node evaluates to values *and* gradients with respect to x, so fields
can drive gradient-based Fekete optimization.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "FieldSyntaxError",
    "FieldExpression",
    "parse_field",
    "ExternalField",
    "ExpressionField",
    "GridField",
    "constant_field",
    "as_field",
]


class FieldSyntaxError(ValueError):
    """Malformed field expression; ``offset`` is the 0-based source position."""

    def __init__(self, message: str, offset: int, source: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.source = source


# ---------------------------------------------------------------- parse tree

class Node:
    precedence = 100

    def evaluate(self, x):
        """Return (values (P,), gradients (P, d)) at points x (P, d)."""
        raise NotImplementedError

    def is_constant(self) -> bool:
        return False


@dataclass(frozen=True)
class Num(Node):
    value: float

    def evaluate(self, x):
        return np.full(len(x), self.value), np.zeros_like(x)

    def is_constant(self):
        return True

    def pretty(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Coord(Node):
    index: int  # 0-based

    def evaluate(self, x):
        g = np.zeros_like(x)
        g[:, self.index] = 1.0
        return x[:, self.index].copy(), g

    def pretty(self):
        return f"x{self.index + 1}"


@dataclass(frozen=True)
class Neg(Node):
    operand: Node
    precedence = 3

    def evaluate(self, x):
        v, g = self.operand.evaluate(x)
        return -v, -g

    def is_constant(self):
        return self.operand.is_constant()

    def pretty(self):
        inner = self.operand.pretty()
        # a negative literal or a nested negation still parses back the same way
        if self.operand.precedence < self.precedence:
            inner = f"({inner})"
        return f"-{inner}"


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    @property
    def precedence(self):
        return {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}[self.op]

    def is_constant(self):
        return self.left.is_constant() and self.right.is_constant()

    def evaluate(self, x):
        a, ga = self.left.evaluate(x)
        b, gb = self.right.evaluate(x)
        if self.op == "+":
            return a + b, ga + gb
        if self.op == "-":
            return a - b, ga - gb
        if self.op == "*":
            return a * b, ga * b[:, None] + gb * a[:, None]
        if self.op == "/":
            # division by zero yields inf; callers check finiteness on the mesh
            with np.errstate(divide="ignore", invalid="ignore"):
                v = a / b
                return v, (ga - gb * v[:, None]) / b[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.power(a, b)
            g = ga * (b * np.power(a, b - 1.0))[:, None]
            g = np.where(np.isfinite(g), g, 0.0)
            if not self.right.is_constant():
                g = g + gb * (v * np.log(a))[:, None]
        return v, g

    def pretty(self):
        p = self.precedence
        left, right = self.left.pretty(), self.right.pretty()
        if self.op == "^":
            # right-associative: only the left side needs guarding at equal precedence
            if self.left.precedence <= p:
                left = f"({left})"
            if self.right.precedence < p and not isinstance(self.right, Neg):
                right = f"({right})"
            return f"{left}^{right}"
        if self.left.precedence < p:
            left = f"({left})"
        if self.right.precedence <= p:
            right = f"({right})"
        return f"{left} {self.op} {right}"


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple

    def is_constant(self):
        return False

    def evaluate(self, x):
        if self.name == "abs":
            v, g = self.args[0].evaluate(x)
            return np.abs(v), g * np.sign(v)[:, None]
        if self.name == "norm":
            diff = x
        else:  # dist
            centre = np.array([a.evaluate(x[:1])[0][0] for a in self.args])
            diff = x - centre
        r = np.linalg.norm(diff, axis=1)
        safe = np.where(r > 0, r, 1.0)
        return r, np.where(r[:, None] > 0, diff / safe[:, None], 0.0)

    def pretty(self):
        return f"{self.name}({', '.join(a.pretty() for a in self.args)})"


# ---------------------------------------------------------------- tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_FUNCS = {"abs", "norm", "dist"}


def _tokenize(source: str):
    pos = 0
    tokens = []
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            start = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise FieldSyntaxError(f"unexpected character {source[start]!r}", start, source)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, d: int):
        self.source = source
        self.d = d
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return FieldSyntaxError(message, tok[2], self.source)

    def expect(self, text):
        tok = self.peek()
        if tok[1] != text or tok[0] != "op":
            raise self.error(f"expected {text!r}")
        return self.advance()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "name":
            self.advance()
            m = re.fullmatch(r"x(\d+)", text)
            if m:
                k = int(m.group(1))
                if not 1 <= k <= self.d:
                    raise FieldSyntaxError(f"coordinate {text} out of range 1..{self.d}", pos, self.source)
                return Coord(k - 1)
            if text not in _FUNCS:
                raise FieldSyntaxError(f"unknown identifier {text!r}", pos, self.source)
            return self.call(text, pos)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {text!r}")

    def call(self, name, pos):
        self.expect("(")
        args = []
        if not (self.peek()[0] == "op" and self.peek()[1] == ")"):
            args.append(self.expr())
            while self.peek()[0] == "op" and self.peek()[1] == ",":
                self.advance()
                args.append(self.expr())
        self.expect(")")
        want = {"abs": 1, "norm": 0, "dist": self.d}[name]
        if len(args) != want:
            raise FieldSyntaxError(f"{name} takes {want} argument(s), got {len(args)}", pos, self.source)
        if name == "dist" and not all(a.is_constant() for a in args):
            raise FieldSyntaxError("dist arguments must be constant coordinates", pos, self.source)
        return Call(name, tuple(args))


@dataclass(frozen=True)
class FieldExpression:
    """Parsed field expression over x1..xd."""

    root: Node
    d: int
    source: str = ""

    def evaluate(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if x.shape[1] != self.d:
            raise ValueError(f"field expects points in R^{self.d}")
        return self.root.evaluate(x)

    def pretty(self) -> str:
        return self.root.pretty()

    def __str__(self):
        return self.pretty()


def parse_field(source: str, d: int) -> FieldExpression:
    """Parse ``source`` into a field over R^d; raises FieldSyntaxError with position."""
    return FieldExpression(_Parser(source, int(d)).parse(), int(d), source)


# ---------------------------------------------------------------- fields


class ExternalField:
    """A continuous weight Q on K (plus a constant offset)."""

    offset: float = 0.0

    def __call__(self, points) -> np.ndarray:
        return self._values(np.atleast_2d(np.asarray(points, dtype=float))) + self.offset

    def gradient(self, points) -> np.ndarray:
        raise NotImplementedError

    def _values(self, points):
        raise NotImplementedError

    def shifted(self, c: float) -> "ExternalField":
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class ExpressionField(ExternalField):
    def __init__(self, expression: FieldExpression | str, d: int | None = None, offset: float = 0.0):
        if isinstance(expression, str):
            if d is None:
                raise ValueError("ambient dimension needed to parse a field string")
            expression = parse_field(expression, d)
        self.expression = expression
        self.offset = float(offset)

    @property
    def d(self):
        return self.expression.d

    def _values(self, points):
        return self.expression.evaluate(points)[0]

    def gradient(self, points):
        return self.expression.evaluate(points)[1]

    def shifted(self, c):
        return ExpressionField(self.expression, offset=self.offset + c)

    def describe(self):
        return {"kind": "expression", "expression": self.expression.pretty(), "offset": self.offset}

    def __repr__(self):
        return f"ExpressionField({self.expression.pretty()!r}, offset={self.offset})"


class GridField(ExternalField):
    """Field given by values at mesh points; off-mesh points take the nearest node's value."""

    def __init__(self, points, values, offset: float = 0.0):
        self.points = np.array(points, dtype=float)
        self.values = np.array(values, dtype=float)
        if len(self.points) != len(self.values):
            raise ValueError("one value per grid point required")
        self.offset = float(offset)
        self._tree = cKDTree(self.points)

    def _values(self, points):
        _, idx = self._tree.query(points)
        return self.values[idx]

    def gradient(self, points):
        return np.zeros_like(np.atleast_2d(np.asarray(points, dtype=float)))

    def shifted(self, c):
        return GridField(self.points, self.values, self.offset + c)

    def describe(self):
        return {"kind": "grid", "n_points": len(self.points), "offset": self.offset}


def constant_field(c: float, d: int) -> ExpressionField:
    return ExpressionField(parse_field("0", d), offset=float(c))


def as_field(q, d: int) -> ExternalField:
    """Coerce None / number / expression string / field into an ExternalField."""
    if q is None:
        return constant_field(0.0, d)
    if isinstance(q, ExternalField):
        return q
    if isinstance(q, (int, float)):
        return constant_field(float(q), d)
    if isinstance(q, str):
        return ExpressionField(q, d)
    raise TypeError(f"cannot interpret {type(q).__name__} as an external field")
