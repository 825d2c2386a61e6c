"""Closed-form expression language for metrics, defining functions and
variations.

Grammar (highest precedence first, binary ops left associative):

    power   := atom '^' ['-'] INTEGER
    unary   := '-' unary | power
    term    := unary (('*' | '/') unary)*
    expr    := term (('+' | '-') term)*
    atom    := NUMBER | COORD | FUNC '(' expr ')' | '(' expr ')'

Coordinates are ``x1 .. xd`` (or caller-supplied names); exponents are
integer literals so jet composition stays unambiguous at non-positive
bases.  Evaluation targets a :class:`~confgeom.jets.Jet` at a point, and is
vectorized over batches of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .jets import Jet, SingularComposition

__all__ = [
    "ParseError",
    "EvalError",
    "Expression",
    "parse",
    "pretty",
    "eval_jet",
    "MetricSpec",
]

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "tanh")


class ParseError(ValueError):
    """Lexical or syntactic failure; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EvalError(ValueError):
    """Domain violation during evaluation; identifies the AST node."""

    def __init__(self, message: str, node):
        super().__init__(f"{message} (in node `{pretty(node)}` at byte {node.offset})")
        self.node = node


@dataclass(frozen=True)
class Node:
    offset: int = field(compare=False)


@dataclass(frozen=True)
class Num(Node):
    value: float = 0.0


@dataclass(frozen=True)
class Coord(Node):
    index: int = 0  # zero-based


@dataclass(frozen=True)
class Neg(Node):
    arg: "Expression" = None


@dataclass(frozen=True)
class Bin(Node):
    op: str = "+"
    lhs: "Expression" = None
    rhs: "Expression" = None


@dataclass(frozen=True)
class Pow(Node):
    base: "Expression" = None
    exponent: int = 1


@dataclass(frozen=True)
class Call(Node):
    func: str = "exp"
    arg: "Expression" = None


Expression = Node


# -- lexer -------------------------------------------------------------------

_TOKEN_CHARS = set("+-*/^()")


def _tokenize(src: str):
    tokens = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if c in _TOKEN_CHARS:
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_dot = False
            while j < n and (src[j].isdigit() or (src[j] == "." and not seen_dot)):
                seen_dot = seen_dot or src[j] == "."
                j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    while k < n and src[k].isdigit():
                        k += 1
                    j = k
            try:
                value = float(src[i:j])
            except ValueError:
                raise ParseError(f"bad numeric literal {src[i:j]!r}", i) from None
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            tokens.append(("ident", src[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("end", None, n))
    return tokens


# -- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, src: str, dim: int, names):
        self.src = src
        self.dim = dim
        self.names = {name: k for k, name in enumerate(names)}
        self.tokens = _tokenize(src)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, found {tok[0]!r}", tok[2])
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"trailing input starting with {tok[0]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in "+-":
            op, _, off = self.next()
            node = _fold(Bin(off, op, node, self.term()))
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] in "*/":
            op, _, off = self.next()
            node = _fold(Bin(off, op, node, self.unary()))
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "-":
            self.next()
            return _fold(Neg(tok[2], self.unary()))
        return self.power()

    def power(self):
        node = self.atom()
        while self.peek()[0] == "^":
            _, _, off = self.next()
            sign = 1
            if self.peek()[0] == "-":
                self.next()
                sign = -1
            tok = self.next()
            if tok[0] != "num" or tok[1] != int(tok[1]):
                raise ParseError("integer exponent required after '^'", tok[2])
            node = _fold(Pow(off, node, sign * int(tok[1])))
        return node

    def atom(self):
        kind, value, off = self.next()
        if kind == "num":
            return Num(off, float(value))
        if kind == "(":
            node = self.expr()
            tok = self.next()
            if tok[0] != ")":
                raise ParseError("unbalanced parentheses", tok[2])
            return node
        if kind == "ident":
            if value in FUNCTIONS:
                tok = self.next()
                if tok[0] != "(":
                    raise ParseError(f"function {value!r} needs '('", tok[2])
                arg = self.expr()
                tok = self.next()
                if tok[0] != ")":
                    raise ParseError("unbalanced parentheses", tok[2])
                return _fold(Call(off, value, arg))
            if value in self.names:
                idx = self.names[value]
                if idx >= self.dim:
                    raise ParseError(
                        f"coordinate {value!r} exceeds dimension {self.dim}", off
                    )
                return Coord(off, idx)
            if value[0] == "x" and value[1:].isdigit():
                raise ParseError(
                    f"coordinate {value!r} out of range for dimension {self.dim}", off
                )
            raise ParseError(f"unknown identifier {value!r}", off)
        raise ParseError(f"unexpected token {kind!r}", off)


def _fold(node):
    """Constant folding, restricted to literal subtrees to keep error
    messages pointing at recognisable source."""
    if isinstance(node, Neg) and isinstance(node.arg, Num):
        return Num(node.offset, -node.arg.value)
    if isinstance(node, Bin) and isinstance(node.lhs, Num) and isinstance(node.rhs, Num):
        a, b = node.lhs.value, node.rhs.value
        if node.op == "/" and b == 0:
            raise ParseError("division by literal zero", node.offset)
        value = {"+": a + b, "-": a - b, "*": a * b, "/": a / b if b else 0.0}[node.op]
        return Num(node.offset, value)
    if isinstance(node, Pow) and isinstance(node.base, Num):
        if node.base.value == 0 and node.exponent < 0:
            raise ParseError("zero to a negative power", node.offset)
        return Num(node.offset, float(node.base.value) ** node.exponent)
    if isinstance(node, Call) and isinstance(node.arg, Num):
        import math

        fn = getattr(math, node.func)
        try:
            return Num(node.offset, fn(node.arg.value))
        except ValueError:
            raise ParseError(f"{node.func} of out-of-domain literal", node.offset) from None
    return node


def default_names(dim: int):
    return tuple(f"x{k+1}" for k in range(dim))


def parse(src: str, dim: int, names=None) -> Expression:
    if not src or not src.strip():
        raise ParseError("empty expression", 0)
    names = names or default_names(dim)
    return _Parser(src, dim, names).parse()


# -- pretty printer ------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(node) -> int:
    if isinstance(node, (Num, Coord, Call)):
        return _PREC["atom"]
    if isinstance(node, Pow):
        return _PREC["^"]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC[node.op]


def pretty(node, names=None) -> str:
    """Canonical text form; parse(pretty(parse(s))) is a fixed point."""

    def wrap(child, minimum):
        text = pretty(child, names)
        return f"({text})" if _prec(child) < minimum else text

    if isinstance(node, Num):
        v = node.value
        return repr(int(v)) if v == int(v) and abs(v) < 1e15 else repr(v)
    if isinstance(node, Coord):
        return (names or default_names(node.index + 1))[node.index] if names else f"x{node.index+1}"
    if isinstance(node, Neg):
        return "-" + wrap(node.arg, _PREC["neg"])
    if isinstance(node, Pow):
        expo = str(node.exponent) if node.exponent >= 0 else f"({node.exponent})"
        return wrap(node.base, _PREC["^"] + 1) + "^" + expo
    if isinstance(node, Call):
        return f"{node.func}({pretty(node.arg, names)})"
    if isinstance(node, Bin):
        left = wrap(node.lhs, _PREC[node.op])
        right = wrap(node.rhs, _PREC[node.op] + 1)  # left associative
        return f"{left}{node.op}{right}"
    raise TypeError(f"not an expression node: {node!r}")


# -- evaluation ----------------------------------------------------------------


def eval_jet(node: Expression, point, order: int, dim: int | None = None) -> Jet:
    """Taylor-expand an expression at ``point`` to ``order``.

    ``point`` may carry leading batch axes; the result's batch shape follows.
    """
    point = np.asarray(point, dtype=float)
    if dim is None:
        dim = point.shape[-1]
    if point.shape[-1] != dim:
        raise EvalError(f"point has {point.shape[-1]} coords, expected {dim}", node)
    coords = [Jet.variable(a, point[..., a], dim, order) for a in range(dim)]
    return _eval(node, coords)


def _eval(node, coords):
    if isinstance(node, Num):
        sp = coords[0]
        return Jet.constant(np.full(sp.shape, node.value), sp.dim, sp.order)
    if isinstance(node, Coord):
        return coords[node.index]
    if isinstance(node, Neg):
        return -_eval(node.arg, coords)
    if isinstance(node, Bin):
        a = _eval(node.lhs, coords)
        b = _eval(node.rhs, coords)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        try:
            return a / b
        except SingularComposition:
            raise EvalError("division by a value too close to zero", node) from None
    if isinstance(node, Pow):
        base = _eval(node.base, coords)
        try:
            return base**node.exponent
        except SingularComposition:
            raise EvalError("negative power at a value too close to zero", node) from None
    if isinstance(node, Call):
        arg = _eval(node.arg, coords)
        try:
            return getattr(arg, node.func)()
        except SingularComposition as exc:
            raise EvalError(str(exc), node) from None
    raise TypeError(f"not an expression node: {node!r}")


# -- metric specifications ------------------------------------------------------


class MetricSpec:
    """Closed-form symmetric metric g_ab given by a matrix of expressions.

    The upper triangle is authoritative; entries may be source strings or
    parsed expressions.
    """

    def __init__(self, entries, dim: int | None = None, names=None):
        dim = dim if dim is not None else len(entries)
        if len(entries) != dim or any(len(row) != dim for row in entries):
            raise ValueError(f"metric matrix must be {dim}x{dim}")
        self.dim = dim
        self.names = names or default_names(dim)
        self.entries = [[None] * dim for _ in range(dim)]
        for i in range(dim):
            for j in range(i, dim):
                raw = entries[i][j]
                node = parse(raw, dim, self.names) if isinstance(raw, str) else raw
                self.entries[i][j] = node
                self.entries[j][i] = node

    @staticmethod
    def euclidean(dim: int) -> "MetricSpec":
        return MetricSpec(
            [["1" if i == j else "0" for j in range(dim)] for i in range(dim)], dim
        )

    def eval_jets(self, point, order: int) -> Jet:
        """Jet field of shape (dim, dim) + batch, batch axes leading."""
        point = np.asarray(point, dtype=float)
        rows = []
        for i in range(self.dim):
            row = []
            for j in range(self.dim):
                row.append(eval_jet(self.entries[i][j], point, order, self.dim).coeffs)
            rows.append(np.stack(row, axis=-2))
        coeffs = np.stack(rows, axis=-3)
        from .jets import jet_space

        return Jet(jet_space(self.dim, order), coeffs)
