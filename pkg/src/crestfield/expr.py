"""Arithmetic expressions for user-defined supremands.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? power
    power  := atom ('^' factor)?
    atom   := number | ident | func '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation is vectorised: variables bind to numpy arrays (or floats) and the
result broadcasts.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ParseError

VARIABLES = frozenset(
    ["x1", "x2", "u1", "u2", "g11", "g12", "g21", "g22", "s11", "s12", "s22", "t"]
    + [f"h{a}{i}{j}" for a in (1, 2) for i in (1, 2) for j in (1, 2)]
)
CONSTANTS = {"pi": math.pi}

# name -> (min args, max args)
FUNCTIONS = {
    "abs": (1, 1),
    "sqrt": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
    "exp": (1, 1),
    "min": (2, None),
    "max": (2, None),
    "pow": (2, 2),
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + (len(rest) - len(rest.lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", _byte_offset(text, bad))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte_offset(text, start)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text, index):
    return len(text[:index].encode("utf-8"))


_EXPR_START = frozenset({"number", "identifier", "'('", "'-'"})


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op, expected):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"unexpected {_describe(self.peek())}", off, expected)
        self.take()

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {_describe(self.peek())}",
                             off, {"operator", "end of input"})
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.power())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.factor())
        return base

    def atom(self):
        kind, val, off = self.peek()
        if kind == "num":
            self.take()
            return Num(float(val))
        if kind == "ident":
            self.take()
            if val in FUNCTIONS:
                return self.call(val, off)
            if val in VARIABLES:
                return Var(val)
            if val in CONSTANTS:
                return Var(val)
            raise ParseError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.expect_op(")", {"')'"})
            return node
        expected = {"number", "identifier", "'('"}
        raise ParseError(f"unexpected {_describe(self.peek())}, expected expression", off, expected)

    def call(self, name, offset):
        self.expect_op("(", {"'('"})
        args = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect_op(")", {"')'", "','"})
        lo, hi = FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = str(lo) if lo == hi else (f"{lo}+" if hi is None else f"{lo}-{hi}")
            raise ParseError(f"{name}() takes {want} arguments, got {len(args)}", offset)
        return Call(name, tuple(args))


def _describe(tok):
    kind, val, _ = tok
    if kind == "end":
        return "end of input"
    return f"{val!r}"


def parse_expr(text):
    """Parse ``text`` into an AST; raises :class:`ParseError` with a byte offset."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0, _EXPR_START)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# pretty printing with minimal parentheses

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def _wrap(node, min_prec):
    s = to_text(node)
    return s if _prec(node) >= min_prec else f"({s})"


def to_text(node):
    """Render an AST back to source; ``parse_expr(to_text(a))`` rebuilds ``a``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, _PREC["^"])
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, BinOp):
        if node.op in "+-":
            return f"{_wrap(node.left, 1)} {node.op} {_wrap(node.right, 2)}"
        if node.op in "*/":
            return f"{_wrap(node.left, 2)} {node.op} {_wrap(node.right, 3)}"
        return f"{_wrap(node.left, 5)}^{_wrap(node.right, 3)}"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------


def variables(node):
    """Set of variable names referenced by an AST (constants excluded)."""
    if isinstance(node, Var):
        return set() if node.name in CONSTANTS else {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set().union(*(variables(a) for a in node.args))


_UNARY = {"abs": np.abs, "sqrt": np.sqrt, "sin": np.sin, "cos": np.cos, "exp": np.exp}


def evaluate(node, env):
    """Evaluate an AST with variables bound from ``env`` (arrays broadcast)."""
    with np.errstate(all="ignore"):
        return _eval(node, env)


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name in CONSTANTS:
            return CONSTANTS[node.name]
        try:
            return env[node.name]
        except KeyError:
            raise KeyError(f"variable {node.name!r} is not available here") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return np.divide(a, b)
        return np.power(a, b)
    args = [_eval(a, env) for a in node.args]
    if node.func in _UNARY:
        return _UNARY[node.func](args[0])
    if node.func == "pow":
        return np.power(args[0], args[1])
    reduce = np.minimum if node.func == "min" else np.maximum
    out = args[0]
    for a in args[1:]:
        out = reduce(out, a)
    return out
