"""STL formula trees, a concrete text syntax, and a canonical printer.

Grammar (whitespace-insensitive, case-sensitive)::

    formula := "true" | atom | "(" "not" formula ")"
             | "(" formula ("and" | "or") formula ")"
             | "(" formula "U[" int "," int "]" formula ")"
             | "(" ("F" | "G") "[" int "," int "]" formula ")"
             | "(" formula ")"
    atom    := "(" "x" int (">=" | "<=") real ")"

The parser also accepts the unary forms without their outer parentheses
(``G[0,3] (x0 >= 1)``, ``not (x0 >= 1)``); the printer always emits the
fully parenthesized form.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, Union

from .errors import IntervalError, ParseError

GEQ = ">="
LEQ = "<="


def _check_interval(a, b, offset=None):
    for bound in (a, b):
        if isinstance(bound, bool) or not isinstance(bound, int):
            raise IntervalError(f"time bound {bound!r} is not an integer", offset)
        if bound < 0:
            raise IntervalError(f"negative time bound {bound}", offset)
    if a >= b:
        raise IntervalError(f"malformed interval [{a},{b}]: need a < b", offset)


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Atom:
    var: int
    op: str
    threshold: float

    def __post_init__(self):
        if isinstance(self.var, bool) or not isinstance(self.var, int) or self.var < 0:
            raise ValueError(f"variable index must be a nonnegative int, got {self.var!r}")
        if self.op not in (GEQ, LEQ):
            raise ValueError(f"unknown comparison {self.op!r}")
        threshold = float(self.threshold)
        if not math.isfinite(threshold):
            raise ValueError("threshold must be finite")
        object.__setattr__(self, "threshold", threshold)


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Until:
    a: int
    b: int
    left: "Formula"
    right: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class Eventually:
    a: int
    b: int
    child: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class Globally:
    a: int
    b: int
    child: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


Formula = Union[TrueF, Atom, Not, And, Or, Until, Eventually, Globally]
TEMPORAL = (Until, Eventually, Globally)


def children(f: Formula) -> tuple:
    if isinstance(f, (TrueF, Atom)):
        return ()
    if isinstance(f, (Not, Eventually, Globally)):
        return (f.child,)
    return (f.left, f.right)


def walk(f: Formula) -> Iterator[Formula]:
    """Pre-order traversal of all nodes."""
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def atoms(f: Formula) -> list:
    return [node for node in walk(f) if isinstance(node, Atom)]


@dataclass(frozen=True)
class FormulaStats:
    node_count: int
    depth: int
    max_horizon: int


def stats(f: Formula) -> FormulaStats:
    """Node count, tree depth and the largest nested sum of right time bounds."""
    kids = children(f)
    sub = [stats(k) for k in kids]
    own = f.b if isinstance(f, TEMPORAL) else 0
    return FormulaStats(
        node_count=1 + sum(s.node_count for s in sub),
        depth=1 + max((s.depth for s in sub), default=0),
        max_horizon=own + max((s.max_horizon for s in sub), default=0),
    )


def max_horizon(f: Formula) -> int:
    return stats(f).max_horizon


def max_var(f: Formula) -> int:
    """Largest variable index used, or -1 when the formula has no atoms."""
    return max((a.var for a in atoms(f)), default=-1)


# -- printing -----------------------------------------------------------------

def format_real(x: float) -> str:
    text = repr(float(x))
    if text.endswith(".0"):
        text = text[:-2]
    return text


def to_text(f: Formula) -> str:
    """Canonical fully parenthesized text; ``parse(to_text(f)) == f``."""
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, Atom):
        return f"(x{f.var} {f.op} {format_real(f.threshold)})"
    if isinstance(f, Not):
        return f"(not {to_text(f.child)})"
    if isinstance(f, And):
        return f"({to_text(f.left)} and {to_text(f.right)})"
    if isinstance(f, Or):
        return f"({to_text(f.left)} or {to_text(f.right)})"
    if isinstance(f, Until):
        return f"({to_text(f.left)} U[{f.a},{f.b}] {to_text(f.right)})"
    if isinstance(f, Eventually):
        return f"(F[{f.a},{f.b}] {to_text(f.child)})"
    if isinstance(f, Globally):
        return f"(G[{f.a},{f.b}] {to_text(f.child)})"
    raise TypeError(f"not a formula: {f!r}")


# -- parsing ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<op>>=|<=)
  | (?P<punct>[()\[\],])
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)
_VAR_RE = re.compile(r"x(\d+)\Z")
_KEYWORDS = {"true", "not", "and", "or", "U", "F", "G"}


@dataclass
class _Token:
    kind: str  # num, op, punct, var, kw, end
    text: str
    offset: int


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    offset = 0  # byte offset of text[pos]
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", offset)
        kind = m.lastgroup
        value = m.group()
        if kind == "word":
            if _VAR_RE.match(value):
                kind = "var"
            elif value in _KEYWORDS:
                kind = "kw"
            else:
                raise ParseError(f"unknown word {value!r}", offset)
        if kind != "ws":
            tokens.append(_Token(kind, value, offset))
        offset += len(value.encode())
        pos = m.end()
    tokens.append(_Token("end", "", len(text.encode())))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def fail(self, expected):
        tok = self.tok
        found = repr(tok.text) if tok.kind != "end" else "end of input"
        raise ParseError(f"unexpected {found}", tok.offset, expected)

    def expect(self, text):
        if self.tok.text != text or self.tok.kind == "num":
            self.fail(repr(text))
        self.i += 1

    def parse(self):
        f = self.formula()
        if self.tok.kind != "end":
            self.fail("end of input")
        return f

    def formula(self):
        tok = self.tok
        if tok.kind == "kw" and tok.text == "true":
            self.i += 1
            return TrueF()
        if tok.kind == "kw" and tok.text == "not":
            self.i += 1
            return Not(self.formula())
        if tok.kind == "kw" and tok.text in ("F", "G"):
            self.i += 1
            a, b = self.interval()
            child = self.formula()
            return Eventually(a, b, child) if tok.text == "F" else Globally(a, b, child)
        if tok.text == "(" and tok.kind == "punct":
            return self.group()
        self.fail("'true', 'not', 'F', 'G' or '('")

    def group(self):
        self.expect("(")
        if self.tok.kind == "var":
            f = self.atom_body()
            self.expect(")")
            return f
        left = self.formula()
        tok = self.tok
        if tok.kind == "kw" and tok.text in ("and", "or"):
            self.i += 1
            right = self.formula()
            left = And(left, right) if tok.text == "and" else Or(left, right)
        elif tok.kind == "kw" and tok.text == "U":
            self.i += 1
            a, b = self.interval()
            right = self.formula()
            left = Until(a, b, left, right)
        self.expect(")")
        return left

    def atom_body(self):
        var = int(_VAR_RE.match(self.tok.text).group(1))
        self.i += 1
        if self.tok.kind != "op":
            self.fail("'>=' or '<='")
        op = self.tok.text
        self.i += 1
        if self.tok.kind != "num":
            self.fail("a real number")
        threshold = float(self.tok.text)
        self.i += 1
        return Atom(var, op, threshold)

    def interval(self):
        start = self.tok.offset
        self.expect("[")
        a = self.integer()
        self.expect(",")
        b = self.integer()
        self.expect("]")
        _check_interval(a, b, start)
        return a, b

    def integer(self):
        tok = self.tok
        if tok.kind != "num" or not re.fullmatch(r"[+-]?\d+", tok.text):
            self.fail("an integer time bound")
        value = int(tok.text)
        if value < 0:
            raise IntervalError(f"negative time bound {value}", tok.offset)
        self.i += 1
        return value


def parse(text: str) -> Formula:
    """Parse formula text into an AST.

    Raises :class:`ParseError` (with the byte offset of the failure) on
    malformed input and :class:`IntervalError` on bad time bounds.
    """
    return _Parser(text).parse()


def parse_lines(text: str) -> list:
    """Parse one formula per non-empty line, ignoring ``#`` comment lines."""
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(parse(line))
    return out
