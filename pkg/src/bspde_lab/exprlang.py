"""Small arithmetic language for coefficients, drivers and terminal data.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)? ')' | '(' expr ')'

so ``^`` binds tighter than unary minus (``-x^2 == -(x^2)``) and is right
associative.  Evaluation is vectorised: identifiers may be bound to numpy
arrays and the result broadcasts.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from .errors import DriverError, ExpressionError

IDENTIFIERS = frozenset({"t", "x", "u", "ux", "Z", "rint", "pi", "B", "L"})
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "log": 1,
    "abs": 1,
    "sqrt": 1,
    "min": 2,
    "max": 2,
}


@dataclass(frozen=True)
class Num:
    value: float
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]
    offset: int = field(default=0, compare=False)


Expr = Union[Num, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
    |(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
    |(?P<ident>[A-Za-z_][A-Za-z_0-9]*)
    |(?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, allowed: frozenset[str]):
        self.source = source
        self.allowed = allowed
        self.tokens = tokenize(source)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, offset: int) -> ExpressionError:
        return ExpressionError(message, offset, self.source)

    def expect(self, text: str, opener: int | None = None) -> None:
        kind, value, pos = self.take()
        if value != text:
            if text == ")" and opener is not None:
                raise self.error("unbalanced parentheses: '(' is never closed", opener)
            raise self.error(f"expected {text!r}, found {value or 'end of input'!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            if value == ")":
                raise self.error("unbalanced parentheses: unmatched ')'", pos)
            raise self.error(f"unexpected token {value!r}", pos)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-"):
            _, op, pos = self.take()
            left = BinOp(op, left, self.term(), pos)
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/"):
            _, op, pos = self.take()
            left = BinOp(op, left, self.unary(), pos)
        return left

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            _, _, pos = self.take()
            return Neg(self.unary(), pos)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^":
            _, _, pos = self.take()
            return BinOp("^", base, self.unary(), pos)
        return base

    def atom(self) -> Expr:
        kind, value, pos = self.take()
        if kind == "num":
            return Num(float(value), pos)
        if kind == "ident":
            if self.peek()[1] == "(":
                return self.call(value, pos)
            if value in FUNCTIONS:
                raise self.error(f"function {value!r} used without arguments", pos)
            if value not in self.allowed:
                raise self.error(f"unknown identifier {value!r}", pos)
            return Var(value, pos)
        if value == "(":
            inner = self.expr()
            self.expect(")", opener=pos)
            return inner
        if value == ")":
            raise self.error("unbalanced parentheses: unmatched ')'", pos)
        raise self.error(f"unexpected {value or 'end of input'!r}", pos)

    def call(self, name: str, pos: int) -> Expr:
        if name not in FUNCTIONS:
            raise self.error(f"unknown function {name!r}", pos)
        _, _, open_pos = self.take()
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")", opener=open_pos)
        if len(args) != FUNCTIONS[name]:
            raise self.error(
                f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", pos
            )
        return Call(name, tuple(args), pos)


def parse(source: str, allowed: Iterable[str] = IDENTIFIERS) -> Expr:
    """Parse ``source`` into an AST, rejecting identifiers outside ``allowed``."""
    allowed = frozenset(allowed) | frozenset(CONSTANTS)
    unknown = allowed - IDENTIFIERS
    if unknown:
        raise ValueError(f"not part of the identifier set: {sorted(unknown)}")
    return _Parser(source, allowed).parse()


def to_source(e: Expr) -> str:
    """Fully parenthesised source text that parses back to ``e``."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def free_identifiers(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset() if e.name in CONSTANTS else frozenset({e.name})
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Neg):
        return free_identifiers(e.operand)
    if isinstance(e, BinOp):
        return free_identifiers(e.left) | free_identifiers(e.right)
    return frozenset().union(*(free_identifiers(a) for a in e.args))


def _domain(message: str, e: Expr) -> DriverError:
    return DriverError(message, e.offset)


def evaluate(e: Expr, env: Mapping[str, object]):
    """Evaluate ``e`` with identifiers bound by ``env`` (floats or arrays)."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.name in CONSTANTS:
            return CONSTANTS[e.name]
        try:
            return env[e.name]
        except KeyError:
            raise _domain(f"unbound identifier {e.name!r}", e) from None
    if isinstance(e, Neg):
        return -np.asarray(evaluate(e.operand, env))
    if isinstance(e, BinOp):
        a = np.asarray(evaluate(e.left, env), dtype=float)
        b = np.asarray(evaluate(e.right, env), dtype=float)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(b == 0.0):
                raise _domain("division by zero", e)
            return a / b
        with np.errstate(all="ignore"):
            return np.power(a, b)
    args = [np.asarray(evaluate(a, env), dtype=float) for a in e.args]
    name = e.name
    if name == "log":
        if np.any(args[0] <= 0.0):
            raise _domain("log of a nonpositive value", e)
        return np.log(args[0])
    if name == "sqrt":
        if np.any(args[0] < 0.0):
            raise _domain("sqrt of a negative value", e)
        return np.sqrt(args[0])
    if name == "min":
        return np.minimum(args[0], args[1])
    if name == "max":
        return np.maximum(args[0], args[1])
    with np.errstate(over="ignore"):
        return {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}[name](args[0])


class Expression:
    """A parsed source string, callable with keyword bindings."""

    def __init__(self, source: str, allowed: Iterable[str] = IDENTIFIERS):
        self.source = source
        self.ast = parse(source, allowed)
        self.identifiers = free_identifiers(self.ast)

    def __call__(self, **env):
        value = evaluate(self.ast, env)
        if np.ndim(value) == 0:
            return float(value)
        return value

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"
