"""Goal specification language: lexer, AST, and recursive descent parser.

The surface language is a small goal DSL:

    drive BallNearCenter: norm(s.x, s.y) in Goal.Range(0, 0.005)
    and avoid FallOff: norm(s.x, s.y) in Goal.RangeAbove(0.1125)

Five goal operators (reach, drive, avoid, minimize, maximize) are combined
with ``and``, ``or``, ``then`` and ``until``. Precedence, loosest first:
until < then < or < and, all left associative, parentheses override.

Test expressions reference state fields as ``s.<name>`` and may use ``+``,
``-``, ``*``, ``abs(...)`` and ``norm(...)`` (Euclidean norm of its
arguments). Every referenced field must exist in the state schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Union

import yaml

from .errors import (
    DuplicateGoalNameError,
    IllegalCharacterError,
    InvalidRangeError,
    SchemaError,
    UnexpectedTokenError,
    UnknownStateFieldError,
    UnterminatedNumeralError,
)

# ---------------------------------------------------------------------------
# Tokens


class TokenKind(Enum):
    KEYWORD = "keyword"
    IDENT = "ident"
    NUMBER = "number"
    LPAREN = "("
    RPAREN = ")"
    COMMA = ","
    COLON = ":"
    DOT = "."
    PLUS = "+"
    MINUS = "-"
    STAR = "*"
    EOF = "eof"


KEYWORDS = frozenset(
    {"reach", "drive", "avoid", "minimize", "maximize", "and", "or", "then", "until", "in"}
)

_PUNCT = {
    "(": TokenKind.LPAREN,
    ")": TokenKind.RPAREN,
    ",": TokenKind.COMMA,
    ":": TokenKind.COLON,
    ".": TokenKind.DOT,
    "+": TokenKind.PLUS,
    "-": TokenKind.MINUS,
    "*": TokenKind.STAR,
}


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    column: int
    value: Optional[float] = None

    def __repr__(self) -> str:  # compact spans in error traces
        return f"Token({self.kind.name}, {self.text!r}, {self.line}:{self.column})"


def tokenize(text: str) -> list[Token]:
    """Split goal text into tokens with 1-based line/column spans.

    ``#`` starts a comment running to end of line.
    """
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(text)

    def bump(k: int) -> None:
        nonlocal i, col
        i += k
        col += k

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            bump(1)
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, line, col))
            bump(1)
            continue
        if ch.isdigit():
            start, start_col = i, col
            while i < n and text[i].isdigit():
                bump(1)
            if i < n and text[i] == ".":
                bump(1)
                if i >= n or not text[i].isdigit():
                    raise UnterminatedNumeralError(
                        "numeral ends with a bare decimal point", line, start_col
                    )
                while i < n and text[i].isdigit():
                    bump(1)
            if i < n and text[i] in "eE":
                bump(1)
                if i < n and text[i] in "+-":
                    bump(1)
                if i >= n or not text[i].isdigit():
                    raise UnterminatedNumeralError(
                        "numeral has an empty exponent", line, start_col
                    )
                while i < n and text[i].isdigit():
                    bump(1)
            lit = text[start:i]
            tokens.append(Token(TokenKind.NUMBER, lit, line, start_col, value=float(lit)))
            continue
        if ch.isalpha() or ch == "_":
            start, start_col = i, col
            while i < n and (text[i].isalnum() or text[i] == "_"):
                bump(1)
            word = text[start:i]
            kind = TokenKind.KEYWORD if word in KEYWORDS else TokenKind.IDENT
            tokens.append(Token(kind, word, line, start_col))
            continue
        raise IllegalCharacterError(f"illegal character {ch!r}", line, col)

    tokens.append(Token(TokenKind.EOF, "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# State expressions


class StateExpr:
    """Scalar expression over the environment state vector."""

    def eval(self, state: dict[str, float]) -> float:
        raise NotImplementedError

    def fields(self) -> frozenset[str]:
        raise NotImplementedError

    def interval(self, bounds: dict[str, tuple[float, float]]) -> tuple[float, float]:
        """Conservative value interval given per-field bounds."""
        raise NotImplementedError

    def pretty(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.pretty()


@dataclass(frozen=True)
class FieldRef(StateExpr):
    name: str

    def eval(self, state):
        return float(state[self.name])

    def fields(self):
        return frozenset({self.name})

    def interval(self, bounds):
        return bounds[self.name]

    def pretty(self):
        return f"s.{self.name}"


@dataclass(frozen=True)
class Const(StateExpr):
    value: float

    def eval(self, state):
        return self.value

    def fields(self):
        return frozenset()

    def interval(self, bounds):
        return (self.value, self.value)

    def pretty(self):
        return repr(self.value)


@dataclass(frozen=True)
class Neg(StateExpr):
    operand: StateExpr

    def eval(self, state):
        return -self.operand.eval(state)

    def fields(self):
        return self.operand.fields()

    def interval(self, bounds):
        lo, hi = self.operand.interval(bounds)
        return (-hi, -lo)

    def pretty(self):
        return f"-{_wrap(self.operand, 3)}"


@dataclass(frozen=True)
class Add(StateExpr):
    left: StateExpr
    right: StateExpr

    def eval(self, state):
        return self.left.eval(state) + self.right.eval(state)

    def fields(self):
        return self.left.fields() | self.right.fields()

    def interval(self, bounds):
        a, b = self.left.interval(bounds)
        c, d = self.right.interval(bounds)
        return (a + c, b + d)

    def pretty(self):
        return f"{_wrap(self.left, 1)} + {_wrap(self.right, 2)}"


@dataclass(frozen=True)
class Sub(StateExpr):
    left: StateExpr
    right: StateExpr

    def eval(self, state):
        return self.left.eval(state) - self.right.eval(state)

    def fields(self):
        return self.left.fields() | self.right.fields()

    def interval(self, bounds):
        a, b = self.left.interval(bounds)
        c, d = self.right.interval(bounds)
        return (a - d, b - c)

    def pretty(self):
        return f"{_wrap(self.left, 1)} - {_wrap(self.right, 2)}"


@dataclass(frozen=True)
class Mul(StateExpr):
    left: StateExpr
    right: StateExpr

    def eval(self, state):
        return self.left.eval(state) * self.right.eval(state)

    def fields(self):
        return self.left.fields() | self.right.fields()

    def interval(self, bounds):
        a, b = self.left.interval(bounds)
        c, d = self.right.interval(bounds)
        products = (a * c, a * d, b * c, b * d)
        return (min(products), max(products))

    def pretty(self):
        return f"{_wrap(self.left, 2)} * {_wrap(self.right, 3)}"


@dataclass(frozen=True)
class Abs(StateExpr):
    operand: StateExpr

    def eval(self, state):
        return abs(self.operand.eval(state))

    def fields(self):
        return self.operand.fields()

    def interval(self, bounds):
        lo, hi = self.operand.interval(bounds)
        if lo <= 0.0 <= hi:
            return (0.0, max(-lo, hi))
        m, M = abs(lo), abs(hi)
        return (min(m, M), max(m, M))

    def pretty(self):
        return f"abs({self.operand.pretty()})"


@dataclass(frozen=True)
class Norm(StateExpr):
    items: tuple[StateExpr, ...]

    def eval(self, state):
        return math.sqrt(sum(e.eval(state) ** 2 for e in self.items))

    def fields(self):
        out: frozenset[str] = frozenset()
        for e in self.items:
            out |= e.fields()
        return out

    def interval(self, bounds):
        lo_sq = hi_sq = 0.0
        for e in self.items:
            lo, hi = Abs(e).interval(bounds)
            lo_sq += lo * lo
            hi_sq += hi * hi
        return (math.sqrt(lo_sq), math.sqrt(hi_sq))

    def pretty(self):
        return "norm(" + ", ".join(e.pretty() for e in self.items) + ")"


_EXPR_PRECEDENCE = {Add: 1, Sub: 1, Mul: 2, Neg: 3}


def _wrap(expr: StateExpr, min_prec: int) -> str:
    prec = _EXPR_PRECEDENCE.get(type(expr), 4)
    text = expr.pretty()
    return f"({text})" if prec < min_prec else text


# ---------------------------------------------------------------------------
# Ranges and goals


class RangeKind(Enum):
    CLOSED = "closed"
    ABOVE = "above"
    BELOW = "below"


@dataclass(frozen=True)
class Range:
    """Target or avoid region on the value axis of a test expression.

    Closed ranges carry both bounds (lower strictly below upper); the
    open-ended forms carry exactly one bound.
    """

    kind: RangeKind
    lower: Optional[float] = None
    upper: Optional[float] = None

    def __post_init__(self):
        if self.kind is RangeKind.CLOSED:
            if self.lower is None or self.upper is None:
                raise ValueError("closed range needs both bounds")
            if not self.lower < self.upper:
                raise ValueError("closed range needs lower < upper")
        elif self.kind is RangeKind.ABOVE:
            if self.lower is None or self.upper is not None:
                raise ValueError("above-only range carries exactly a lower bound")
        elif self.kind is RangeKind.BELOW:
            if self.upper is None or self.lower is not None:
                raise ValueError("below-only range carries exactly an upper bound")

    @property
    def center(self) -> float:
        if self.kind is not RangeKind.CLOSED:
            raise ValueError("open-ended range has no center")
        return (self.lower + self.upper) / 2.0

    @property
    def radius(self) -> float:
        if self.kind is not RangeKind.CLOSED:
            raise ValueError("open-ended range has no radius")
        return (self.upper - self.lower) / 2.0

    def pretty(self) -> str:
        if self.kind is RangeKind.CLOSED:
            return f"Goal.Range({self.lower!r}, {self.upper!r})"
        if self.kind is RangeKind.ABOVE:
            return f"Goal.RangeAbove({self.lower!r})"
        return f"Goal.RangeBelow({self.upper!r})"

    def __str__(self) -> str:
        return self.pretty()


class GoalOp(Enum):
    REACH = "reach"
    DRIVE = "drive"
    AVOID = "avoid"
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


@dataclass(frozen=True)
class GoalAtom:
    op: GoalOp
    name: str
    expr: StateExpr
    range: Range

    def pretty(self) -> str:
        return f"{self.op.value} {self.name}: {self.expr.pretty()} in {self.range.pretty()}"


@dataclass(frozen=True)
class GoalAnd:
    left: "GoalNode"
    right: "GoalNode"


@dataclass(frozen=True)
class GoalOr:
    left: "GoalNode"
    right: "GoalNode"


@dataclass(frozen=True)
class GoalThen:
    first: "GoalNode"
    second: "GoalNode"


@dataclass(frozen=True)
class GoalUntil:
    hold: "GoalNode"
    target: "GoalNode"


GoalNode = Union[GoalAtom, GoalAnd, GoalOr, GoalThen, GoalUntil]

_GOAL_PRECEDENCE = {GoalUntil: 1, GoalThen: 2, GoalOr: 3, GoalAnd: 4, GoalAtom: 5}


def _pretty_node(node: GoalNode, min_prec: int) -> str:
    prec = _GOAL_PRECEDENCE[type(node)]
    if isinstance(node, GoalAtom):
        text = node.pretty()
    elif isinstance(node, GoalAnd):
        text = f"{_pretty_node(node.left, prec)} and {_pretty_node(node.right, prec + 1)}"
    elif isinstance(node, GoalOr):
        text = f"{_pretty_node(node.left, prec)} or {_pretty_node(node.right, prec + 1)}"
    elif isinstance(node, GoalThen):
        text = f"{_pretty_node(node.first, prec)} then {_pretty_node(node.second, prec + 1)}"
    else:
        text = f"{_pretty_node(node.hold, prec)} until {_pretty_node(node.target, prec + 1)}"
    return f"({text})" if prec < min_prec else text


@dataclass(frozen=True)
class GoalProgram:
    """Validated goal tree plus the state schema it was checked against."""

    root: GoalNode
    schema: tuple[tuple[str, float, float], ...]

    def atoms(self) -> list[GoalAtom]:
        out: list[GoalAtom] = []

        def visit(node: GoalNode) -> None:
            if isinstance(node, GoalAtom):
                out.append(node)
            elif isinstance(node, (GoalAnd, GoalOr)):
                visit(node.left)
                visit(node.right)
            elif isinstance(node, GoalThen):
                visit(node.first)
                visit(node.second)
            else:
                visit(node.hold)
                visit(node.target)

        visit(self.root)
        return out

    def bounds(self) -> dict[str, tuple[float, float]]:
        return {name: (lo, hi) for name, lo, hi in self.schema}

    def field_names(self) -> list[str]:
        return [name for name, _, _ in self.schema]

    def pretty(self) -> str:
        return _pretty_node(self.root, 0)

    def __str__(self) -> str:
        return self.pretty()


# ---------------------------------------------------------------------------
# Parser


class Parser:
    """Single pass recursive descent parser over the token stream."""

    def __init__(self, tokens: list[Token], schema: tuple[tuple[str, float, float], ...]):
        self.tokens = tokens
        self.pos = 0
        self.schema = schema
        self.known_fields = {name for name, _, _ in schema}
        self.seen_names: set[str] = set()

    # -- token plumbing

    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind is not TokenKind.EOF:
            self.pos += 1
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.current()
        return tok.kind is TokenKind.KEYWORD and tok.text == word

    def expect(self, kind: TokenKind, what: str) -> Token:
        tok = self.current()
        if tok.kind is not kind:
            raise UnexpectedTokenError(
                f"expected {what}, got {tok.text!r}" if tok.text else f"expected {what}, got end of input",
                tok.line,
                tok.column,
            )
        return self.advance()

    def expect_keyword(self, word: str) -> Token:
        tok = self.current()
        if not self.at_keyword(word):
            raise UnexpectedTokenError(
                f"expected '{word}', got {tok.text!r}", tok.line, tok.column
            )
        return self.advance()

    # -- grammar

    def parse_program(self) -> GoalNode:
        node = self.parse_until_expr()
        tok = self.current()
        if tok.kind is not TokenKind.EOF:
            raise UnexpectedTokenError(
                f"unexpected trailing input {tok.text!r}", tok.line, tok.column
            )
        return node

    def parse_until_expr(self) -> GoalNode:
        node = self.parse_then_expr()
        while self.at_keyword("until"):
            self.advance()
            right = self.parse_then_expr()
            node = GoalUntil(hold=node, target=right)
        return node

    def parse_then_expr(self) -> GoalNode:
        node = self.parse_or_expr()
        while self.at_keyword("then"):
            self.advance()
            right = self.parse_or_expr()
            node = GoalThen(first=node, second=right)
        return node

    def parse_or_expr(self) -> GoalNode:
        node = self.parse_and_expr()
        while self.at_keyword("or"):
            self.advance()
            right = self.parse_and_expr()
            node = GoalOr(left=node, right=right)
        return node

    def parse_and_expr(self) -> GoalNode:
        node = self.parse_atom()
        while self.at_keyword("and"):
            self.advance()
            right = self.parse_atom()
            node = GoalAnd(left=node, right=right)
        return node

    def parse_atom(self) -> GoalNode:
        if self.current().kind is TokenKind.LPAREN:
            self.advance()
            node = self.parse_until_expr()
            self.expect(TokenKind.RPAREN, "')'")
            return node
        return self.parse_goal()

    def parse_goal(self) -> GoalAtom:
        tok = self.current()
        ops = {op.value for op in GoalOp}
        if tok.kind is not TokenKind.KEYWORD or tok.text not in ops:
            raise UnexpectedTokenError(
                f"expected a goal operator or '(', got {tok.text!r}", tok.line, tok.column
            )
        self.advance()
        op = GoalOp(tok.text)
        name_tok = self.expect(TokenKind.IDENT, "goal name")
        if name_tok.text in self.seen_names:
            raise DuplicateGoalNameError(name_tok.text, name_tok.line, name_tok.column)
        self.seen_names.add(name_tok.text)
        self.expect(TokenKind.COLON, "':'")
        expr = self.parse_sexpr()
        self.expect_keyword("in")
        range_tok = self.current()
        rng = self.parse_range()
        self._check_range(op, rng, range_tok)
        return GoalAtom(op=op, name=name_tok.text, expr=expr, range=rng)

    def _check_range(self, op: GoalOp, rng: Range, tok: Token) -> None:
        if op is GoalOp.MINIMIZE and rng.kind is RangeKind.ABOVE:
            raise InvalidRangeError(
                "minimize requires a below-only or closed range", tok.line, tok.column
            )
        if op is GoalOp.MAXIMIZE and rng.kind is RangeKind.BELOW:
            raise InvalidRangeError(
                "maximize requires an above-only or closed range", tok.line, tok.column
            )

    # -- test expressions

    def parse_sexpr(self) -> StateExpr:
        node = self.parse_mul()
        while self.current().kind in (TokenKind.PLUS, TokenKind.MINUS):
            op = self.advance()
            right = self.parse_mul()
            node = Add(node, right) if op.kind is TokenKind.PLUS else Sub(node, right)
        return node

    def parse_mul(self) -> StateExpr:
        node = self.parse_unary()
        while self.current().kind is TokenKind.STAR:
            self.advance()
            node = Mul(node, self.parse_unary())
        return node

    def parse_unary(self) -> StateExpr:
        if self.current().kind is TokenKind.MINUS:
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> StateExpr:
        tok = self.current()
        if tok.kind is TokenKind.NUMBER:
            self.advance()
            return Const(tok.value)
        if tok.kind is TokenKind.LPAREN:
            self.advance()
            node = self.parse_sexpr()
            self.expect(TokenKind.RPAREN, "')'")
            return node
        if tok.kind is TokenKind.IDENT:
            if tok.text == "s":
                self.advance()
                self.expect(TokenKind.DOT, "'.' after 's'")
                field = self.expect(TokenKind.IDENT, "state field name")
                if field.text not in self.known_fields:
                    raise UnknownStateFieldError(field.text, field.line, field.column)
                return FieldRef(field.text)
            if tok.text == "abs":
                self.advance()
                self.expect(TokenKind.LPAREN, "'('")
                inner = self.parse_sexpr()
                self.expect(TokenKind.RPAREN, "')'")
                return Abs(inner)
            if tok.text == "norm":
                self.advance()
                self.expect(TokenKind.LPAREN, "'('")
                items = [self.parse_sexpr()]
                while self.current().kind is TokenKind.COMMA:
                    self.advance()
                    items.append(self.parse_sexpr())
                self.expect(TokenKind.RPAREN, "')'")
                return Norm(tuple(items))
        raise UnexpectedTokenError(
            f"expected a test expression, got {tok.text!r}", tok.line, tok.column
        )

    # -- ranges

    def parse_range(self) -> Range:
        goal_tok = self.expect(TokenKind.IDENT, "'Goal.Range', 'Goal.RangeAbove' or 'Goal.RangeBelow'")
        if goal_tok.text != "Goal":
            raise UnexpectedTokenError(
                f"expected 'Goal', got {goal_tok.text!r}", goal_tok.line, goal_tok.column
            )
        self.expect(TokenKind.DOT, "'.'")
        form = self.expect(TokenKind.IDENT, "'Range', 'RangeAbove' or 'RangeBelow'")
        self.expect(TokenKind.LPAREN, "'('")
        if form.text == "Range":
            lower = self.parse_signed_number()
            self.expect(TokenKind.COMMA, "','")
            upper = self.parse_signed_number()
            self.expect(TokenKind.RPAREN, "')'")
            if not lower < upper:
                raise InvalidRangeError(
                    f"range lower bound {lower!r} must be strictly below upper bound {upper!r}",
                    form.line,
                    form.column,
                )
            return Range(RangeKind.CLOSED, lower=lower, upper=upper)
        if form.text == "RangeAbove":
            bound = self.parse_signed_number()
            self.expect(TokenKind.RPAREN, "')'")
            return Range(RangeKind.ABOVE, lower=bound)
        if form.text == "RangeBelow":
            bound = self.parse_signed_number()
            self.expect(TokenKind.RPAREN, "')'")
            return Range(RangeKind.BELOW, upper=bound)
        raise UnexpectedTokenError(
            f"expected 'Range', 'RangeAbove' or 'RangeBelow', got {form.text!r}",
            form.line,
            form.column,
        )

    def parse_signed_number(self) -> float:
        sign = 1.0
        while self.current().kind is TokenKind.MINUS:
            self.advance()
            sign = -sign
        tok = self.expect(TokenKind.NUMBER, "a number")
        return sign * tok.value


def parse_goal(text: str, schema) -> GoalProgram:
    """Parse goal text against a state schema.

    ``schema`` is a sequence of ``(field, min, max)`` triples or a mapping
    ``field -> (min, max)``. Raises a ``GoalSyntaxError`` subclass with a
    source span on any lexical, grammatical or validation failure.
    """
    schema_t = normalize_schema(schema)
    tokens = tokenize(text)
    root = Parser(tokens, schema_t).parse_program()
    return GoalProgram(root=root, schema=schema_t)


# ---------------------------------------------------------------------------
# State schema documents


def normalize_schema(schema) -> tuple[tuple[str, float, float], ...]:
    if isinstance(schema, dict):
        items: Iterator = ((name, spec) for name, spec in schema.items())
        out = []
        for name, spec in items:
            if isinstance(spec, dict):
                if "min" not in spec or "max" not in spec:
                    raise SchemaError(f"schema field '{name}' needs 'min' and 'max'")
                lo, hi = spec["min"], spec["max"]
            else:
                try:
                    lo, hi = spec
                except (TypeError, ValueError):
                    raise SchemaError(
                        f"schema field '{name}' must map to {{min, max}} or a [min, max] pair"
                    ) from None
            out.append((str(name), float(lo), float(hi)))
    else:
        out = [(str(name), float(lo), float(hi)) for name, lo, hi in schema]
    for name, lo, hi in out:
        if not lo < hi:
            raise SchemaError(f"schema field '{name}' needs min < max, got [{lo}, {hi}]")
    return tuple(out)


def load_schema(path) -> tuple[tuple[str, float, float], ...]:
    """Load a state schema from a YAML (or JSON) key/value document."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError(f"cannot parse schema file {path}: {exc}") from exc
    if not isinstance(doc, dict) or not doc:
        raise SchemaError(f"schema file {path} must be a non-empty mapping")
    return normalize_schema(doc)
