"""Finite-trace temporal formulas, goal translation, and robustness.

Formula nodes: truth constant, predicates over the state vector, boolean
connectives, and the temporal operators eventually / until / next plus a
remaining-steps "always" whose window is the number of steps left in the
episode. Goal programs translate into this logic one rule per construct:

    reach     p  ->  F(p)
    drive     p  ->  G(F(p))        (G bound to steps remaining)
    minimize  p  ->  G(F(p))        p is "value below bound" membership
    maximize  p  ->  G(F(p))        p is "value above bound" membership
    avoid     p  ->  G(not p)
    A and B      ->  A' ^ B'
    A or  B      ->  A' v B'
    A then B     ->  F(A' ^ X(F(B')))
    B until A    ->  p_B U p_A      (atomic operands use their predicates)

Quantitative semantics (robustness) is distance based and signed: positive
inside the satisfying set, negative outside, composed through min for
conjunction, max for disjunction, and negation for complement. Qualitative
truth is defined as strictly positive robustness, so a value exactly on a
region boundary counts as false.

``trace_satisfies`` is a direct recursive evaluator over finite traces used
as a test oracle; the runtime never evaluates temporal operators directly
because automaton transitions absorb them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .errors import EmptyTraceError, NonFiniteStateError, TemporalNodePresentError
from .lang import (
    GoalAnd,
    GoalAtom,
    GoalNode,
    GoalOp,
    GoalOr,
    GoalProgram,
    GoalThen,
    GoalUntil,
    Range,
    RangeKind,
    StateExpr,
)

# ---------------------------------------------------------------------------
# Formula AST


@dataclass(frozen=True)
class TrueFormula:
    """Constant truth; robustness is +infinity."""


@dataclass(frozen=True)
class Pred:
    """Membership of a test expression's value in a region.

    Keeps the originating goal name so rewards and assessment can be
    attributed back to individual goals.
    """

    goal: str
    expr: StateExpr
    region: Range


@dataclass(frozen=True)
class Not:
    operand: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Eventually:
    operand: "Formula"


@dataclass(frozen=True)
class Next:
    operand: "Formula"


@dataclass(frozen=True)
class Until:
    hold: "Formula"
    target: "Formula"


@dataclass(frozen=True)
class AlwaysRemaining:
    """Body must hold for the remaining steps of the episode.

    The window length binds to "steps left" at evaluation time, so at trace
    position i with horizon h the body is checked on positions [i, i+h-i),
    clipped to the trace end.
    """

    operand: "Formula"


Formula = Union[TrueFormula, Pred, Not, And, Or, Eventually, Next, Until, AlwaysRemaining]

BOOLEAN_NODES = (TrueFormula, Pred, Not, And, Or)
TEMPORAL_NODES = (Eventually, Next, Until, AlwaysRemaining)


def is_boolean(formula: Formula) -> bool:
    """True when the formula contains no temporal operator."""
    if isinstance(formula, (TrueFormula, Pred)):
        return True
    if isinstance(formula, Not):
        return is_boolean(formula.operand)
    if isinstance(formula, (And, Or)):
        return is_boolean(formula.left) and is_boolean(formula.right)
    return False


def leaf_predicates(formula: Formula) -> list[Pred]:
    """All predicate leaves, left to right."""
    out: list[Pred] = []

    def visit(f: Formula) -> None:
        if isinstance(f, Pred):
            out.append(f)
        elif isinstance(f, Not):
            visit(f.operand)
        elif isinstance(f, (And, Or)):
            visit(f.left)
            visit(f.right)
        elif isinstance(f, (Eventually, Next, AlwaysRemaining)):
            visit(f.operand)
        elif isinstance(f, Until):
            visit(f.hold)
            visit(f.target)

    visit(formula)
    return out


# ---------------------------------------------------------------------------
# Translation


def atom_predicate(atom: GoalAtom) -> Pred:
    """Membership predicate of a goal atom (its target or avoid region)."""
    return Pred(goal=atom.name, expr=atom.expr, region=atom.range)


def translate(program: GoalProgram) -> Formula:
    """Translate a validated goal program into a temporal formula."""
    return _translate_node(program.root)


def _translate_node(node: GoalNode) -> Formula:
    if isinstance(node, GoalAtom):
        pred = atom_predicate(node)
        if node.op is GoalOp.REACH:
            return Eventually(pred)
        if node.op in (GoalOp.DRIVE, GoalOp.MINIMIZE, GoalOp.MAXIMIZE):
            return AlwaysRemaining(Eventually(pred))
        return AlwaysRemaining(Not(pred))  # avoid
    if isinstance(node, GoalAnd):
        return And(_translate_node(node.left), _translate_node(node.right))
    if isinstance(node, GoalOr):
        return Or(_translate_node(node.left), _translate_node(node.right))
    if isinstance(node, GoalThen):
        first = _translate_node(node.first)
        second = _translate_node(node.second)
        return Eventually(And(first, Next(Eventually(second))))
    if isinstance(node, GoalUntil):
        # Atomic operands contribute their membership predicates; composite
        # operands keep their full translations (the automaton builder then
        # rejects them as unsupported).
        hold = (
            atom_predicate(node.hold)
            if isinstance(node.hold, GoalAtom)
            else _translate_node(node.hold)
        )
        target = (
            atom_predicate(node.target)
            if isinstance(node.target, GoalAtom)
            else _translate_node(node.target)
        )
        return Until(hold=hold, target=target)
    raise TypeError(f"unknown goal node {node!r}")


# ---------------------------------------------------------------------------
# Robustness


def _check_finite(state: dict[str, float]) -> None:
    for key, value in state.items():
        if not math.isfinite(value):
            raise NonFiniteStateError(f"state field '{key}' is {value!r}")


def predicate_robustness(pred: Pred, state: dict[str, float], *, validate: bool = True) -> float:
    """Signed distance-flavoured satisfaction measure of one predicate.

    Closed region [a, b]: radius - |value - center| (positive inside).
    Above-only region (a, inf): value - a. Below-only (-inf, b): b - value.
    """
    if validate:
        _check_finite(state)
    value = pred.expr.eval(state)
    region = pred.region
    if region.kind is RangeKind.CLOSED:
        return region.radius - abs(value - region.center)
    if region.kind is RangeKind.ABOVE:
        return value - region.lower
    return region.upper - value


def formula_robustness(formula: Formula, state: dict[str, float], *, validate: bool = True) -> float:
    """Robustness of a boolean (temporal-free) formula at one state.

    Conjunction is min, disjunction is max, negation flips the sign.
    """
    if validate:
        _check_finite(state)
    return _bool_robustness(formula, state)


def _bool_robustness(formula: Formula, state: dict[str, float]) -> float:
    if isinstance(formula, TrueFormula):
        return math.inf
    if isinstance(formula, Pred):
        return predicate_robustness(formula, state, validate=False)
    if isinstance(formula, Not):
        return -_bool_robustness(formula.operand, state)
    if isinstance(formula, And):
        return min(_bool_robustness(formula.left, state), _bool_robustness(formula.right, state))
    if isinstance(formula, Or):
        return max(_bool_robustness(formula.left, state), _bool_robustness(formula.right, state))
    raise TemporalNodePresentError(
        f"temporal node {type(formula).__name__} in boolean-only evaluation"
    )


def holds(formula: Formula, state: dict[str, float]) -> bool:
    """Qualitative truth of a boolean formula: strictly positive robustness."""
    return formula_robustness(formula, state, validate=False) > 0.0


# ---------------------------------------------------------------------------
# Finite-trace semantics (test oracle)


def trace_satisfies(formula: Formula, trace: list[dict[str, float]], horizon: int | None = None) -> bool:
    """Evaluate a formula over a finite trace by direct recursion.

    Predicates are true iff robustness is strictly positive. Eventually,
    until and next use standard finite-trace semantics (next is strong: it
    fails at the last position). The remaining-steps always operator at
    position i spans positions [i, i + (horizon - i)) clipped to the trace.
    """
    if not trace:
        raise EmptyTraceError("trace must contain at least one state")
    h = len(trace) if horizon is None else horizon
    return _sat(formula, trace, 0, h)


def _sat(formula: Formula, trace: list[dict[str, float]], i: int, horizon: int) -> bool:
    n = len(trace)
    if isinstance(formula, TrueFormula):
        return True
    if isinstance(formula, Pred):
        return predicate_robustness(formula, trace[i], validate=False) > 0.0
    if isinstance(formula, Not):
        return not _sat(formula.operand, trace, i, horizon)
    if isinstance(formula, And):
        return _sat(formula.left, trace, i, horizon) and _sat(formula.right, trace, i, horizon)
    if isinstance(formula, Or):
        return _sat(formula.left, trace, i, horizon) or _sat(formula.right, trace, i, horizon)
    if isinstance(formula, Eventually):
        return any(_sat(formula.operand, trace, j, horizon) for j in range(i, n))
    if isinstance(formula, Next):
        return i + 1 < n and _sat(formula.operand, trace, i + 1, horizon)
    if isinstance(formula, Until):
        for j in range(i, n):
            if _sat(formula.target, trace, j, horizon):
                return all(_sat(formula.hold, trace, l, horizon) for l in range(i, j))
        return False
    if isinstance(formula, AlwaysRemaining):
        end = min(n, i + max(horizon - i, 0))
        return all(_sat(formula.operand, trace, j, horizon) for j in range(i, end))
    raise TypeError(f"unknown formula node {formula!r}")


# ---------------------------------------------------------------------------
# Canonical S-expression form


def to_sexpr(formula: Formula) -> str:
    """Serialize a formula to its canonical S-expression text."""
    if isinstance(formula, TrueFormula):
        return "true"
    if isinstance(formula, Pred):
        return f'(pred "{formula.goal}" {_region_sexpr(formula.region)} {_expr_sexpr(formula.expr)})'
    if isinstance(formula, Not):
        return f"(not {to_sexpr(formula.operand)})"
    if isinstance(formula, And):
        return f"(and {to_sexpr(formula.left)} {to_sexpr(formula.right)})"
    if isinstance(formula, Or):
        return f"(or {to_sexpr(formula.left)} {to_sexpr(formula.right)})"
    if isinstance(formula, Eventually):
        return f"(eventually {to_sexpr(formula.operand)})"
    if isinstance(formula, Next):
        return f"(next {to_sexpr(formula.operand)})"
    if isinstance(formula, Until):
        return f"(until {to_sexpr(formula.hold)} {to_sexpr(formula.target)})"
    if isinstance(formula, AlwaysRemaining):
        return f"(always-remaining {to_sexpr(formula.operand)})"
    raise TypeError(f"unknown formula node {formula!r}")


def _region_sexpr(region: Range) -> str:
    if region.kind is RangeKind.CLOSED:
        return f"(range {region.lower!r} {region.upper!r})"
    if region.kind is RangeKind.ABOVE:
        return f"(range-above {region.lower!r})"
    return f"(range-below {region.upper!r})"


def _expr_sexpr(expr: StateExpr) -> str:
    from . import lang

    if isinstance(expr, lang.FieldRef):
        return f"(field {expr.name})"
    if isinstance(expr, lang.Const):
        return f"(const {expr.value!r})"
    if isinstance(expr, lang.Neg):
        return f"(neg {_expr_sexpr(expr.operand)})"
    if isinstance(expr, lang.Add):
        return f"(add {_expr_sexpr(expr.left)} {_expr_sexpr(expr.right)})"
    if isinstance(expr, lang.Sub):
        return f"(sub {_expr_sexpr(expr.left)} {_expr_sexpr(expr.right)})"
    if isinstance(expr, lang.Mul):
        return f"(mul {_expr_sexpr(expr.left)} {_expr_sexpr(expr.right)})"
    if isinstance(expr, lang.Abs):
        return f"(abs {_expr_sexpr(expr.operand)})"
    if isinstance(expr, lang.Norm):
        return "(norm " + " ".join(_expr_sexpr(e) for e in expr.items) + ")"
    raise TypeError(f"unknown expression node {expr!r}")
