"""Translation rules, robustness calculus, and finite-trace semantics."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from goalforge.errors import EmptyTraceError, NonFiniteStateError, TemporalNodePresentError
from goalforge.lang import FieldRef, GoalAtom, GoalOp, Range, RangeKind, parse_goal
from goalforge.logic import (
    AlwaysRemaining,
    And,
    Eventually,
    Next,
    Not,
    Or,
    Pred,
    Until,
    atom_predicate,
    formula_robustness,
    is_boolean,
    leaf_predicates,
    predicate_robustness,
    to_sexpr,
    trace_satisfies,
    translate,
)

from oracles import ORACLE_SCHEMA, random_program, random_trace

import numpy as np


def pred_in(lo, hi, field="x", goal="G"):
    return Pred(goal=goal, expr=FieldRef(field), region=Range(RangeKind.CLOSED, lo, hi))


def pred_below(c, field="x", goal="G"):
    return Pred(goal=goal, expr=FieldRef(field), region=Range(RangeKind.BELOW, upper=c))


def pred_above(c, field="x", goal="G"):
    return Pred(goal=goal, expr=FieldRef(field), region=Range(RangeKind.ABOVE, lower=c))


class TestTranslation:
    def test_reach_becomes_eventually(self, xy_schema):
        program = parse_goal("reach R: s.x in Goal.Range(2, 50)", xy_schema)
        formula = translate(program)
        assert isinstance(formula, Eventually)
        assert isinstance(formula.operand, Pred)
        assert formula.operand.goal == "R"

    def test_drive_becomes_always_eventually(self, xy_schema):
        program = parse_goal("drive D: s.x in Goal.Range(2, 5)", xy_schema)
        formula = translate(program)
        assert isinstance(formula, AlwaysRemaining)
        assert isinstance(formula.operand, Eventually)

    def test_minimize_maximize_like_drive(self, xy_schema):
        mini = translate(parse_goal("minimize M: s.x in Goal.RangeBelow(3)", xy_schema))
        maxi = translate(parse_goal("maximize M: s.x in Goal.RangeAbove(3)", xy_schema))
        for formula in (mini, maxi):
            assert isinstance(formula, AlwaysRemaining)
            assert isinstance(formula.operand, Eventually)
            assert isinstance(formula.operand.operand, Pred)

    def test_avoid_becomes_always_not(self, xy_schema):
        formula = translate(parse_goal("avoid A: s.x in Goal.RangeAbove(8)", xy_schema))
        assert isinstance(formula, AlwaysRemaining)
        assert isinstance(formula.operand, Not)
        assert isinstance(formula.operand.operand, Pred)

    def test_and_or(self, xy_schema):
        text = "reach A: s.x in Goal.Range(0, 1) and reach B: s.y in Goal.Range(0, 1)"
        assert isinstance(translate(parse_goal(text, xy_schema)), And)
        text = text.replace("and", "or")
        assert isinstance(translate(parse_goal(text, xy_schema)), Or)

    def test_then_shape(self, xy_schema):
        text = "reach A: s.x in Goal.Range(0, 1) then reach B: s.y in Goal.Range(0, 1)"
        formula = translate(parse_goal(text, xy_schema))
        assert isinstance(formula, Eventually)
        assert isinstance(formula.operand, And)
        assert isinstance(formula.operand.right, Next)
        assert isinstance(formula.operand.right.operand, Eventually)

    def test_until_over_atoms_uses_predicates(self, xy_schema):
        text = "drive B: s.x in Goal.Range(0, 2) until reach A: s.y in Goal.Range(0, 1)"
        formula = translate(parse_goal(text, xy_schema))
        assert isinstance(formula, Until)
        assert isinstance(formula.hold, Pred) and formula.hold.goal == "B"
        assert isinstance(formula.target, Pred) and formula.target.goal == "A"

    def test_leaf_count_matches_atom_count(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            program = random_program(rng)
            formula = translate(program)
            assert len(leaf_predicates(formula)) == len(program.atoms())

    def test_negation_only_above_predicates(self):
        rng = np.random.default_rng(8)

        def check(formula):
            if isinstance(formula, Not):
                assert isinstance(formula.operand, Pred)
            for attr in ("operand", "left", "right", "hold", "target"):
                child = getattr(formula, attr, None)
                if child is not None and not isinstance(child, (str,)):
                    if hasattr(child, "__dataclass_fields__"):
                        check(child)

        for _ in range(50):
            check(translate(random_program(rng)))


class TestRobustness:
    def test_below_bound_rule(self):
        # value 3 against "below 5" leaves a margin of 2
        assert predicate_robustness(pred_below(5.0), {"x": 3.0}) == pytest.approx(2.0)

    def test_above_bound_rule(self):
        assert predicate_robustness(pred_above(5.0), {"x": 8.0}) == pytest.approx(3.0)

    def test_closed_range_center_at_26(self):
        # [2, 50]: center 26, radius 24; dead center scores the full radius
        assert predicate_robustness(pred_in(2.0, 50.0), {"x": 26.0}) == pytest.approx(24.0)

    def test_closed_range_outside(self):
        assert predicate_robustness(pred_in(2.0, 50.0), {"x": 60.0}) == pytest.approx(-10.0)

    def test_non_finite_state_rejected(self):
        with pytest.raises(NonFiniteStateError):
            predicate_robustness(pred_in(0.0, 1.0), {"x": float("nan")})

    def test_min_rule_for_and(self):
        p, q = pred_above(0.0), pred_below(0.0)
        state = {"x": 1.0}  # rho_p = 1.0, rho_q = -1.0... use separate fields
        p = pred_above(0.0, field="x")
        q = pred_below(-0.5, field="y")
        state = {"x": 1.0, "y": 0.0}  # rho_p = 1.0, rho_q = -0.5
        assert formula_robustness(And(p, q), state) == pytest.approx(-0.5)
        assert formula_robustness(Or(p, q), state) == pytest.approx(1.0)

    def test_negation_rule(self):
        p = pred_above(0.7, field="x")
        state = {"x": 1.0}  # rho = 0.3
        assert formula_robustness(Not(p), state) == pytest.approx(-0.3)

    def test_temporal_node_rejected(self):
        with pytest.raises(TemporalNodePresentError):
            formula_robustness(Eventually(pred_above(0.0)), {"x": 1.0})

    @given(
        st.floats(min_value=-100, max_value=100, allow_nan=False),
        st.floats(min_value=-100, max_value=100, allow_nan=False),
        st.floats(min_value=-100, max_value=100, allow_nan=False),
    )
    @settings(max_examples=200, deadline=None)
    def test_de_morgan_at_robustness_level(self, x, y, z):
        p = pred_in(-10.0, 10.0, field="x")
        q = pred_above(0.0, field="y")
        r = pred_below(5.0, field="z")
        state = {"x": x, "y": y, "z": z}
        lhs = formula_robustness(Not(And(p, Or(q, r))), state)
        rhs = formula_robustness(Or(Not(p), And(Not(q), Not(r))), state)
        assert lhs == pytest.approx(rhs)

    @given(st.floats(min_value=-20, max_value=20, allow_nan=False))
    @settings(max_examples=300, deadline=None)
    def test_sign_coherence(self, x):
        # qualitative truth is exactly "robustness strictly positive"
        for pred in (pred_in(-3.0, 7.0), pred_below(1.5), pred_above(-2.5)):
            rho = predicate_robustness(pred, {"x": x})
            closed = pred.region
            if closed.kind is RangeKind.CLOSED:
                inside = closed.lower < x < closed.upper
            elif closed.kind is RangeKind.ABOVE:
                inside = x > closed.lower
            else:
                inside = x < closed.upper
            assert (rho > 0) == inside


class TestTraceSemantics:
    def test_avoid_trace_never_entering(self):
        formula = AlwaysRemaining(Not(pred_in(4.0, 6.0)))
        trace = [{"x": v} for v in (0.0, 1.0, 2.0, 3.0)]
        assert trace_satisfies(formula, trace)

    def test_eventually_entering_at_step_3(self):
        formula = Eventually(pred_in(4.0, 6.0))
        trace = [{"x": v} for v in (0, 1, 2, 5, 0, 0, 0, 0, 0, 0)]
        assert trace_satisfies(formula, trace)

    def test_drive_enter_then_leave_fails(self):
        # anchor case for drive semantics: the trace must end inside
        formula = AlwaysRemaining(Eventually(pred_in(4.0, 6.0)))
        trace = [{"x": v} for v in (0, 5, 0, 0)]
        assert not trace_satisfies(formula, trace)
        trace_ending_inside = [{"x": v} for v in (0, 5, 0, 5)]
        assert trace_satisfies(formula, trace_ending_inside)

    def test_next_is_strong(self):
        formula = Next(pred_above(0.0))
        assert not trace_satisfies(formula, [{"x": 5.0}])
        assert trace_satisfies(formula, [{"x": -1.0}, {"x": 5.0}])

    def test_until_semantics(self):
        formula = Until(hold=pred_above(0.0), target=pred_in(4.0, 6.0))
        good = [{"x": v} for v in (1, 2, 5)]
        assert trace_satisfies(formula, good)
        bad = [{"x": v} for v in (1, -1, 5)]
        assert not trace_satisfies(formula, bad)
        instant = [{"x": 5.0}]
        assert trace_satisfies(formula, instant)

    def test_empty_trace_rejected(self):
        with pytest.raises(EmptyTraceError):
            trace_satisfies(Eventually(pred_above(0.0)), [])

    def test_eventually_iff_positive_robustness_somewhere(self):
        rng = np.random.default_rng(5)
        pred = pred_in(2.0, 4.5, field="a")
        formula = Eventually(pred)
        for _ in range(200):
            trace = random_trace(rng, max_len=12)
            expected = any(predicate_robustness(pred, s) > 0 for s in trace)
            assert trace_satisfies(formula, trace) == expected


class TestSexpr:
    def test_canonical_form_golden(self, xy_schema):
        program = parse_goal(
            "drive D: norm(s.x, s.y) in Goal.Range(0, 0.5) and avoid A: s.x in Goal.RangeAbove(8)",
            xy_schema,
        )
        text = to_sexpr(translate(program))
        assert text == (
            '(and (always-remaining (eventually (pred "D" (range 0.0 0.5) '
            "(norm (field x) (field y))))) "
            '(always-remaining (not (pred "A" (range-above 8.0) (field x)))))'
        )

    def test_boolean_detection(self):
        assert is_boolean(And(pred_above(0.0), Not(pred_below(1.0))))
        assert not is_boolean(Eventually(pred_above(0.0)))
