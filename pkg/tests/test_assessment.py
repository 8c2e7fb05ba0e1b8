"""Per-goal metric formulas and batch aggregation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from goalforge.assessment import (
    EpisodeLog,
    aggregate,
    assess_avoid,
    assess_drive,
    assess_minmax,
    assess_reach,
    signed_region_distance,
)
from goalforge.errors import EmptyBatchError, WrongOperatorError
from goalforge.lang import (
    FieldRef,
    GoalAnd,
    GoalAtom,
    GoalOp,
    GoalProgram,
    Range,
    RangeKind,
    parse_goal,
)
from goalforge.reward import ConditioningConfig

TOL = 1e-12


def make_log(values, T=100, field="x"):
    records = [
        {"t": 0, "state": {field: values[0]}, "action": None, "event": "reset", "reward": 0.0}
    ]
    for i, v in enumerate(values, start=1):
        records.append(
            {
                "t": i,
                "state": {field: v},
                "action": [0.0],
                "automaton_state": "q0",
                "event": "self_loop",
                "reward": 0.0,
                "robustness": {},
            }
        )
    return EpisodeLog(records=records, max_episode_steps=T)


def atom(op, name="G", lo=None, hi=None, kind=RangeKind.CLOSED, field="x"):
    if kind is RangeKind.CLOSED:
        rng = Range(RangeKind.CLOSED, lo, hi)
    elif kind is RangeKind.ABOVE:
        rng = Range(RangeKind.ABOVE, lower=lo)
    else:
        rng = Range(RangeKind.BELOW, upper=hi)
    return GoalAtom(op=op, name=name, expr=FieldRef(field), range=rng)


class TestReach:
    # region [4, 6]: center 5, size (radius) 1

    def test_entered_and_ends_at_center(self):
        goal = atom(GoalOp.REACH, lo=4.0, hi=6.0)
        result = assess_reach(make_log([0.0, 5.0]), goal)
        assert result.success is True
        assert abs(result.gsr - 1.0) < TOL

    def test_final_distance_half_size(self):
        goal = atom(GoalOp.REACH, lo=4.0, hi=6.0)
        result = assess_reach(make_log([5.0, 5.5]), goal)
        assert abs(result.gsr - 0.5) < TOL

    def test_final_distance_beyond_size_scores_zero(self):
        goal = atom(GoalOp.REACH, lo=4.0, hi=6.0)
        result = assess_reach(make_log([5.0, 7.0]), goal)  # distance 2, size 1
        assert abs(result.gsr - 0.0) < TOL
        assert result.success is True  # entered earlier

    def test_never_entered(self):
        goal = atom(GoalOp.REACH, lo=4.0, hi=6.0)
        result = assess_reach(make_log([0.0, 1.0]), goal)
        assert result.success is False

    def test_positive_gsr_implies_success(self):
        goal = atom(GoalOp.REACH, lo=4.0, hi=6.0)
        rng = np.random.default_rng(4)
        for _ in range(200):
            values = list(rng.uniform(0, 10, size=int(rng.integers(1, 10))))
            result = assess_reach(make_log(values), goal)
            if result.gsr > 0:
                assert result.success

    def test_wrong_operator(self):
        with pytest.raises(WrongOperatorError):
            assess_reach(make_log([0.0]), atom(GoalOp.DRIVE, lo=4.0, hi=6.0))


class TestAvoid:
    GOAL = atom(GoalOp.AVOID, lo=8.0, hi=9.0)

    def test_full_episode_never_entered(self):
        values = [0.0] * 100
        result = assess_avoid(make_log(values, T=100), self.GOAL)
        assert result.success is True
        assert abs(result.gsr - 1.0) < TOL

    def test_entered_midway(self):
        values = [0.0] * 50 + [8.5] + [0.0] * 10
        result = assess_avoid(make_log(values, T=100), self.GOAL)
        assert result.success is False
        assert abs(result.gsr - 0.5) < TOL

    def test_entered_immediately(self):
        result = assess_avoid(make_log([8.5, 0.0], T=100), self.GOAL)
        assert abs(result.gsr - 0.0) < TOL

    def test_later_entry_never_lowers_gsr(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            first = int(rng.integers(0, 50))
            second = int(rng.integers(first, 60))
            base = [0.0] * 60
            early, late = list(base), list(base)
            early[first] = 8.5
            late[second] = 8.5
            g_early = assess_avoid(make_log(early, T=100), self.GOAL).gsr
            g_late = assess_avoid(make_log(late, T=100), self.GOAL).gsr
            assert g_late >= g_early


class TestDrive:
    GOAL = atom(GoalOp.DRIVE, lo=4.0, hi=6.0)

    def test_always_inside(self):
        result = assess_drive(make_log([5.0] * 10), self.GOAL)
        assert abs(result.gsr - 1.0) < TOL
        assert result.success is True
        assert abs(result.extras["percent_in_region"] - 1.0) < TOL

    def test_all_outside_at_reference_distance(self):
        # 100 iterations outside at the reference distance itself: floor at 0
        values = [7.0] * 100  # region distance 1.0 each step
        result = assess_drive(make_log(values, T=100), self.GOAL, reference_length=1.0)
        assert abs(result.gsr - 0.0) < TOL
        assert result.success is False

    def test_ten_of_hundred_outside_at_half_scaled_distance(self):
        values = [5.0] * 90 + [7.0] * 9 + [5.0]  # 10 outside... adjust below
        # build exactly 10 out-of-region steps, each at scaled distance 0.5
        values = [5.0] * 90 + [6.5] * 10  # raw distance 0.5 outside
        result = assess_drive(make_log(values, T=100), self.GOAL, reference_length=1.0)
        assert abs(result.gsr - 0.95) < TOL

    def test_max_target_reaching_iterations(self):
        values = [0.0, 0.0, 5.0, 7.0, 7.0, 7.0, 5.0]
        result = assess_drive(make_log(values), self.GOAL)
        assert result.extras["max_target_reaching_iterations"] == 3

    def test_never_entered_counts_whole_episode(self):
        values = [0.0] * 7
        result = assess_drive(make_log(values), self.GOAL)
        assert result.extras["max_target_reaching_iterations"] == 7


class TestMinMax:
    def test_reached_scores_one(self):
        goal = atom(GoalOp.MINIMIZE, hi=3.0, kind=RangeKind.BELOW)
        cfg = ConditioningConfig(scales={"x": (0.0, 10.0)}, max_episode_steps=100)
        result = assess_minmax(make_log([5.0, 2.0, 4.0]), goal, cfg)
        assert result.success is True
        assert abs(result.gsr - 1.0) < TOL

    def test_never_reached_mean_distance_equal_size(self):
        goal = atom(GoalOp.MINIMIZE, lo=2.0, hi=4.0)  # closed target, size 2
        values = [6.0] * 10  # distance to region = 2 = size
        result = assess_minmax(make_log(values), goal)
        assert result.success is False
        assert abs(result.gsr - 0.0) < TOL

    def test_never_reached_half_size(self):
        goal = atom(GoalOp.MINIMIZE, lo=2.0, hi=4.0)
        values = [5.0] * 10  # distance 1, size 2
        result = assess_minmax(make_log(values), goal)
        assert abs(result.gsr - 0.5) < TOL

    def test_open_range_size_falls_back_to_scale(self):
        goal = atom(GoalOp.MINIMIZE, hi=3.0, kind=RangeKind.BELOW)
        cfg = ConditioningConfig(scales={"x": (0.0, 10.0)}, max_episode_steps=100)
        values = [8.0] * 4  # distance 5, fallback size 10
        result = assess_minmax(make_log(values), goal, cfg)
        assert abs(result.gsr - 0.5) < TOL

    def test_extras(self):
        goal = atom(GoalOp.MAXIMIZE, lo=7.0, kind=RangeKind.ABOVE)
        cfg = ConditioningConfig(scales={"x": (0.0, 10.0)}, max_episode_steps=100)
        result = assess_minmax(make_log([2.0, 4.0]), goal, cfg)
        assert result.extras["mean_value"] == pytest.approx(3.0)
        assert result.extras["final_distance"] == pytest.approx(3.0)  # 7 - 4


class TestAggregate:
    def _program(self):
        schema = (("x", 0.0, 10.0),)
        return GoalProgram(
            root=GoalAnd(
                atom(GoalOp.REACH, name="R1", lo=0.5, hi=1.5),
                atom(GoalOp.REACH, name="R2", lo=8.5, hi=9.5),
            ),
            schema=schema,
        )

    def test_disjoint_successes_zero_overall(self):
        program = self._program()
        # R1 succeeds in the first half of episodes, R2 in the second half
        logs = [make_log([1.0, 1.0]) for _ in range(5)] + [
            make_log([9.0, 9.0]) for _ in range(5)
        ]
        report = aggregate(logs, program)
        assert report.per_goal["R1"]["success_rate"] == pytest.approx(0.5)
        assert report.per_goal["R2"]["success_rate"] == pytest.approx(0.5)
        assert report.overall_success_rate == 0.0

    def test_single_goal_all_succeed(self):
        schema = (("x", 0.0, 10.0),)
        program = GoalProgram(root=atom(GoalOp.REACH, name="R", lo=4.0, hi=6.0), schema=schema)
        logs = [make_log([5.0]) for _ in range(7)]
        report = aggregate(logs, program)
        assert report.overall_success_rate == 1.0

    def test_overall_gsr_is_mean_of_goal_means(self):
        program = self._program()
        logs = [make_log([1.0, 5.5])]  # R1 entered; final 5.5
        report = aggregate(logs, program)
        g1 = report.per_goal["R1"]["mean_gsr"]
        g2 = report.per_goal["R2"]["mean_gsr"]
        assert report.overall_gsr == pytest.approx((g1 + g2) / 2)

    def test_overall_never_exceeds_any_goal_rate(self):
        rng = np.random.default_rng(12)
        program = self._program()
        logs = [
            make_log(list(rng.uniform(0, 10, size=int(rng.integers(1, 8)))))
            for _ in range(20)
        ]
        report = aggregate(logs, program)
        for summary in report.per_goal.values():
            assert report.overall_success_rate <= summary["success_rate"] + TOL

    def test_empty_batch(self):
        with pytest.raises(EmptyBatchError):
            aggregate([], self._program())

    def test_report_serialization(self):
        program = self._program()
        report = aggregate([make_log([1.0])], program)
        doc = report.to_dict()
        assert "overall" in doc and "goals" in doc
        table = report.format_table()
        assert "R1" in table and "overall" in table


@given(st.lists(st.floats(min_value=0.0, max_value=10.0, allow_nan=False), min_size=1, max_size=30))
@settings(max_examples=300, deadline=None)
def test_all_gsrs_within_unit_interval(values):
    cfg = ConditioningConfig(scales={"x": (0.0, 10.0)}, max_episode_steps=100)
    log = make_log(values)
    goals = [
        atom(GoalOp.REACH, lo=4.0, hi=6.0),
        atom(GoalOp.AVOID, lo=8.0, hi=9.0),
        atom(GoalOp.DRIVE, lo=4.0, hi=6.0),
        atom(GoalOp.MINIMIZE, hi=3.0, kind=RangeKind.BELOW),
        atom(GoalOp.MAXIMIZE, lo=7.0, kind=RangeKind.ABOVE),
    ]
    for goal in goals:
        if goal.op is GoalOp.REACH:
            result = assess_reach(log, goal, cfg)
        elif goal.op is GoalOp.AVOID:
            result = assess_avoid(log, goal)
        elif goal.op is GoalOp.DRIVE:
            result = assess_drive(log, goal, cfg)
        else:
            result = assess_minmax(log, goal, cfg)
        assert 0.0 <= result.gsr <= 1.0


def test_signed_region_distance_conventions():
    closed = Range(RangeKind.CLOSED, 4.0, 6.0)
    assert signed_region_distance(closed, 5.0) == pytest.approx(-1.0)
    assert signed_region_distance(closed, 7.0) == pytest.approx(1.0)
    above = Range(RangeKind.ABOVE, lower=7.0)
    assert signed_region_distance(above, 9.0) == pytest.approx(-2.0)
    below = Range(RangeKind.BELOW, upper=3.0)
    assert signed_region_distance(below, 1.0) == pytest.approx(-2.0)
