"""Goal assessment metrics computed from episode logs.

Rewards alone say little about how well a policy meets its goals, so every
goal operator gets a success flag and a goal satisfaction rate (GSR) in
[0, 1], plus operator-specific extras:

* reach: success when the target was entered; GSR compares the episode's
  final distance-to-center against the region size.
* avoid: success when the region was never entered; GSR is the fraction of
  the maximum episode length survived before entry.
* drive: success when the final state is inside the region; GSR penalizes
  out-of-region iterations by their mean scaled distance.
* minimize / maximize: success when the bound was crossed at least once;
  GSR falls off with the mean distance from the target region.

Per-batch aggregation reports a per-goal success rate, an overall success
rate counting episodes where every goal succeeded, and the mean of the
per-goal satisfaction rates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import EmptyBatchError, WrongOperatorError
from .lang import GoalAtom, GoalOp, GoalProgram, Range, RangeKind
from .logic import atom_predicate, predicate_robustness
from .reward import ConditioningConfig


@dataclass
class EpisodeLog:
    """Ordered step records of one episode (the reward engine's log format)."""

    records: list[dict]
    max_episode_steps: int

    @classmethod
    def from_jsonl(cls, path, max_episode_steps: int) -> "EpisodeLog":
        records = [json.loads(line) for line in Path(path).read_text().splitlines() if line]
        return cls(records=records, max_episode_steps=max_episode_steps)

    @property
    def steps(self) -> list[dict]:
        """Step records only (the initial reset record carries no action)."""
        return [r for r in self.records if r.get("event") != "reset" and r.get("t", 0) >= 1]

    def values(self, atom: GoalAtom) -> list[float]:
        return [atom.expr.eval(r["state"]) for r in self.steps]

    def memberships(self, atom: GoalAtom) -> list[bool]:
        pred = atom_predicate(atom)
        return [predicate_robustness(pred, r["state"], validate=False) > 0.0 for r in self.steps]


@dataclass
class GoalAssessment:
    goal: str
    operator: str
    success: bool
    gsr: float
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Region geometry on the test-value axis


def signed_region_distance(region: Range, value: float) -> float:
    """Signed distance to the region boundary: positive outside, negative
    inside (deeper is more negative)."""
    if region.kind is RangeKind.CLOSED:
        return abs(value - region.center) - region.radius
    if region.kind is RangeKind.ABOVE:
        return region.lower - value
    return value - region.upper


def region_size(atom: GoalAtom, cfg: Optional[ConditioningConfig]) -> float:
    """Characteristic size of the target region.

    Open-ended ranges have no intrinsic size, so they fall back to the test
    expression's scale (the only available characteristic length).
    """
    if atom.range.kind is RangeKind.CLOSED:
        return atom.range.upper - atom.range.lower
    if cfg is None:
        raise ValueError(
            f"goal '{atom.name}' has an open-ended range; a conditioning config "
            "with scales is required to size it"
        )
    return cfg.expr_scale(atom.expr)


def _center_distance(atom: GoalAtom, value: float) -> float:
    """Distance used by the reach satisfaction formula.

    Closed regions measure to the center; open-ended regions have no center
    and measure to the boundary (zero anywhere inside).
    """
    if atom.range.kind is RangeKind.CLOSED:
        return abs(value - atom.range.center)
    return max(0.0, signed_region_distance(atom.range, value))


def _reach_size(atom: GoalAtom, cfg: Optional[ConditioningConfig]) -> float:
    if atom.range.kind is RangeKind.CLOSED:
        return atom.range.radius
    return region_size(atom, cfg)


# ---------------------------------------------------------------------------
# Per-operator assessment


def _require(atom: GoalAtom, *ops: GoalOp) -> None:
    if atom.op not in ops:
        expected = " or ".join(op.value for op in ops)
        raise WrongOperatorError(f"goal '{atom.name}' is {atom.op.value}, expected {expected}")


def assess_reach(log: EpisodeLog, atom: GoalAtom, cfg: Optional[ConditioningConfig] = None) -> GoalAssessment:
    _require(atom, GoalOp.REACH)
    steps = log.steps
    if not steps:
        raise EmptyBatchError("episode has no step records")
    entered = any(log.memberships(atom))
    final_value = log.values(atom)[-1]
    distance = _center_distance(atom, final_value)
    size = _reach_size(atom, cfg)
    satisfaction = 0.0 if distance > size else 1.0 - distance / size
    return GoalAssessment(
        goal=atom.name,
        operator=atom.op.value,
        success=entered,
        gsr=satisfaction,
        extras={"final_distance": distance},
    )


def assess_avoid(log: EpisodeLog, atom: GoalAtom) -> GoalAssessment:
    _require(atom, GoalOp.AVOID)
    steps = log.steps
    if not steps:
        raise EmptyBatchError("episode has no step records")
    inside = log.memberships(atom)
    if any(inside):
        avoided = inside.index(True)
        success = False
    else:
        avoided = len(steps)
        success = True
    gsr = avoided / log.max_episode_steps
    return GoalAssessment(
        goal=atom.name,
        operator=atom.op.value,
        success=success,
        gsr=min(1.0, gsr),
        extras={"iterations_avoided": avoided},
    )


def assess_drive(
    log: EpisodeLog,
    atom: GoalAtom,
    cfg: Optional[ConditioningConfig] = None,
    reference_length: Optional[float] = None,
) -> GoalAssessment:
    _require(atom, GoalOp.DRIVE)
    steps = log.steps
    if not steps:
        raise EmptyBatchError("episode has no step records")
    inside = log.memberships(atom)
    values = log.values(atom)
    n = len(steps)
    out_distances = [
        max(0.0, signed_region_distance(atom.range, v))
        for v, member in zip(values, inside)
        if not member
    ]
    out_count = len(out_distances)
    if reference_length is None:
        reference_length = max(out_distances, default=0.0)
    if out_count and reference_length > 0:
        mean_scaled = (sum(out_distances) / out_count) / reference_length
        gsr = 1.0 - out_count * mean_scaled / n
    else:
        gsr = 1.0
    gsr = max(0.0, min(1.0, gsr))

    # Longest stretch of consecutive out-of-region iterations that ends in an
    # entry; an episode that never enters counts its full length.
    max_reaching = 0
    run = 0
    entered_ever = False
    for member in inside:
        if member:
            entered_ever = True
            max_reaching = max(max_reaching, run)
            run = 0
        else:
            run += 1
    if not entered_ever:
        max_reaching = n
    return GoalAssessment(
        goal=atom.name,
        operator=atom.op.value,
        success=inside[-1],
        gsr=gsr,
        extras={
            "percent_in_region": sum(inside) / n,
            "max_target_reaching_iterations": max_reaching,
        },
    )


def assess_minmax(
    log: EpisodeLog, atom: GoalAtom, cfg: Optional[ConditioningConfig] = None
) -> GoalAssessment:
    _require(atom, GoalOp.MINIMIZE, GoalOp.MAXIMIZE)
    steps = log.steps
    if not steps:
        raise EmptyBatchError("episode has no step records")
    inside = log.memberships(atom)
    values = log.values(atom)
    reached = any(inside)
    if reached:
        gsr = 1.0
    else:
        mean_distance = sum(
            max(0.0, signed_region_distance(atom.range, v)) for v in values
        ) / len(values)
        gsr = 1.0 - max(0.0, min(1.0, mean_distance / region_size(atom, cfg)))
    return GoalAssessment(
        goal=atom.name,
        operator=atom.op.value,
        success=reached,
        gsr=gsr,
        extras={
            "mean_value": sum(values) / len(values),
            "final_distance": signed_region_distance(atom.range, values[-1]),
        },
    )


def assess_goal(
    log: EpisodeLog,
    atom: GoalAtom,
    cfg: Optional[ConditioningConfig] = None,
    reference_length: Optional[float] = None,
) -> GoalAssessment:
    if atom.op is GoalOp.REACH:
        return assess_reach(log, atom, cfg)
    if atom.op is GoalOp.AVOID:
        return assess_avoid(log, atom)
    if atom.op is GoalOp.DRIVE:
        return assess_drive(log, atom, cfg, reference_length)
    return assess_minmax(log, atom, cfg)


# ---------------------------------------------------------------------------
# Batch aggregation


@dataclass
class AssessmentReport:
    per_goal: dict[str, dict]
    overall_success_rate: float
    overall_gsr: float
    episodes: int

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "overall": {
                "success_rate": self.overall_success_rate,
                "goal_satisfaction_rate": self.overall_gsr,
            },
            "goals": self.per_goal,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def format_table(self) -> str:
        header = f"{'goal':<24} {'operator':<10} {'success_rate':>12} {'gsr':>8}"
        lines = [header, "-" * len(header)]
        for name, summary in self.per_goal.items():
            lines.append(
                f"{name:<24} {summary['operator']:<10} "
                f"{summary['success_rate']:>12.3f} {summary['mean_gsr']:>8.3f}"
            )
        lines.append("-" * len(header))
        lines.append(
            f"{'overall':<24} {'':<10} {self.overall_success_rate:>12.3f} "
            f"{self.overall_gsr:>8.3f}"
        )
        return "\n".join(lines)


def aggregate(
    logs: list[EpisodeLog],
    program: GoalProgram,
    cfg: Optional[ConditioningConfig] = None,
) -> AssessmentReport:
    """Assess every goal over a batch of episodes and aggregate.

    The drive reference length (largest out-of-region distance) is computed
    across the whole batch before per-episode scoring, as the batch-level
    normalizer.
    """
    if not logs:
        raise EmptyBatchError("no episode logs to aggregate")
    atoms = program.atoms()

    reference: dict[str, float] = {}
    for atom in atoms:
        if atom.op is not GoalOp.DRIVE:
            continue
        largest = 0.0
        for log in logs:
            for value, member in zip(log.values(atom), log.memberships(atom)):
                if not member:
                    largest = max(largest, signed_region_distance(atom.range, value))
        reference[atom.name] = largest

    per_goal: dict[str, dict] = {}
    success_matrix: list[list[bool]] = []
    goal_mean_gsrs: list[float] = []
    for atom in atoms:
        assessments = [
            assess_goal(log, atom, cfg, reference.get(atom.name) or None) for log in logs
        ]
        successes = [a.success for a in assessments]
        mean_gsr = sum(a.gsr for a in assessments) / len(assessments)
        summary = {
            "operator": atom.op.value,
            "success_rate": sum(successes) / len(successes),
            "mean_gsr": mean_gsr,
        }
        extra_keys = assessments[0].extras.keys()
        for key in extra_keys:
            summary[f"mean_{key}"] = sum(a.extras[key] for a in assessments) / len(assessments)
        per_goal[atom.name] = summary
        success_matrix.append(successes)
        goal_mean_gsrs.append(mean_gsr)

    joint = [all(col) for col in zip(*success_matrix)]
    return AssessmentReport(
        per_goal=per_goal,
        overall_success_rate=sum(joint) / len(joint),
        overall_gsr=sum(goal_mean_gsrs) / len(goal_mean_gsrs),
        episodes=len(logs),
    )
