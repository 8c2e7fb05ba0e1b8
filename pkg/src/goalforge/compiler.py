"""One-stop compilation from goal text to formula, automaton, and engines."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from .automaton import PredicateAutomaton, build_automaton
from .lang import GoalAtom, GoalProgram, parse_goal
from .logic import Formula, translate
from .reward import ConditioningConfig, RewardEngine


@dataclass
class CompiledGoal:
    """Parsed program with its translated formula and compiled automaton."""

    program: GoalProgram
    formula: Formula
    automaton: PredicateAutomaton

    @cached_property
    def atoms(self) -> list[GoalAtom]:
        return self.program.atoms()

    def engine(self, conditioning: ConditioningConfig) -> RewardEngine:
        """Fresh single-episode reward engine over the shared automaton."""
        return RewardEngine(self.automaton, self.atoms, conditioning)

    def default_conditioning(
        self,
        max_episode_steps: int,
        *,
        max_robustness: float = 2.0,
        boost_factor: float = 2.0,
        extra_scales: dict | None = None,
    ) -> ConditioningConfig:
        """Conditioning with per-variable scales taken from the schema bounds."""
        scales = {name: (lo, hi) for name, lo, hi in self.program.schema}
        if extra_scales:
            scales.update(extra_scales)
        return ConditioningConfig(
            scales=scales,
            max_robustness=max_robustness,
            boost_factor=boost_factor,
            max_episode_steps=max_episode_steps,
        )


def compile_goal(text: str, schema) -> CompiledGoal:
    """Parse, translate and build an automaton for goal text.

    ``schema`` accepts anything ``lang.parse_goal`` does: a mapping of field
    name to bounds or a sequence of (name, min, max) triples.
    """
    program = parse_goal(text, schema)
    formula = translate(program)
    automaton = build_automaton(program)
    return CompiledGoal(program=program, formula=formula, automaton=automaton)
