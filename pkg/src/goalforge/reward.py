"""Dense per-step reward generation driven by a predicate automaton.

Each environment transition advances the automaton with the successor MDP
state and emits one scalar reward:

* dwelling in an acceptance state pays the robustness of its self-loop
  guard, so staying deep inside the satisfying region keeps paying and
  optimization continues beyond the acceptance boundary;
* taking an edge pays the robustness of that edge's guard;
* waiting in a non-acceptance state pays the best robustness among edges
  that lead toward non-trap states, a negative "distance to progress".

Robustness values are conditioned before use: divided by a per-variable
scale (estimated or declared), boosted by a factor when positive so the
slope inside the target region is steeper, and clamped to
[-max_robustness, +max_robustness]. Early termination adds a terminal
bonus of +max_robustness * (T - t) on acceptance and the negative of that
on traps; running out the clock adds nothing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .automaton import Edge, PredicateAutomaton, AutomatonRun
from .errors import (
    DegenerateRangeError,
    MissingScaleError,
    NonFiniteStateError,
    SteppedAfterTerminationError,
)
from .lang import GoalAtom, StateExpr
from .logic import And, Formula, Not, Or, Pred, TrueFormula, atom_predicate, predicate_robustness

# Events reported by RewardEngine.step.
EVENT_SELF_LOOP = "self_loop"
EVENT_TRANSITION = "transition"
EVENT_TERMINAL_ACCEPT = "terminal_accept"
EVENT_TERMINAL_TRAP = "terminal_trap"
EVENT_TIME_LIMIT = "time_limit"


@dataclass(frozen=True)
class ConditioningConfig:
    """Scaling, boosting and capping constants for reward conditioning."""

    scales: dict[str, tuple[float, float]] = field(default_factory=dict)
    max_robustness: float = 2.0
    boost_factor: float = 2.0
    max_episode_steps: int = 100

    def __post_init__(self):
        if not self.max_robustness > 0:
            raise ValueError("max_robustness must be positive")
        if not self.boost_factor >= 1:
            raise ValueError("boost_factor must be at least 1")
        if not self.max_episode_steps >= 1:
            raise ValueError("max_episode_steps must be at least 1")
        for name, (lo, hi) in self.scales.items():
            if not hi - lo > 0:
                raise ValueError(f"scale for '{name}' must have max - min > 0")

    def expr_scale(self, expr: StateExpr) -> float:
        """Characteristic length of a test expression.

        Per-variable scales are max - min; composite expressions get the
        width of their interval under the declared per-field bounds.
        """
        for name in expr.fields():
            if name not in self.scales:
                raise MissingScaleError(name)
        lo, hi = expr.interval(self.scales)
        width = hi - lo
        if not width > 0 or not math.isfinite(width):
            fields = ", ".join(sorted(expr.fields())) or "constant"
            raise DegenerateRangeError(fields)
        return width


def scaled_robustness(guard: Formula, state: dict[str, float], cfg: ConditioningConfig) -> float:
    """Conditioned robustness of an edge guard at one state.

    Leaf predicate robustness is divided by its expression's scale, the
    leaves are composed through min/max/negation, and the composite value is
    boosted when positive and clamped to [-max_robustness, +max_robustness].
    """
    value = _scaled(guard, state, cfg)
    if value > 0:
        value *= cfg.boost_factor
    return max(-cfg.max_robustness, min(cfg.max_robustness, value))


def _scaled(guard: Formula, state: dict[str, float], cfg: ConditioningConfig) -> float:
    if isinstance(guard, TrueFormula):
        return math.inf
    if isinstance(guard, Pred):
        return predicate_robustness(guard, state, validate=False) / cfg.expr_scale(guard.expr)
    if isinstance(guard, Not):
        return -_scaled(guard.operand, state, cfg)
    if isinstance(guard, And):
        return min(_scaled(guard.left, state, cfg), _scaled(guard.right, state, cfg))
    if isinstance(guard, Or):
        return max(_scaled(guard.left, state, cfg), _scaled(guard.right, state, cfg))
    raise TypeError(f"not a guard: {guard!r}")


@dataclass(frozen=True)
class StepResult:
    """Outcome of one reward engine step."""

    reward: float
    base_reward: float
    terminal_bonus: float
    automaton_state: str
    event: str
    edge: Optional[Edge] = None

    @property
    def done(self) -> bool:
        return self.event in (EVENT_TERMINAL_ACCEPT, EVENT_TERMINAL_TRAP, EVENT_TIME_LIMIT)


class RewardEngine:
    """Per-episode reward stepper over (MDP state, automaton state).

    Single-owner: one engine drives exactly one episode at a time; the
    automaton and config it references are immutable and shareable.
    """

    def __init__(
        self,
        automaton: PredicateAutomaton,
        atoms: list[GoalAtom],
        config: ConditioningConfig,
    ):
        self.automaton = automaton
        self.atoms = list(atoms)
        self.config = config
        self._preds = [atom_predicate(a) for a in self.atoms]
        self.run: AutomatonRun = automaton.start()
        self.t = 0
        self.terminated = False
        self.termination_reason: Optional[str] = None

    # -- lifecycle

    def reset(self) -> str:
        """Return to the initial automaton state with a cleared clock."""
        self.run = self.automaton.start()
        self.t = 0
        self.terminated = False
        self.termination_reason = None
        return self.run.current

    @property
    def state_id(self) -> str:
        return self.run.current

    def state_one_hot(self) -> np.ndarray:
        order = self.automaton.state_order()
        vec = np.zeros(len(order))
        vec[order.index(self.run.current)] = 1.0
        return vec

    def goal_robustness(self, state: dict[str, float]) -> dict[str, float]:
        """Raw (unconditioned) robustness of every goal's predicate."""
        return {p.goal: predicate_robustness(p, state, validate=False) for p in self._preds}

    # -- stepping

    def step(self, next_state: dict[str, float]) -> StepResult:
        """Advance the automaton with the successor MDP state and pay reward."""
        if self.terminated:
            raise SteppedAfterTerminationError(
                f"episode already terminated ({self.termination_reason})"
            )
        for name, value in next_state.items():
            if not math.isfinite(value):
                raise NonFiniteStateError(f"state field '{name}' is {value!r}")

        aut, cfg = self.automaton, self.config
        current = self.run.current

        if aut.is_terminal_accept(current):
            # Degenerate start-in-terminal case: nothing to optimize.
            self.t += 1
            bonus = cfg.max_robustness * (cfg.max_episode_steps - self.t)
            self._terminate(EVENT_TERMINAL_ACCEPT)
            return StepResult(bonus, 0.0, bonus, current, EVENT_TERMINAL_ACCEPT)

        new_state, edge = aut.transition(current, next_state)
        moved = edge is not None and not edge.is_self_loop

        base = self._step_reward(current, edge, moved, next_state)

        self.t += 1
        self.run.current = new_state
        self.run.history.append((self.t, new_state, edge.target if edge else "stall"))

        bonus = 0.0
        if aut.states[new_state].trap:
            bonus = -cfg.max_robustness * (cfg.max_episode_steps - self.t)
            event = EVENT_TERMINAL_TRAP
            self._terminate(event)
        elif aut.is_terminal_accept(new_state):
            bonus = cfg.max_robustness * (cfg.max_episode_steps - self.t)
            event = EVENT_TERMINAL_ACCEPT
            self._terminate(event)
        elif self.t >= cfg.max_episode_steps:
            event = EVENT_TIME_LIMIT
            self._terminate(event)
        else:
            event = EVENT_TRANSITION if moved else EVENT_SELF_LOOP

        return StepResult(base + bonus, base, bonus, new_state, event, edge)

    def _step_reward(
        self,
        current: str,
        edge: Optional[Edge],
        moved: bool,
        state: dict[str, float],
    ) -> float:
        """Single-source step reward.

        Acceptance states with a self loop always pay the self-loop guard's
        robustness (positive while dwelling inside the region, negative when
        falling out). Otherwise a taken edge pays its own guard, and waiting
        pays the best guard among progress edges (non-self, non-trap).
        """
        aut, cfg = self.automaton, self.config
        self_loop = aut.self_loop(current)
        if aut.states[current].accepting and self_loop is not None:
            return scaled_robustness(self_loop.guard, state, cfg)
        if moved:
            return scaled_robustness(edge.guard, state, cfg)
        candidates = [
            e
            for e in aut.outgoing(current)
            if not e.is_self_loop and not aut.states[e.target].trap
        ]
        if candidates:
            return max(scaled_robustness(e.guard, state, cfg) for e in candidates)
        if self_loop is not None:
            return scaled_robustness(self_loop.guard, state, cfg)
        return 0.0

    def _terminate(self, reason: str) -> None:
        self.terminated = True
        self.termination_reason = reason

    # -- episode log records

    def reset_record(self, state: dict[str, float]) -> dict:
        return {
            "t": 0,
            "state": dict(state),
            "action": None,
            "automaton_state": self.run.current,
            "event": "reset",
            "reward": 0.0,
            "robustness": self.goal_robustness(state),
        }

    def step_record(self, state: dict[str, float], action, result: StepResult) -> dict:
        """One JSON-lines record per environment step.

        This layout is the logging contract consumed by the assessment
        module and written by the trainer.
        """
        if action is None:
            action_list = None
        else:
            action_list = [float(a) for a in np.atleast_1d(action)]
        return {
            "t": self.t,
            "state": {k: float(v) for k, v in state.items()},
            "action": action_list,
            "automaton_state": result.automaton_state,
            "event": result.event,
            "reward": float(result.reward),
            "robustness": self.goal_robustness(state),
        }


def write_episode_log(path, records: list[dict]) -> None:
    with open(path, "w") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Scale estimation


def estimate_scales(
    env,
    episodes: int,
    *,
    seed: int = 0,
    margin: float = 0.05,
    declared: Optional[dict[str, tuple[float, float]]] = None,
) -> dict[str, tuple[float, float]]:
    """Estimate per-field (min, max) by running random-action episodes.

    Observed ranges are widened by ``margin`` (5% of the range by default,
    split evenly between the two ends). Fields with declared bounds use
    those instead. Raises DegenerateRangeError when a sampled field never
    varies and has no declared bounds.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    declared = dict(declared or {})
    rng = np.random.default_rng(seed)
    low = np.asarray(env.action_low, dtype=float)
    high = np.asarray(env.action_high, dtype=float)
    observed: dict[str, tuple[float, float]] = {}
    for episode in range(episodes):
        state = env.reset(seed=seed * 100003 + episode)
        _observe(observed, state)
        for _ in range(env.max_steps):
            action = rng.uniform(low, high)
            state = env.step(action)
            _observe(observed, state)
    table: dict[str, tuple[float, float]] = {}
    for name, (lo, hi) in observed.items():
        if name in declared:
            table[name] = declared[name]
            continue
        if not hi - lo > 0:
            raise DegenerateRangeError(name)
        pad = (hi - lo) * margin / 2.0
        table[name] = (lo - pad, hi + pad)
    for name, bounds in declared.items():
        table.setdefault(name, bounds)
    return table


def _observe(observed: dict[str, tuple[float, float]], state: dict[str, float]) -> None:
    for name, value in state.items():
        value = float(value)
        if name in observed:
            lo, hi = observed[name]
            observed[name] = (min(lo, value), max(hi, value))
        else:
            observed[name] = (value, value)
