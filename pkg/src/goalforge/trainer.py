"""Cross-entropy method trainer proving the generated rewards drive learning.

The policy observes the MDP state concatenated with a one-hot encoding of
the current automaton state, so tasks with temporal structure (then/until
chains) stay solvable by a memoryless policy. Candidates are sampled from a
diagonal Gaussian over policy parameters, scored by mean discounted return,
and the elite fraction refits the Gaussian. Everything is deterministic
under a fixed seed: episode seeds derive from (seed, iteration, candidate,
episode) and rollout aggregation is order independent.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .assessment import AssessmentReport, EpisodeLog, aggregate
from .compiler import CompiledGoal, compile_goal
from .errors import CorruptCheckpointError, DivergedNaNError
from .reward import ConditioningConfig, RewardEngine


@dataclass(frozen=True)
class TrainerConfig:
    population: int = 40
    elite_frac: float = 0.2
    iterations: int = 60
    episodes_per_candidate: int = 2
    eval_episodes: int = 8
    gamma: float = 0.99
    seed: int = 0
    workers: int = 1
    hidden: tuple[int, ...] = ()
    sigma_init: float = 1.0
    sigma_floor: float = 0.05
    interaction_budget: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.elite_frac <= 1.0:
            raise ValueError("elite_frac must be in (0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.population < 1 or self.episodes_per_candidate < 1:
            raise ValueError("population and episodes_per_candidate must be >= 1")


class Policy:
    """Feedforward policy with tanh-squashed outputs scaled to action bounds."""

    def __init__(self, input_dim, output_dim, action_low, action_high, hidden=(), params=None):
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.low = np.asarray(action_low, dtype=float)
        self.high = np.asarray(action_high, dtype=float)
        self.shapes: list[tuple[int, int]] = []
        dims = [self.input_dim, *self.hidden, self.output_dim]
        for a, b in zip(dims[:-1], dims[1:]):
            self.shapes.append((a, b))
        self.n_params = sum((a + 1) * b for a, b in self.shapes)
        if params is None:
            params = np.zeros(self.n_params)
        self.params = np.asarray(params, dtype=float)
        if self.params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {self.params.shape}")

    def with_params(self, params) -> "Policy":
        return Policy(self.input_dim, self.output_dim, self.low, self.high, self.hidden, params)

    def act(self, obs: np.ndarray) -> np.ndarray:
        x = np.asarray(obs, dtype=float)
        offset = 0
        for i, (a, b) in enumerate(self.shapes):
            w = self.params[offset : offset + a * b].reshape(a, b)
            offset += a * b
            bias = self.params[offset : offset + b]
            offset += b
            x = x @ w + bias
            if i < len(self.shapes) - 1:
                x = np.tanh(x)
        squashed = np.tanh(x)
        return self.low + (squashed + 1.0) * 0.5 * (self.high - self.low)

    def describe(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden": list(self.hidden),
            "action_low": self.low.tolist(),
            "action_high": self.high.tolist(),
            "params": self.params.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Policy":
        return cls(
            data["input_dim"],
            data["output_dim"],
            data["action_low"],
            data["action_high"],
            tuple(data["hidden"]),
            np.asarray(data["params"], dtype=float),
        )


def _mix(*parts: int) -> int:
    """Deterministic seed derivation (splitmix-style integer hashing)."""
    h = 0x9E3779B97F4A7C15
    for part in parts:
        h ^= (part + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
        h = (h * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        h ^= h >> 31
    return h & 0x7FFFFFFF


@dataclass
class EpisodeOutcome:
    discounted_return: float
    undiscounted_return: float
    steps: int
    records: Optional[list[dict]] = None


def run_episode(
    env,
    policy: Policy,
    engine: RewardEngine,
    field_names: list[str],
    seed: int,
    gamma: float,
    collect_records: bool = False,
) -> EpisodeOutcome:
    state = env.reset(seed=seed)
    engine.reset()
    records = [engine.reset_record(state)] if collect_records else None
    disc = undisc = 0.0
    discount = 1.0
    steps = 0
    order = engine.automaton.state_order()
    n_states = len(order)
    index = {sid: i for i, sid in enumerate(order)}
    while True:
        obs = np.empty(len(field_names) + n_states)
        for i, name in enumerate(field_names):
            obs[i] = state[name]
        obs[len(field_names) :] = 0.0
        obs[len(field_names) + index[engine.state_id]] = 1.0
        action = policy.act(obs)
        state = env.step(action)
        result = engine.step(state)
        disc += discount * result.reward
        undisc += result.reward
        discount *= gamma
        steps += 1
        if collect_records:
            records.append(engine.step_record(state, action, result))
        if result.done:
            break
    return EpisodeOutcome(disc, undisc, steps, records)


def _evaluate_candidate(payload) -> tuple[float, float, int]:
    """Worker task: mean returns of one candidate over its episodes."""
    (env_factory, compiled, conditioning, policy, seeds, gamma) = payload
    field_names = compiled.program.field_names()
    disc_total = undisc_total = 0.0
    steps_total = 0
    for seed in seeds:
        env = env_factory()
        engine = compiled.engine(conditioning)
        outcome = run_episode(env, policy, engine, field_names, seed, gamma)
        disc_total += outcome.discounted_return
        undisc_total += outcome.undiscounted_return
        steps_total += outcome.steps
    n = len(seeds)
    return disc_total / n, undisc_total / n, steps_total


@dataclass
class EvalResult:
    report: AssessmentReport
    logs: list[EpisodeLog]
    mean_return: float
    final_values: dict[str, float]


def evaluate(
    policy: Policy,
    env_factory: Callable,
    compiled: CompiledGoal,
    conditioning: ConditioningConfig,
    episodes: int,
    seed: int,
) -> EvalResult:
    """Run greedy episodes, assess them, and report batch metrics."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    field_names = compiled.program.field_names()
    logs: list[EpisodeLog] = []
    returns = []
    for episode in range(episodes):
        env = env_factory()
        engine = compiled.engine(conditioning)
        outcome = run_episode(
            env,
            policy,
            engine,
            field_names,
            seed=_mix(seed, 0xE7A1, episode),
            gamma=1.0,
            collect_records=True,
        )
        logs.append(
            EpisodeLog(records=outcome.records, max_episode_steps=conditioning.max_episode_steps)
        )
        returns.append(outcome.undiscounted_return)
    report = aggregate(logs, compiled.program, conditioning)
    final_values = {}
    for atom in compiled.atoms:
        finals = [log.values(atom)[-1] for log in logs]
        final_values[atom.name] = sum(finals) / len(finals)
    return EvalResult(
        report=report,
        logs=logs,
        mean_return=sum(returns) / len(returns),
        final_values=final_values,
    )


class CEMTrainer:
    """Stateful cross-entropy optimizer; one call per iteration."""

    def __init__(
        self,
        env_factory: Callable,
        compiled: CompiledGoal,
        config: TrainerConfig,
        conditioning: ConditioningConfig,
    ):
        self.env_factory = env_factory
        self.compiled = compiled
        self.config = config
        self.conditioning = conditioning
        probe_env = env_factory()
        self.field_names = compiled.program.field_names()
        input_dim = len(self.field_names) + len(compiled.automaton.state_order())
        self.policy_template = Policy(
            input_dim,
            len(probe_env.action_low),
            probe_env.action_low,
            probe_env.action_high,
            hidden=config.hidden,
        )
        dim = self.policy_template.n_params
        self.mu = np.zeros(dim)
        self.sigma = np.full(dim, config.sigma_init)
        self.rng = np.random.default_rng(config.seed)
        self.iteration = 0
        self.interactions = 0
        self.curve: list[dict] = []

    @property
    def mean_policy(self) -> Policy:
        return self.policy_template.with_params(self.mu.copy())

    def run_iteration(self) -> dict:
        cfg = self.config
        samples = self.rng.normal(self.mu, self.sigma, size=(cfg.population, len(self.mu)))
        payloads = []
        for cand in range(cfg.population):
            seeds = [
                _mix(cfg.seed, self.iteration, cand, ep)
                for ep in range(cfg.episodes_per_candidate)
            ]
            payloads.append(
                (
                    self.env_factory,
                    self.compiled,
                    self.conditioning,
                    self.policy_template.with_params(samples[cand]),
                    seeds,
                    cfg.gamma,
                )
            )
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_evaluate_candidate, payloads))
        else:
            results = [_evaluate_candidate(p) for p in payloads]

        disc = np.array([r[0] for r in results])
        undisc = np.array([r[1] for r in results])
        self.interactions += int(sum(r[2] for r in results))
        if not np.all(np.isfinite(disc)):
            raise DivergedNaNError("non-finite candidate returns")

        n_elite = max(1, int(round(cfg.elite_frac * cfg.population)))
        elite_idx = np.argsort(-disc, kind="stable")[:n_elite]
        elite = samples[elite_idx]
        self.mu = elite.mean(axis=0)
        self.sigma = elite.std(axis=0) + cfg.sigma_floor
        if not np.all(np.isfinite(self.mu)):
            raise DivergedNaNError("non-finite policy parameters")

        evaluation = evaluate(
            self.mean_policy,
            self.env_factory,
            self.compiled,
            self.conditioning,
            cfg.eval_episodes,
            seed=_mix(cfg.seed, 0x5EED, self.iteration),
        )
        self.interactions += sum(len(log.steps) for log in evaluation.logs)

        row: dict = {
            "iteration": self.iteration,
            "interactions": self.interactions,
            "mean_return": float(undisc.mean()),
            "best_return": float(undisc.max()),
            "overall_success_rate": evaluation.report.overall_success_rate,
            "overall_gsr": evaluation.report.overall_gsr,
        }
        for name in sorted(evaluation.report.per_goal):
            summary = evaluation.report.per_goal[name]
            row[f"success_rate:{name}"] = summary["success_rate"]
            row[f"gsr:{name}"] = summary["mean_gsr"]
            row[f"final_value:{name}"] = evaluation.final_values[name]
        self.curve.append(row)
        self.iteration += 1
        return row

    def _projected_iteration_cost(self) -> int:
        cfg = self.config
        steps = self.conditioning.max_episode_steps
        return steps * (cfg.population * cfg.episodes_per_candidate + cfg.eval_episodes)

    def train(self, iterations: Optional[int] = None) -> list[dict]:
        """Run iterations until the count or the interaction budget is hit."""
        cfg = self.config
        target = cfg.iterations if iterations is None else self.iteration + iterations
        while self.iteration < target:
            budget = cfg.interaction_budget
            if budget is not None and self.interactions + self._projected_iteration_cost() > budget:
                break
            self.run_iteration()
        return self.curve


def train(
    env_factory: Callable,
    compiled: CompiledGoal,
    config: TrainerConfig,
    conditioning: ConditioningConfig,
) -> tuple[Policy, list[dict]]:
    """Train to completion and return the mean policy plus the curve."""
    trainer = CEMTrainer(env_factory, compiled, config, conditioning)
    trainer.train()
    return trainer.mean_policy, trainer.curve


# ---------------------------------------------------------------------------
# Curve CSV and checkpoints


def write_curve_csv(rows: list[dict], path) -> None:
    """Training curve as CSV with reproducible byte-exact formatting."""
    if not rows:
        raise ValueError("no curve rows to write")
    columns = list(rows[0].keys())
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])


CHECKPOINT_FORMAT = "goalforge-checkpoint"


def save_checkpoint(
    path,
    *,
    policy: Policy,
    compiled: CompiledGoal,
    env_name: str,
    goal_text: str,
    config: TrainerConfig,
    conditioning: ConditioningConfig,
    seed: int,
) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "env": env_name,
        "goal_text": goal_text,
        "schema": [list(entry) for entry in compiled.program.schema],
        "automaton_hash": compiled.automaton.content_hash(),
        "seed": seed,
        "trainer": {
            "population": config.population,
            "elite_frac": config.elite_frac,
            "iterations": config.iterations,
            "episodes_per_candidate": config.episodes_per_candidate,
            "eval_episodes": config.eval_episodes,
            "gamma": config.gamma,
            "seed": config.seed,
            "workers": config.workers,
            "hidden": list(config.hidden),
            "sigma_init": config.sigma_init,
            "sigma_floor": config.sigma_floor,
        },
        "conditioning": {
            "scales": {k: list(v) for k, v in conditioning.scales.items()},
            "max_robustness": conditioning.max_robustness,
            "boost_factor": conditioning.boost_factor,
            "max_episode_steps": conditioning.max_episode_steps,
        },
        "policy": policy.describe(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def load_checkpoint(path) -> dict:
    """Load and integrity-check a checkpoint.

    Recompiles the stored goal against the stored schema and verifies the
    automaton hash; any mismatch or malformed content raises
    CorruptCheckpointError.
    """
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpointError(f"{path} is not a goalforge checkpoint")
    try:
        schema = tuple((name, float(lo), float(hi)) for name, lo, hi in payload["schema"])
        compiled = compile_goal(payload["goal_text"], schema)
        policy = Policy.from_dict(payload["policy"])
    except CorruptCheckpointError:
        raise
    except Exception as exc:
        raise CorruptCheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    if compiled.automaton.content_hash() != payload["automaton_hash"]:
        raise CorruptCheckpointError(
            "checkpoint automaton hash does not match its goal and schema"
        )
    conditioning = ConditioningConfig(
        scales={k: tuple(v) for k, v in payload["conditioning"]["scales"].items()},
        max_robustness=payload["conditioning"]["max_robustness"],
        boost_factor=payload["conditioning"]["boost_factor"],
        max_episode_steps=payload["conditioning"]["max_episode_steps"],
    )
    return {
        "payload": payload,
        "compiled": compiled,
        "policy": policy,
        "conditioning": conditioning,
        "env": payload["env"],
    }
