"""goalforge: goal specifications compiled to automata and dense RL rewards.

Pipeline: a near-natural goal language is parsed into a goal program,
translated into a finite-trace temporal formula, compiled into a predicate
automaton, and executed step by step to generate dense, Markovian rewards
plus per-goal assessment metrics.
"""

__version__ = "0.1.0"

from .assessment import (
    AssessmentReport,
    EpisodeLog,
    GoalAssessment,
    aggregate,
    assess_avoid,
    assess_drive,
    assess_minmax,
    assess_reach,
)
from .automaton import (
    Edge,
    PredicateAutomaton,
    State,
    build_automaton,
    build_template,
    build_until,
    chain_then,
    product,
    trivial_accepting,
)
from .compiler import CompiledGoal, compile_goal
from .envs import ENVIRONMENTS, PlateEnv, TankEnv, make_env
from .errors import GoalforgeError, GoalSyntaxError
from .lang import (
    GoalAtom,
    GoalProgram,
    Range,
    RangeKind,
    load_schema,
    parse_goal,
    tokenize,
)
from .logic import (
    formula_robustness,
    predicate_robustness,
    to_sexpr,
    trace_satisfies,
    translate,
)
from .reward import (
    ConditioningConfig,
    RewardEngine,
    StepResult,
    estimate_scales,
    scaled_robustness,
    write_episode_log,
)
from .trainer import (
    CEMTrainer,
    EvalResult,
    Policy,
    TrainerConfig,
    evaluate,
    load_checkpoint,
    run_episode,
    save_checkpoint,
    train,
    write_curve_csv,
)

__all__ = [
    "__version__",
    "AssessmentReport",
    "CEMTrainer",
    "CompiledGoal",
    "ConditioningConfig",
    "ENVIRONMENTS",
    "Edge",
    "EpisodeLog",
    "EvalResult",
    "GoalAssessment",
    "GoalAtom",
    "GoalProgram",
    "GoalSyntaxError",
    "GoalforgeError",
    "PlateEnv",
    "Policy",
    "PredicateAutomaton",
    "Range",
    "RangeKind",
    "RewardEngine",
    "State",
    "StepResult",
    "TankEnv",
    "TrainerConfig",
    "aggregate",
    "assess_avoid",
    "assess_drive",
    "assess_minmax",
    "assess_reach",
    "build_automaton",
    "build_template",
    "build_until",
    "chain_then",
    "compile_goal",
    "estimate_scales",
    "evaluate",
    "formula_robustness",
    "load_checkpoint",
    "load_schema",
    "make_env",
    "parse_goal",
    "predicate_robustness",
    "product",
    "run_episode",
    "save_checkpoint",
    "scaled_robustness",
    "to_sexpr",
    "tokenize",
    "trace_satisfies",
    "train",
    "translate",
    "trivial_accepting",
    "write_curve_csv",
    "write_episode_log",
]
