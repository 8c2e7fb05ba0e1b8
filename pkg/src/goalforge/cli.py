"""Command line front-end: compile goals, train policies, assess checkpoints.

Exit codes: 0 success, 1 compile or validation error, 2 usage error,
3 runtime failure. Set GOALFORGE_LOG to adjust the log level.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import yaml

from . import __version__
from .compiler import CompiledGoal, compile_goal
from .envs import ENVIRONMENTS, make_env
from .errors import (
    CorruptCheckpointError,
    DivergedNaNError,
    GoalforgeError,
    GoalSyntaxError,
)
from .lang import load_schema
from .logic import to_sexpr
from .reward import ConditioningConfig
from .trainer import (
    CEMTrainer,
    TrainerConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    write_curve_csv,
)

EXIT_COMPILE_ERROR = 1
EXIT_RUNTIME_ERROR = 3


def _setup_logging() -> None:
    level = os.environ.get("GOALFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _fail_compile(exc: GoalSyntaxError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_COMPILE_ERROR)


def _fail_runtime(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_RUNTIME_ERROR)


def _load_and_compile(goal_file: str, schema_file: str) -> tuple[CompiledGoal, str]:
    try:
        schema = load_schema(schema_file)
        text = Path(goal_file).read_text()
        return compile_goal(text, schema), text
    except GoalSyntaxError as exc:
        _fail_compile(exc)
    except GoalforgeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_COMPILE_ERROR)


def _write_manifest(path: Path, **entries) -> None:
    payload = {"tool": "goalforge", "version": __version__, **entries}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))


@click.group()
@click.version_option(version=__version__, prog_name="goalforge")
def main() -> None:
    """Compile goal specifications into automata and dense RL rewards."""
    _setup_logging()


@main.command(name="compile")
@click.argument("goal_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("schema_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--emit-etltl", "emit_formula", type=click.Path(), default=None,
              help="Write the translated temporal formula (S-expression).")
@click.option("--emit-automaton", type=click.Path(), default=None,
              help="Write the automaton as JSON.")
@click.option("--emit-dot", type=click.Path(), default=None,
              help="Write the automaton as Graphviz DOT.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".",
              help="Directory for the run manifest.")
def compile_cmd(goal_file, schema_file, emit_formula, emit_automaton, emit_dot, out_dir):
    """Compile GOAL_FILE against SCHEMA_FILE and emit artifacts."""
    compiled, _ = _load_and_compile(goal_file, schema_file)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(
        out / (Path(goal_file).stem + ".manifest.json"),
        command="compile",
        goal_file=str(goal_file),
        schema_file=str(schema_file),
        automaton_hash=compiled.automaton.content_hash(),
    )
    if emit_formula:
        Path(emit_formula).write_text(to_sexpr(compiled.formula) + "\n")
    if emit_automaton:
        Path(emit_automaton).write_text(compiled.automaton.to_json(indent=2) + "\n")
    if emit_dot:
        Path(emit_dot).write_text(compiled.automaton.to_dot() + "\n")
    click.echo(
        f"compiled {goal_file}: {len(compiled.automaton.states)} states, "
        f"{len(compiled.automaton.edges)} edges, hash {compiled.automaton.content_hash()[:12]}"
    )


def _trainer_config_from_file(config_file, seed) -> TrainerConfig:
    overrides = {}
    if config_file:
        doc = yaml.safe_load(Path(config_file).read_text()) or {}
        if not isinstance(doc, dict):
            raise click.UsageError("config file must be a YAML mapping")
        overrides = dict(doc)
    overrides.pop("seed", None)
    if "hidden" in overrides:
        overrides["hidden"] = tuple(overrides["hidden"])
    if "interaction_budget" in overrides and overrides["interaction_budget"] is not None:
        overrides["interaction_budget"] = int(overrides["interaction_budget"])
    return TrainerConfig(seed=seed, **overrides)


@main.command()
@click.argument("goal_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("schema_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--env", "env_name", type=click.Choice(sorted(ENVIRONMENTS)), required=True)
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML file with TrainerConfig overrides.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default="runs",
              show_default=True)
def train(goal_file, schema_file, env_name, config_file, seed, out_dir):
    """Train a policy for GOAL_FILE on an environment."""
    compiled, goal_text = _load_and_compile(goal_file, schema_file)
    try:
        config = _trainer_config_from_file(config_file, seed)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"bad trainer config: {exc}")
    env_cls = ENVIRONMENTS[env_name]
    conditioning = compiled.default_conditioning(env_cls.max_steps)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(
        out / "manifest.json",
        command="train",
        goal_file=str(goal_file),
        schema_file=str(schema_file),
        env=env_name,
        seed=seed,
        config_file=str(config_file) if config_file else None,
        automaton_hash=compiled.automaton.content_hash(),
    )

    try:
        trainer = CEMTrainer(lambda: make_env(env_name), compiled, config, conditioning)
        trainer.train()
        curve_path = out / "curve.csv"
        write_curve_csv(trainer.curve, curve_path)
        checkpoint_path = out / "checkpoint.json"
        save_checkpoint(
            checkpoint_path,
            policy=trainer.mean_policy,
            compiled=compiled,
            env_name=env_name,
            goal_text=goal_text,
            config=config,
            conditioning=conditioning,
            seed=seed,
        )
        final = evaluate(
            trainer.mean_policy,
            lambda: make_env(env_name),
            compiled,
            conditioning,
            episodes=config.eval_episodes,
            seed=seed + 1,
        )
    except DivergedNaNError as exc:
        _fail_runtime(exc)
    click.echo(final.report.format_table())
    click.echo(f"checkpoint: {checkpoint_path}")
    click.echo(f"curve: {curve_path}")


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.option("--episodes", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "report_path", type=click.Path(), default=None,
              help="Where to write the report JSON (default: next to the checkpoint).")
@click.option("--logs-dir", type=click.Path(file_okay=False), default=None,
              help="Directory for per-episode JSONL logs.")
def assess(checkpoint, episodes, seed, report_path, logs_dir):
    """Evaluate a trained checkpoint and report per-goal metrics."""
    try:
        loaded = load_checkpoint(checkpoint)
    except CorruptCheckpointError as exc:
        _fail_runtime(exc)
    compiled = loaded["compiled"]
    env_name = loaded["env"]
    out = Path(report_path) if report_path else Path(checkpoint).with_suffix(".report.json")
    _write_manifest(
        out.with_suffix(".manifest.json"),
        command="assess",
        checkpoint=str(checkpoint),
        episodes=episodes,
        seed=seed,
        automaton_hash=compiled.automaton.content_hash(),
    )
    result = evaluate(
        loaded["policy"],
        lambda: make_env(env_name),
        compiled,
        loaded["conditioning"],
        episodes=episodes,
        seed=seed,
    )
    if logs_dir:
        from .reward import write_episode_log

        logs = Path(logs_dir)
        logs.mkdir(parents=True, exist_ok=True)
        for i, log in enumerate(result.logs):
            write_episode_log(logs / f"episode_{i:04d}.jsonl", log.records)
    out.write_text(result.report.to_json() + "\n")
    click.echo(result.report.format_table())
    click.echo(f"report: {out}")


if __name__ == "__main__":
    main()
