"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 the run
finished but no seed reached the target return.
"""

from __future__ import annotations

import sys

import click

from .config import ConfigError, apply_overrides, load_config
from .harness import compare_runs, fit_only, run_experiment
from .model import load_model

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_FAILURE = 2
EXIT_NOT_CONVERGED = 3


def _parse_seed_list(text: str | None):
    if text is None:
        return None
    try:
        seeds = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}; expected e.g. 0,1,2") from None
    if not seeds:
        raise ConfigError("seed list must not be empty")
    return seeds


def _load(config_path, seed_list, out, overrides):
    config = load_config(config_path)
    if overrides:
        config = apply_overrides(config, list(overrides))
    seeds = _parse_seed_list(seed_list)
    if seeds is not None:
        config = apply_overrides(config, [f"run.seeds={','.join(map(str, seeds))}"])
    if out is not None:
        config = apply_overrides(config, [f"run.output_dir={out}"])
    return config


def _config_options(command):
    decorators = [
        click.option("--config", "config_path", required=True,
                     type=click.Path(), help="Experiment config file."),
        click.option("--seed-list", default=None,
                     help="Comma-separated seeds overriding the config."),
        click.option("--out", default=None, type=click.Path(),
                     help="Output directory overriding the config."),
        click.option("--override", "overrides", multiple=True,
                     metavar="SECTION.KEY=VALUE",
                     help="Config override; may be repeated."),
    ]
    for decorator in reversed(decorators):
        command = decorator(command)
    return command


@click.group()
def main():
    """Sparse dynamics models for sample-efficient reinforcement learning."""


@main.command()
@_config_options
def run(config_path, seed_list, out, overrides):
    """Run the full training loop for every seed and write all artifacts.

    Set the environment variable SINDY_RL_WORKERS to run seeds in parallel
    worker processes.
    """
    try:
        config = _load(config_path, seed_list, out, overrides)
    except ConfigError as error:
        click.echo(f"config error: {error}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    try:
        artifacts = run_experiment(config)
    except Exception as error:
        click.echo(f"runtime failure: {error}", err=True)
        sys.exit(EXIT_RUNTIME_FAILURE)
    for seed, message in sorted(artifacts.failures.items()):
        click.echo(f"seed {seed} failed: {message}", err=True)
    for row in artifacts.summary_rows:
        if row["error"]:
            continue
        status = "converged" if row["converged"] else "not converged"
        click.echo(f"seed {row['seed']}: {status}, "
                   f"final return {row['final_eval_mean']:.2f}, "
                   f"real steps {row['real_steps']}")
    click.echo(f"artifacts written to {artifacts.output_dir}")
    if len(artifacts.failures) == len(config.seeds):
        sys.exit(EXIT_RUNTIME_FAILURE)
    if not artifacts.any_converged:
        sys.exit(EXIT_NOT_CONVERGED)
    sys.exit(EXIT_OK)


@main.command()
@_config_options
def fit(config_path, seed_list, out, overrides):
    """Collect seed data, fit the dynamics model, and report equations."""
    try:
        config = _load(config_path, seed_list, out, overrides)
    except ConfigError as error:
        click.echo(f"config error: {error}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    try:
        result = fit_only(config)
    except Exception as error:
        click.echo(f"runtime failure: {error}", err=True)
        sys.exit(EXIT_RUNTIME_FAILURE)
    click.echo(result["report"], nl=False)
    sys.exit(EXIT_OK)


@main.command()
@click.argument("result_dirs", nargs=-1, type=click.Path())
@click.option("--out", required=True, type=click.Path(),
              help="Directory for the comparison table and plot.")
def compare(result_dirs, out):
    """Compare steps-to-threshold across two or more finished run
    directories of the same environment."""
    try:
        outcome = compare_runs(result_dirs, out)
    except ValueError as error:
        click.echo(f"config error: {error}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    except Exception as error:
        click.echo(f"runtime failure: {error}", err=True)
        sys.exit(EXIT_RUNTIME_FAILURE)
    for row in outcome["rows"]:
        steps = row["steps_to_threshold"]
        speedup = row["speedup_vs_first"]
        steps_text = "not reached" if steps is None else f"{steps:g}"
        speedup_text = "not reached" if speedup is None else f"{speedup:.3f}"
        click.echo(f"{row['directory']}: steps-to-threshold {steps_text} "
                   f"({row['converged_seeds']}/{row['total_seeds']} seeds), "
                   f"ratio vs first {speedup_text}")
    sys.exit(EXIT_OK)


@main.command("print-model")
@click.argument("model_path", type=click.Path())
def print_model(model_path):
    """Print the governing equations stored in a saved model file."""
    try:
        model = load_model(model_path)
    except FileNotFoundError:
        click.echo(f"config error: no such model file {model_path}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    except Exception as error:
        click.echo(f"runtime failure: {error}", err=True)
        sys.exit(EXIT_RUNTIME_FAILURE)
    click.echo(model.equations_to_string())
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
