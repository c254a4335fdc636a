"""Experiment harness: seeded runs, CSV artifacts, plots, and reports.

All tabular outputs are CSV and deterministic for a given (config, seeds)
pair; learning-curve plots are rendered from the same data that lands in the
CSV files.  Wall-clock timings are kept in memory only so that reruns are
bit-identical on disk.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .config import ExperimentConfig, save_config
from .dyna import DynaResult, collect_seed_data, fit_model_from_env, run_dyna
from .environments import make_env
from .features import evaluate_library
from .model import save_model
from .sac import evaluate_policy, make_agent

__all__ = ["RunArtifacts", "run_experiment", "fit_only", "compare_runs",
           "WORKERS_ENV_VAR"]

#: Environment variable naming the number of parallel seed workers.
WORKERS_ENV_VAR = "SINDY_RL_WORKERS"

_RAW_COLUMNS = ("seed", "eval_index", "real_steps", "model_steps", "eval_mean",
                "eval_std", "fine_tune_episodes", "model_nonzero")
_SUMMARY_COLUMNS = ("seed", "converged", "fine_tune_episodes", "steps_to_threshold",
                    "real_steps", "model_steps", "final_eval_mean",
                    "parameter_count", "nonzero_count", "error")


@dataclass
class RunArtifacts:
    """In-memory mirror of everything run_experiment writes to disk."""

    output_dir: Path
    raw_rows: list[dict] = field(default_factory=list)
    summary_rows: list[dict] = field(default_factory=list)
    aggregate_rows: list[dict] = field(default_factory=list)
    results: dict[int, DynaResult] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def any_converged(self) -> bool:
        return any(r["converged"] for r in self.summary_rows if not r["error"])


def _float_text(value) -> str:
    if value is None:
        return "not_reached"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_float_text(row[c]) for c in columns])


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def _run_one_seed(config: ExperimentConfig, seed: int) -> DynaResult:
    env = make_env(config.environment, dict(config.env_constants) or None)
    library = config.build_library(env.model_state_dim,
                                   env.spec.action_space.dim)
    agent = make_agent(env, config.learner, seed=seed)
    return run_dyna(env, library, agent, config.dyna, seed=seed,
                    stlsq_config=config.stlsq, diff_config=config.differentiation)


def _seed_payload(result: DynaResult, seed: int, out: Path) -> dict:
    """Reduce a run to plain data, writing the model artifacts as a side
    effect so that worker processes never have to ship callables back."""
    model = result.model
    if model is not None:
        save_model(model, out / f"model_seed{seed}.txt")
        (out / f"equations_seed{seed}.txt").write_text(
            model.equations_to_string() + "\n")
    return dict(
        rows=[dict(row) for row in result.record.rows],
        converged=result.converged,
        fine_tune_episodes=result.fine_tune_episodes,
        steps_to_threshold=result.steps_to_threshold,
        real_steps=result.record.real_steps,
        model_steps=result.record.model_steps,
        parameter_count=model.parameter_count() if model else 0,
        nonzero_count=model.nonzero_count() if model else 0)


def _seed_worker(config: ExperimentConfig, seed: int, out: str) -> dict:
    return _seed_payload(_run_one_seed(config, seed), seed, Path(out))


def run_experiment(config: ExperimentConfig,
                   output_dir: str | Path | None = None) -> RunArtifacts:
    """Run every configured seed, then write CSVs, reports, and plots."""
    out = Path(output_dir if output_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = RunArtifacts(output_dir=out)

    workers = int(os.environ.get(WORKERS_ENV_VAR, "1"))
    outcomes = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {seed: pool.submit(_seed_worker, config, seed, str(out))
                       for seed in config.seeds}
            for seed in config.seeds:
                try:
                    outcomes.append((seed, futures[seed].result(), None))
                except Exception as exc:  # partial failure: record and continue
                    outcomes.append((seed, None, f"{type(exc).__name__}: {exc}"))
    else:
        for seed in config.seeds:
            try:
                result = _run_one_seed(config, seed)
                artifacts.results[seed] = result
                outcomes.append((seed, _seed_payload(result, seed, out), None))
            except Exception as exc:
                outcomes.append((seed, None, f"{type(exc).__name__}: {exc}"))

    for seed, payload, error in outcomes:
        if error is not None:
            artifacts.failures[seed] = error
            artifacts.summary_rows.append(dict(
                seed=seed, converged=False, fine_tune_episodes=None,
                steps_to_threshold=None, real_steps=None, model_steps=None,
                final_eval_mean=None, parameter_count=None, nonzero_count=None,
                error=error))
            continue
        for index, row in enumerate(payload["rows"]):
            artifacts.raw_rows.append(dict(
                seed=seed, eval_index=index, real_steps=row["real_steps"],
                model_steps=row["model_steps"], eval_mean=row["eval_mean"],
                eval_std=row["eval_std"],
                fine_tune_episodes=row["fine_tune_episodes"],
                model_nonzero=row["model_nonzero"]))
        artifacts.summary_rows.append(dict(
            seed=seed, converged=payload["converged"],
            fine_tune_episodes=payload["fine_tune_episodes"],
            steps_to_threshold=payload["steps_to_threshold"],
            real_steps=payload["real_steps"],
            model_steps=payload["model_steps"],
            final_eval_mean=payload["rows"][-1]["eval_mean"],
            parameter_count=payload["parameter_count"],
            nonzero_count=payload["nonzero_count"],
            error=""))

    # Aggregate across seeds by evaluation index; recomputable from raw rows.
    by_index: dict[int, list[dict]] = {}
    for row in artifacts.raw_rows:
        by_index.setdefault(row["eval_index"], []).append(row)
    for index in sorted(by_index):
        rows = by_index[index]
        means = [r["eval_mean"] for r in rows]
        artifacts.aggregate_rows.append(dict(
            eval_index=index, n_seeds=len(rows),
            real_steps_mean=float(np.mean([r["real_steps"] for r in rows])),
            eval_mean=float(np.mean(means)),
            eval_std=float(np.std(means))))

    _write_csv(out / "raw.csv", _RAW_COLUMNS, artifacts.raw_rows)
    _write_csv(out / "summary.csv", _SUMMARY_COLUMNS, artifacts.summary_rows)
    _write_csv(out / "aggregate.csv",
               ("eval_index", "n_seeds", "real_steps_mean", "eval_mean", "eval_std"),
               artifacts.aggregate_rows)
    save_config(config, out / "config.ini")
    _plot_learning_curve(artifacts, out / "learning_curve.png",
                         title=config.environment)
    return artifacts


def _plot_learning_curve(artifacts: RunArtifacts, path: Path, title: str) -> None:
    """Mean evaluation return against cumulative real-environment steps.

    The x axis starts at the post-seed-rollout step count, so curves are
    shifted right by the data cost of fitting the dynamics model.
    """
    by_seed: dict[int, list[dict]] = {}
    for row in artifacts.raw_rows:
        by_seed.setdefault(row["seed"], []).append(row)
    fig, ax = plt.subplots(figsize=(6, 4))
    for seed in sorted(by_seed):
        rows = by_seed[seed]
        ax.plot([r["real_steps"] for r in rows], [r["eval_mean"] for r in rows],
                marker="o", alpha=0.6, label=f"seed {seed}")
    ax.set_xlabel("real environment steps")
    ax.set_ylabel("evaluation return")
    ax.set_title(title)
    if by_seed and len(by_seed) <= 10:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fit_only(config: ExperimentConfig,
             output_dir: str | Path | None = None) -> dict:
    """Seed-data collection and model fitting without any policy training."""
    out = Path(output_dir if output_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = make_env(config.environment, dict(config.env_constants) or None)
    library = config.build_library(env.model_state_dim, env.spec.action_space.dim)
    seed = config.seeds[0]
    trajectories = collect_seed_data(env, config.dyna, seed)
    model = fit_model_from_env(env, library, trajectories,
                               config.stlsq, config.differentiation)
    save_model(model, out / "model.txt")

    lines = [model.equations_to_string(), ""]
    lines.append(f"parameters P = n*F = {model.state_dim}*{library.size} "
                 f"= {model.parameter_count()}")
    lines.append(f"nonzero parameters P' = {model.nonzero_count()}")

    comparison, max_deviation = _oracle_comparison(env, model, trajectories)
    if comparison:
        lines.append("")
        lines.append("coefficient comparison against the analytic dynamics "
                     "(least-squares projection onto the library):")
        lines.append(f"{'feature':<14}{'dim':<5}{'fitted':<24}{'analytic':<24}deviation")
        for name, dim, fitted, true in comparison:
            lines.append(f"{name:<14}{dim:<5}{fitted:<24.17g}{true:<24.17g}"
                         f"{abs(fitted - true):.3g}")
        lines.append(f"max coefficient deviation: {max_deviation:.6g}")
    report = "\n".join(lines) + "\n"
    (out / "fit_report.txt").write_text(report)
    return {"model": model, "report": report, "trajectories": trajectories,
            "max_deviation": max_deviation, "library": library}


def _oracle_comparison(env, model, trajectories):
    """Project the environment's analytic dynamics onto the library and list
    every coefficient that is nonzero on either side."""
    try:
        states = np.vstack([env.states_to_model(t.states)[:-1] for t in trajectories])
        actions = np.vstack([t.actions for t in trajectories])
        oracle = np.array([env.true_dynamics_oracle(s, a)
                           for s, a in zip(states, actions)])
    except NotImplementedError:
        return [], float("nan")
    theta = evaluate_library(model.library, states, actions)
    true_coefficients, *_ = np.linalg.lstsq(theta, oracle, rcond=None)
    rows = []
    max_deviation = 0.0
    names = model.library.names
    for i in range(model.library.size):
        for j in range(model.state_dim):
            fitted = model.coefficients.values[i, j]
            true = true_coefficients[i, j]
            if fitted != 0.0 or abs(true) >= 1e-8:
                rows.append((names[i], j, fitted, true))
                max_deviation = max(max_deviation, abs(fitted - true))
    return rows, max_deviation


def _steps_to_threshold_from_summary(summary_rows) -> tuple[float | None, int, int]:
    """Median steps-to-threshold over converged seeds, with seed counts."""
    values = []
    total = 0
    for row in summary_rows:
        if row.get("error"):
            continue
        total += 1
        raw = row["steps_to_threshold"]
        if raw not in (None, "not_reached", ""):
            values.append(float(raw))
    if not values:
        return None, 0, total
    return float(np.median(values)), len(values), total


def compare_runs(result_dirs, output_dir: str | Path) -> dict:
    """Steps-to-threshold comparison of ≥ 2 runs of the same environment.

    The first directory is the reference; speedups are other/reference
    ratios.  Runs that never reached the threshold report "not_reached".
    """
    dirs = [Path(d) for d in result_dirs]
    if len(dirs) < 2:
        raise ValueError("compare_runs needs at least two result directories")
    runs = []
    environments = set()
    for directory in dirs:
        config_path = directory / "config.ini"
        summary_path = directory / "summary.csv"
        if not config_path.exists() or not summary_path.exists():
            raise ValueError(f"{directory} is not a completed run directory")
        environment = None
        for line in config_path.read_text().splitlines():
            if line.strip().startswith("name"):
                environment = line.split("=", 1)[1].strip()
                break
        environments.add(environment)
        summary = _read_csv(summary_path)
        steps, converged, total = _steps_to_threshold_from_summary(summary)
        aggregate = _read_csv(directory / "aggregate.csv")
        runs.append(dict(directory=str(directory), environment=environment,
                         steps_to_threshold=steps, converged_seeds=converged,
                         total_seeds=total, aggregate=aggregate))
    if len(environments) != 1:
        raise ValueError(f"runs target different environments: {sorted(environments)}")

    reference = runs[0]["steps_to_threshold"]
    rows = []
    for run in runs:
        steps = run["steps_to_threshold"]
        if steps is None or reference is None:
            speedup = None
        else:
            speedup = steps / reference
        rows.append(dict(directory=run["directory"], environment=run["environment"],
                         converged_seeds=run["converged_seeds"],
                         total_seeds=run["total_seeds"],
                         steps_to_threshold=steps, speedup_vs_first=speedup))

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "compare.csv",
               ("directory", "environment", "converged_seeds", "total_seeds",
                "steps_to_threshold", "speedup_vs_first"), rows)

    fig, ax = plt.subplots(figsize=(6, 4))
    for run in runs:
        xs = [float(r["real_steps_mean"]) for r in run["aggregate"]]
        ys = [float(r["eval_mean"]) for r in run["aggregate"]]
        ax.plot(xs, ys, marker="o", label=Path(run["directory"]).name)
    ax.set_xlabel("real environment steps")
    ax.set_ylabel("evaluation return")
    ax.set_title(f"comparison: {next(iter(environments))}")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(out / "compare.png", dpi=120)
    plt.close(fig)
    return {"rows": rows}


def final_evaluation(config: ExperimentConfig, result: DynaResult, seed: int):
    """Post-training deterministic evaluation with the run-level episode count."""
    env = make_env(config.environment, dict(config.env_constants) or None)
    return evaluate_policy(result.agent, env, config.eval_episodes, seed=seed + 77000)
