"""Tests for config parsing, overrides, the experiment harness, and the CLI."""

from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from sindy_rl.cli import main
from sindy_rl.config import (ConfigError, apply_overrides, load_config,
                             parse_config_text, save_config)
from sindy_rl.harness import compare_runs, run_experiment

CONFIG_DIR = Path(__file__).parent.parent / "configs"

CHEAP_OVERRIDES = [
    "dyna.rollout_length=30",
    "dyna.model_epochs=1",
    "dyna.model_episodes_per_epoch=2",
    "dyna.model_horizon=20",
    "dyna.max_real_episodes=1",
    "dyna.eval_episodes=2",
    "dyna.warmup_steps=1000000000",
    "run.eval_episodes=2",
    "run.seeds=0,1",
]


def _cheap_config(target="1.0"):
    config = load_config(CONFIG_DIR / "pendulum.ini")
    overrides = CHEAP_OVERRIDES + [f"dyna.target_return={target}"]
    return apply_overrides(config, overrides)


# -- config files ------------------------------------------------------------

def test_bundled_configs_round_trip():
    for path in sorted(CONFIG_DIR.glob("*.ini")):
        config = load_config(path)
        assert parse_config_text(save_config(config)) == config


def test_unknown_section_and_key_rejected():
    good = save_config(load_config(CONFIG_DIR / "pendulum.ini"))
    with pytest.raises(ConfigError):
        parse_config_text(good + "\n[mystery]\nvalue = 1\n")
    with pytest.raises(ConfigError):
        parse_config_text(good.replace("rollout_length", "rollout_lenght"))


def test_unknown_environment_name_rejected():
    good = save_config(load_config(CONFIG_DIR / "pendulum.ini"))
    bad = good.replace("name = pendulum", "name = acrobot")
    with pytest.raises(ConfigError):
        parse_config_text(bad)


def test_apply_overrides_typed_values():
    config = load_config(CONFIG_DIR / "pendulum.ini")
    updated = apply_overrides(config, ["dyna.rollout_length=55",
                                       "sindy.threshold=0.01",
                                       "environment.constants.gravity=5.0",
                                       "dyna.model_epochs=unbounded"])
    assert updated.dyna.rollout_length == 55
    assert updated.stlsq.threshold == 0.01
    assert dict(updated.env_constants)["gravity"] == 5.0
    assert updated.dyna.model_epochs is None
    assert config.dyna.rollout_length == 20  # original untouched


def test_apply_overrides_rejects_garbage():
    config = load_config(CONFIG_DIR / "pendulum.ini")
    for bad in ("no_equals_sign", "dyna.unknown_key=1", "mystery.value=1",
                "dyna.rollout_length=fast"):
        with pytest.raises(ConfigError):
            apply_overrides(config, [bad])


# -- experiment harness ------------------------------------------------------

def test_run_experiment_outputs_are_bit_identical(tmp_path):
    paths = []
    for name in ("first", "second"):
        out = tmp_path / name
        artifacts = run_experiment(_cheap_config(), out)
        assert not artifacts.failures
        paths.append(out)
    for filename in ("raw.csv", "summary.csv", "aggregate.csv", "config.ini"):
        assert (paths[0] / filename).read_bytes() == (paths[1] / filename).read_bytes()
    for filename in ("learning_curve.png", "model_seed0.txt", "equations_seed0.txt"):
        assert (paths[0] / filename).exists()


def test_aggregate_rows_recompute_from_raw(tmp_path):
    artifacts = run_experiment(_cheap_config(), tmp_path / "run")
    for agg in artifacts.aggregate_rows:
        rows = [r for r in artifacts.raw_rows
                if r["eval_index"] == agg["eval_index"]]
        means = [r["eval_mean"] for r in rows]
        assert agg["n_seeds"] == len(rows)
        assert abs(agg["eval_mean"] - np.mean(means)) <= 1e-12
        assert abs(agg["eval_std"] - np.std(means)) <= 1e-12
        assert abs(agg["real_steps_mean"]
                   - np.mean([r["real_steps"] for r in rows])) <= 1e-12


def test_compare_run_against_itself_gives_unit_speedup(tmp_path):
    out = tmp_path / "run"
    run_experiment(_cheap_config(target="-1e9"), out)
    outcome = compare_runs([out, out], tmp_path / "compare")
    assert len(outcome["rows"]) == 2
    for row in outcome["rows"]:
        assert row["speedup_vs_first"] == pytest.approx(1.0)
    assert (tmp_path / "compare" / "compare.csv").exists()
    assert (tmp_path / "compare" / "compare.png").exists()


def test_compare_requires_two_directories(tmp_path):
    out = tmp_path / "run"
    run_experiment(_cheap_config(target="-1e9"), out)
    with pytest.raises(ValueError):
        compare_runs([out], tmp_path / "compare")


def test_summary_renders_unreached_threshold(tmp_path):
    out = tmp_path / "run"
    run_experiment(_cheap_config(), out)  # target 1.0 is unreachable
    text = (out / "summary.csv").read_text()
    assert "not_reached" in text


# -- command line ------------------------------------------------------------

def _invoke(*args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


def test_cli_run_not_converged_exit_code(tmp_path):
    args = ["run", "--config", str(CONFIG_DIR / "pendulum.ini"),
            "--out", str(tmp_path / "run"),
            "--override", "dyna.target_return=1.0", "--seed-list", "0"]
    result = _invoke(*[a for a in args] + sum(
        [["--override", o] for o in CHEAP_OVERRIDES[:-1]], []))
    assert result.exit_code == 3
    assert "not converged" in result.output


def test_cli_run_converged_exit_code(tmp_path):
    args = (["run", "--config", str(CONFIG_DIR / "pendulum.ini"),
             "--out", str(tmp_path / "run"),
             "--override", "dyna.target_return=-1e9", "--seed-list", "0"]
            + sum([["--override", o] for o in CHEAP_OVERRIDES[:-1]], []))
    result = _invoke(*args)
    assert result.exit_code == 0
    assert "converged" in result.output


def test_cli_rejects_bad_config_and_overrides(tmp_path):
    missing = _invoke("run", "--config", str(tmp_path / "missing.ini"))
    assert missing.exit_code == 1
    bad_override = _invoke("run", "--config", str(CONFIG_DIR / "pendulum.ini"),
                           "--override", "dyna.bogus=1")
    assert bad_override.exit_code == 1
    bad_seeds = _invoke("run", "--config", str(CONFIG_DIR / "pendulum.ini"),
                        "--seed-list", "zero,one")
    assert bad_seeds.exit_code == 1


def test_cli_run_runtime_failure_exit_code(tmp_path):
    args = (["run", "--config", str(CONFIG_DIR / "pendulum.ini"),
             "--out", str(tmp_path / "run"), "--seed-list", "0",
             "--override", "environment.constants.dt=-1.0"]
            + sum([["--override", o] for o in CHEAP_OVERRIDES[:-1]], []))
    result = _invoke(*args)
    assert result.exit_code == 2


def test_cli_fit_and_print_model(tmp_path):
    fit_result = _invoke("fit", "--config", str(CONFIG_DIR / "mountain_car.ini"),
                         "--out", str(tmp_path / "fit"))
    assert fit_result.exit_code == 0
    assert "nonzero parameters" in fit_result.output
    model_path = tmp_path / "fit" / "model.txt"
    assert model_path.exists()
    printed = _invoke("print-model", str(model_path))
    assert printed.exit_code == 0
    assert "x0[t+1]" in printed.output
    missing = _invoke("print-model", str(tmp_path / "nope.txt"))
    assert missing.exit_code == 1


def test_cli_compare_exit_codes(tmp_path):
    out = tmp_path / "run"
    args = (["run", "--config", str(CONFIG_DIR / "pendulum.ini"),
             "--out", str(out),
             "--override", "dyna.target_return=-1e9", "--seed-list", "0"]
            + sum([["--override", o] for o in CHEAP_OVERRIDES[:-1]], []))
    assert _invoke(*args).exit_code == 0
    good = _invoke("compare", str(out), str(out),
                   "--out", str(tmp_path / "cmp"))
    assert good.exit_code == 0
    too_few = _invoke("compare", str(out), "--out", str(tmp_path / "cmp2"))
    assert too_few.exit_code == 1
