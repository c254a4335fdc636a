"""Tests for the outer training loop and its bookkeeping."""

import numpy as np
import pytest

from sindy_rl.dyna import (DynaConfig, RunRecord, collect_seed_data,
                           convergence_check, run_dyna)
from sindy_rl.environments import make_env
from sindy_rl.features import library_from_name
from sindy_rl.regression import StlsqConfig
from sindy_rl.sac import make_agent


def _pendulum_config(**overrides):
    settings = dict(n_seed_rollouts=1, rollout_length=20,
                    exploration="sinusoid", exploration_amplitude=1.0,
                    exploration_period=60.0, target_return=-300.0,
                    model_horizon=50, model_episodes_per_epoch=2,
                    model_epoch_budget=1, model_epochs=1,
                    max_real_episodes=1, eval_episodes=2,
                    warmup_steps=10**9)
    settings.update(overrides)
    return DynaConfig(**settings)


def _run_pendulum(config, seed=0):
    env = make_env("pendulum")
    agent = make_agent(env, seed=seed)
    return run_dyna(env, library_from_name("pendulum"), agent, config,
                    seed=seed, stlsq_config=StlsqConfig(ridge_alpha=0.0))


def test_convergence_check_examples():
    assert convergence_check([200.0, 200.0, 200.0], 195.0, 3)
    assert not convergence_check([200.0, 100.0, 200.0], 195.0, 3)
    assert not convergence_check([200.0, 200.0], 195.0, 3)
    assert convergence_check([-500.0, -200.0], -300.0, 1)
    with pytest.raises(ValueError):
        convergence_check([1.0], 0.0, 0)


def test_zero_model_epochs_is_pure_model_free():
    result = _run_pendulum(_pendulum_config(model_epochs=0, target_return=1.0))
    assert result.model is None
    assert result.record.model_steps == 0
    assert all(row["model_nonzero"] == 0 for row in result.record.rows)


def test_alternating_exploration_is_strict_without_noise():
    env = make_env("cartpole")
    config = DynaConfig(n_seed_rollouts=1, rollout_length=10,
                        exploration="alternating", exploration_random_prob=0.0)
    trajectory = collect_seed_data(env, config, seed=0)[0]
    forces = trajectory.actions[:, 0]
    magnitude = env.spec.constants["force_mag"]
    expected = [-magnitude if t % 2 == 0 else magnitude
                for t in range(trajectory.length)]
    assert np.array_equal(forces, expected)


def test_collect_seed_data_is_seed_reproducible():
    env = make_env("mountain_car")
    config = DynaConfig(n_seed_rollouts=2, rollout_length=30,
                        exploration="uniform")
    first = collect_seed_data(env, config, seed=3)
    second = collect_seed_data(make_env("mountain_car"), config, seed=3)
    for a, b in zip(first, second):
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.actions, b.actions)
    different = collect_seed_data(make_env("mountain_car"), config, seed=4)
    assert not np.array_equal(first[0].states, different[0].states)


def test_real_step_accounting_excludes_evaluations():
    config = _pendulum_config(target_return=1.0)  # unreachable, forces fine-tune
    result = _run_pendulum(config)
    seed_steps = sum(t.length for t in result.seed_trajectories)
    assert result.record.rows[0]["real_steps"] == seed_steps
    assert result.fine_tune_episodes == 1
    # One pendulum fine-tune episode always runs the full horizon.
    horizon = make_env("pendulum").spec.max_episode_steps
    assert result.record.real_steps == seed_steps + horizon
    assert result.record.rows[-1]["real_steps"] == result.record.real_steps


def test_model_step_accounting():
    config = _pendulum_config(target_return=1.0)
    result = _run_pendulum(config)
    # One epoch of two episodes, each capped at the model horizon.
    assert result.record.model_steps == 2 * config.model_horizon


def test_converged_run_reports_threshold_steps():
    result = _run_pendulum(_pendulum_config(target_return=-1e9))
    assert result.converged
    assert result.fine_tune_episodes == 0
    assert result.steps_to_threshold == result.record.rows[0]["real_steps"]


def test_unconverged_run_reports_none():
    result = _run_pendulum(_pendulum_config(target_return=1.0))
    assert not result.converged
    assert result.steps_to_threshold is None


def test_run_dyna_record_is_seed_reproducible():
    config = _pendulum_config(target_return=1.0)
    first = _run_pendulum(config, seed=2)
    second = _run_pendulum(config, seed=2)
    assert len(first.record.rows) == len(second.record.rows)
    for a, b in zip(first.record.rows, second.record.rows):
        for key in ("real_steps", "model_steps", "eval_mean", "eval_std",
                    "fine_tune_episodes", "model_nonzero"):
            assert a[key] == b[key]


def test_run_record_rejects_decreasing_counters():
    record = RunRecord()
    record.log(real_steps=10, model_steps=5, eval_mean=0.0)
    with pytest.raises(ValueError):
        record.log(real_steps=9, model_steps=5, eval_mean=0.0)
    with pytest.raises(ValueError):
        record.log(real_steps=10, model_steps=4, eval_mean=0.0)


def test_dyna_config_validation():
    with pytest.raises(ValueError):
        DynaConfig(n_seed_rollouts=0)
    with pytest.raises(ValueError):
        DynaConfig(model_epochs=-1)
    with pytest.raises(ValueError):
        DynaConfig(exploration="levy_flight")
    with pytest.raises(ValueError):
        DynaConfig(exploration_random_prob=1.5)
