"""Tests for the analytic benchmark environments."""

import math
from pathlib import Path

import numpy as np
import pytest

from sindy_rl.environments import (ENVIRONMENT_NAMES, CartPoleEnv,
                                   InvertedPendulumEnv, MountainCarEnv,
                                   PendulumEnv, _cartpole_accelerations,
                                   make_env)

GOLDEN = Path(__file__).parent / "golden"


def _read_golden(name):
    lines = (GOLDEN / name).read_text().splitlines()
    return np.array([[float(v) for v in line.split()] for line in lines])


# -- cart pole ---------------------------------------------------------------

def test_cartpole_upright_equilibrium():
    env = CartPoleEnv()
    x_acc, theta_acc = _cartpole_accelerations(np.zeros(4), 0.0, env.spec.constants)
    assert x_acc == 0.0 and theta_acc == 0.0


def test_cartpole_small_angle_agreement():
    """The linearized angular acceleration tracks the full form within 1%."""
    env = CartPoleEnv()
    rng = np.random.default_rng(0)
    for _ in range(200):
        state = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1),
                          rng.uniform(-0.05, 0.05), rng.uniform(-0.5, 0.5)])
        force = float(rng.choice([-10.0, 10.0]))
        _, full = _cartpole_accelerations(state, force, env.spec.constants)
        approx = env.small_angle_theta_acc(state, force)
        assert abs(approx - full) <= 0.01 * max(abs(full), 1.0)


def test_cartpole_golden_rollout():
    env = CartPoleEnv()
    state = env.reset(0)
    rows = [state]
    for t in range(10):
        rows.append(env.step((t + 1) % 2).next_state)
    assert np.array_equal(np.array(rows), _read_golden("cartpole_rollout.txt"))


def test_cartpole_termination_and_reward():
    env = CartPoleEnv()
    env.reset(0)
    result = env.step(1)
    assert result.reward == 1.0
    assert env.is_terminal(np.array([0.0, 0.0, 0.3, 0.0]))
    assert env.is_terminal(np.array([3.0, 0.0, 0.0, 0.0]))
    assert not env.is_terminal(np.zeros(4))


def test_cartpole_oracle_equals_transition():
    env = CartPoleEnv()
    state = np.array([0.1, -0.2, 0.05, 0.3])
    assert np.array_equal(env.true_dynamics_oracle(state, 1),
                          env._transition(state, 1))


def test_cartpole_rejects_bad_actions():
    env = CartPoleEnv()
    env.reset(0)
    with pytest.raises(ValueError):
        env.step(2)


# -- inverted pendulum -------------------------------------------------------

def test_inverted_pendulum_zero_damping_matches_cartpole():
    damped = InvertedPendulumEnv({"cart_damping": 0.0, "pole_damping": 0.0})
    cartpole = CartPoleEnv()
    state = np.array([0.1, 0.2, 0.03, -0.1])
    assert np.allclose(damped._transition(state, 10.0),
                       cartpole._transition(state, 1), atol=1e-12)
    assert np.allclose(damped._transition(state, -10.0),
                       cartpole._transition(state, 0), atol=1e-12)


def test_inverted_pendulum_golden_rollout():
    env = InvertedPendulumEnv()
    state = env.reset(0)
    rows = [state]
    for t in range(10):
        force = 5.0 * math.sin(2.0 * math.pi * t / 20.0)
        rows.append(env.step(force).next_state)
    assert np.array_equal(np.array(rows),
                          _read_golden("inverted_pendulum_rollout.txt"))


def test_inverted_pendulum_damped_free_response_decays():
    """Angular-velocity peaks shrink monotonically under damping."""
    env = InvertedPendulumEnv({"theta_threshold": 10.0})
    env.reset(0)
    env._state = np.array([0.0, 0.0, 0.02, 0.0])
    speeds = []
    for _ in range(400):
        speeds.append(abs(env.step(0.0).next_state[3]))
    speeds = np.array(speeds)
    peaks = [speeds[i] for i in range(1, len(speeds) - 1)
             if speeds[i] >= speeds[i - 1] and speeds[i] >= speeds[i + 1]]
    assert len(peaks) >= 3
    assert all(b <= a * (1.0 + 1e-9) for a, b in zip(peaks, peaks[1:]))


# -- mountain car ------------------------------------------------------------

def test_mountain_car_equilibrium_where_gravity_vanishes():
    env = MountainCarEnv()
    rest = np.array([-math.pi / 6.0, 0.0])
    next_state = env._transition(rest, 0.0)
    assert next_state[1] == pytest.approx(0.0, abs=1e-15)
    assert next_state[0] == pytest.approx(rest[0], abs=1e-15)


def test_mountain_car_left_wall_collision_is_inelastic():
    env = MountainCarEnv()
    state = np.array([env.spec.constants["min_position"], -0.05])
    next_state = env._transition(state, -1.0)
    assert next_state[0] == env.spec.constants["min_position"]
    assert next_state[1] == 0.0


def test_mountain_car_full_throttle_table():
    """First steps from rest under maximum force, computed by hand."""
    env = MountainCarEnv()
    c = env.spec.constants
    state = np.array([-0.5, 0.0])
    for _ in range(5):
        velocity = (state[1] + c["power"] * 1.0
                    - c["gravity"] * math.cos(3.0 * state[0]))
        velocity = min(max(velocity, -c["max_speed"]), c["max_speed"])
        expected = np.array([state[0] + velocity, velocity])
        state = env._transition(state, 1.0)
        assert np.allclose(state, expected, atol=1e-15)


def test_mountain_car_goal_reward_and_termination():
    env = MountainCarEnv()
    c = env.spec.constants
    goal_state = np.array([c["goal_position"], 0.05])
    assert env.is_terminal(goal_state)
    reward = env.reward(np.array([0.4, 0.05]), 1.0, goal_state)
    assert reward == pytest.approx(c["goal_reward"] - c["action_cost"])


def test_mountain_car_states_respect_clamps():
    env = MountainCarEnv()
    c = env.spec.constants
    rng = np.random.default_rng(1)
    state = env.reset(0)
    for _ in range(500):
        state = env.step(rng.uniform(-1, 1)).next_state
        assert c["min_position"] <= state[0] <= c["max_position"]
        assert abs(state[1]) <= c["max_speed"]


def test_mountain_car_oracle_equals_step():
    env = MountainCarEnv()
    state = np.array([-0.3, 0.02])
    assert np.array_equal(env.true_dynamics_oracle(state, 0.5),
                          env._transition(state, 0.5))


# -- pendulum ----------------------------------------------------------------

def test_pendulum_hanging_equilibrium():
    env = PendulumEnv({"reset_theta_low": math.pi, "reset_theta_high": math.pi,
                       "reset_thetadot_low": 0.0, "reset_thetadot_high": 0.0})
    env.reset(0)
    for _ in range(20):
        observation = env.step(0.0).next_state
        assert abs(observation[1]) < 1e-12       # sin(theta) stays ~0
        assert observation[0] == pytest.approx(-1.0, abs=1e-12)
        assert abs(observation[2]) < 1e-10


def test_pendulum_observation_is_on_unit_circle():
    env = PendulumEnv()
    state = env.reset(3)
    for _ in range(50):
        state = env.step(1.0).next_state
        assert state[0] ** 2 + state[1] ** 2 == pytest.approx(1.0, abs=1e-12)


def test_pendulum_energy_has_no_secular_drift():
    """Free swings conserve period-averaged mechanical energy to 0.1%."""
    env = PendulumEnv({"reset_theta_low": 2.0, "reset_theta_high": 2.0,
                       "reset_thetadot_low": 0.0, "reset_thetadot_high": 0.0})
    env.reset(0)
    energies = [env.mechanical_energy()]
    speeds = [0.0]
    for _ in range(100):
        observation = env.step(0.0).next_state
        energies.append(env.mechanical_energy())
        speeds.append(observation[2])
    energies = np.array(energies)
    turning = np.flatnonzero(np.diff(np.sign(speeds)) != 0)
    assert len(turning) >= 5
    first_period = energies[turning[0]:turning[2]]
    last_period = energies[turning[-3]:turning[-1]]
    scale = np.max(np.abs(energies))
    assert abs(last_period.mean() - first_period.mean()) / scale <= 1e-3


def test_pendulum_model_coordinate_round_trip():
    env = PendulumEnv()
    observations = []
    env.reset(5)
    for _ in range(30):
        observations.append(env.step(0.5).next_state)
    observations = np.array(observations)
    model_states = env.states_to_model(observations)
    rebuilt = np.array([env.model_state_to_observation(s) for s in model_states])
    assert np.max(np.abs(rebuilt - observations)) < 1e-12


def test_pendulum_oracle_matches_observed_transition():
    env = PendulumEnv()
    env.reset(7)
    model_before = np.array([env._theta, env._theta_dot])
    observation = env.step(1.3).next_state
    predicted = env.true_dynamics_oracle(model_before, 1.3)
    assert math.cos(predicted[0]) == pytest.approx(observation[0], abs=1e-12)
    assert math.sin(predicted[0]) == pytest.approx(observation[1], abs=1e-12)
    assert predicted[1] == pytest.approx(observation[2], abs=1e-12)


def test_pendulum_reward_penalizes_angle_error():
    env = PendulumEnv()
    upright = np.array([1.0, 0.0, 0.0])
    hanging = np.array([-1.0, 0.0, 0.0])
    assert env.reward(upright, 0.0, upright) == pytest.approx(0.0)
    assert env.reward(hanging, 0.0, hanging) < -9.0


# -- shared contracts --------------------------------------------------------

def test_reset_is_deterministic_per_seed():
    for name in ENVIRONMENT_NAMES:
        env = make_env(name)
        assert np.array_equal(env.reset(42), env.reset(42))
        assert not np.array_equal(env.reset(42), env.reset(43))


def test_trajectories_are_seed_deterministic():
    for name in ENVIRONMENT_NAMES:
        runs = []
        for _ in range(2):
            env = make_env(name)
            env.reset(9)
            action = 1 if name == "cartpole" else 0.5
            runs.append(np.array([env.step(action).next_state for _ in range(20)]))
        assert np.array_equal(runs[0], runs[1])


def test_cartpole_reset_distribution():
    env = CartPoleEnv()
    h = env.spec.constants["reset_halfwidth"]
    samples = np.array([env.reset(seed) for seed in range(1000)])
    assert np.all(np.abs(samples) <= h)
    standard_error = h / math.sqrt(3.0) / math.sqrt(1000)
    assert np.all(np.abs(samples.mean(axis=0)) <= 3.0 * standard_error)


def test_make_env_rejects_unknown_names_and_constants():
    with pytest.raises(ValueError):
        make_env("lunar_lander")
    with pytest.raises(ValueError):
        make_env("pendulum", {"warp_factor": 9.0})


def test_constant_overrides_are_applied():
    env = make_env("pendulum", {"gravity": 5.0, "dt": 0.01})
    assert env.spec.constants["gravity"] == 5.0
    assert env.spec.dt == 0.01
