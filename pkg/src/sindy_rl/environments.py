"""Analytic ground-truth implementations of the four control benchmarks.

Each environment exposes its reward function and termination predicate
separately from ``step`` so that model rollouts can reuse them, plus a
``true_dynamics_oracle`` returning the analytic dynamics in the same mode
the corresponding sparse model is fitted in (continuous derivative or
discrete next state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "ActionSpace",
    "EnvironmentSpec",
    "StepResult",
    "Environment",
    "CartPoleEnv",
    "InvertedPendulumEnv",
    "MountainCarEnv",
    "PendulumEnv",
    "make_env",
    "ENVIRONMENT_NAMES",
]


@dataclass(frozen=True)
class ActionSpace:
    """Discrete action count or per-dimension continuous bounds."""

    kind: str  # "discrete" | "continuous"
    n: int = 0
    low: tuple[float, ...] = ()
    high: tuple[float, ...] = ()

    @property
    def dim(self) -> int:
        # Discrete actions enter the feature library as one signed force slot.
        return 1 if self.kind == "discrete" else len(self.low)


@dataclass(frozen=True)
class EnvironmentSpec:
    name: str
    state_dim: int
    action_space: ActionSpace
    dt: float
    max_episode_steps: int
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be at least 1")


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool
    done_reason: str  # "termination" | "truncation" | "running"

    def __post_init__(self):
        if not np.all(np.isfinite(self.next_state)):
            raise ValueError("next_state contains non-finite entries")
        if self.done != (self.done_reason != "running"):
            raise ValueError("done flag inconsistent with done_reason")


class Environment:
    """Single-threaded mutable environment with a seeded reset."""

    #: "continuous" or "discrete" -- the mode the dynamics model is fitted in.
    sindy_mode: str = "continuous"

    def __init__(self, spec: EnvironmentSpec):
        self.spec = spec
        self._state: np.ndarray | None = None
        self._steps = 0
        self._rng = np.random.default_rng()

    # -- contract -----------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._state = self._sample_initial_state(self._rng)
        self._steps = 0
        return self._state.copy()

    def step(self, action) -> StepResult:
        if self._state is None:
            raise RuntimeError("call reset() before step()")
        state = self._state
        next_state = self._transition(state, action)
        reward = self.reward(state, action, next_state)
        self._steps += 1
        if self.is_terminal(next_state):
            reason = "termination"
        elif self._steps >= self.spec.max_episode_steps:
            reason = "truncation"
        else:
            reason = "running"
        self._state = next_state
        return StepResult(next_state=next_state.copy(), reward=reward,
                          done=reason != "running", done_reason=reason)

    def action_to_model_input(self, action) -> np.ndarray:
        """Map an action to the value(s) occupying the library's action slots."""
        space = self.spec.action_space
        if space.kind == "discrete":
            raise NotImplementedError
        return np.clip(np.atleast_1d(np.asarray(action, dtype=float)),
                       space.low, space.high)

    # -- hooks implemented per environment ------------------------------------

    def _sample_initial_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _transition(self, state: np.ndarray, action) -> np.ndarray:
        raise NotImplementedError

    def reward(self, state: np.ndarray, action, next_state: np.ndarray) -> float:
        raise NotImplementedError

    def is_terminal(self, state: np.ndarray) -> bool:
        raise NotImplementedError

    def true_dynamics_oracle(self, state: np.ndarray, action) -> np.ndarray:
        """Analytic dynamics in ``sindy_mode`` form (derivative or next state)."""
        raise NotImplementedError

    # -- model-state coordinates ----------------------------------------------
    #
    # The dynamics model may be fitted in a different coordinate system than
    # the observation (the pendulum observes cos/sin of its angle but models
    # the angle itself).  The defaults are the identity.

    @property
    def model_state_dim(self) -> int:
        return self.spec.state_dim

    def states_to_model(self, states: np.ndarray) -> np.ndarray:
        """Map a (T, state_dim) block of observations to model coordinates."""
        return np.asarray(states, dtype=float).copy()

    def model_state_to_observation(self, state: np.ndarray) -> np.ndarray:
        return np.asarray(state, dtype=float).copy()

    def model_reward(self, state, action, next_state) -> float:
        """Reward evaluated on model-coordinate states (for model rollouts)."""
        return self.reward(state, action, next_state)

    def model_is_terminal(self, state) -> bool:
        return self.is_terminal(state)

    def clip_model_state(self, state: np.ndarray) -> np.ndarray:
        """Apply the environment's declared state-space clamps to a model state."""
        return state

    def model_start_bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Box bounds for uniform model-rollout start sampling, or None."""
        return None


# ---------------------------------------------------------------------------
# Cart pole (discrete push-left / push-right)
# ---------------------------------------------------------------------------

_CARTPOLE_CONSTANTS = {
    "gravity": 9.8,
    "cart_mass": 1.0,
    "pole_mass": 0.1,
    "pole_length": 0.5,
    "force_mag": 10.0,
    "theta_threshold": 12.0 * math.pi / 180.0,
    "x_threshold": 2.4,
    "reset_halfwidth": 0.05,
}


def _cartpole_accelerations(state, force, c):
    """Pole and cart angular/linear accelerations for the pole-on-cart system."""
    _, x_dot, theta, theta_dot = state
    g = c["gravity"]
    m_p = c["pole_mass"]
    m_c = c["cart_mass"]
    length = c["pole_length"]
    total_mass = m_p + m_c
    sin_t = math.sin(theta)
    cos_t = math.cos(theta)
    coupling = (force + length * theta_dot**2 * sin_t) / total_mass
    theta_acc = (g * sin_t - cos_t * coupling) / (
        length * (4.0 / 3.0 - m_p * cos_t**2 / total_mass))
    x_acc = coupling - length / total_mass * theta_acc * cos_t
    return x_acc, theta_acc


class CartPoleEnv(Environment):
    """Pole balancing with bang-bang force, semi-implicit Euler at dt."""

    sindy_mode = "discrete"

    def __init__(self, overrides: Mapping[str, float] | None = None):
        constants = dict(_CARTPOLE_CONSTANTS)
        if overrides:
            _apply_overrides(constants, overrides, "cartpole")
        spec = EnvironmentSpec(
            name="cartpole",
            state_dim=4,
            action_space=ActionSpace(kind="discrete", n=2),
            dt=overrides.get("dt", 0.02) if overrides else 0.02,
            max_episode_steps=int(overrides.get("max_episode_steps", 200)) if overrides else 200,
            constants=constants,
        )
        super().__init__(spec)

    def _force(self, action) -> float:
        mag = self.spec.constants["force_mag"]
        if int(action) not in (0, 1):
            raise ValueError(f"discrete action must be 0 or 1, got {action!r}")
        return mag if int(action) == 1 else -mag

    def action_to_model_input(self, action) -> np.ndarray:
        return np.array([self._force(action)])

    def _sample_initial_state(self, rng: np.random.Generator) -> np.ndarray:
        h = self.spec.constants["reset_halfwidth"]
        return rng.uniform(-h, h, size=4)

    def _transition(self, state: np.ndarray, action) -> np.ndarray:
        force = self._force(action)
        x, x_dot, theta, theta_dot = state
        x_acc, theta_acc = _cartpole_accelerations(state, force, self.spec.constants)
        dt = self.spec.dt
        x_dot = x_dot + dt * x_acc
        x = x + dt * x_dot
        theta_dot = theta_dot + dt * theta_acc
        theta = theta + dt * theta_dot
        return np.array([x, x_dot, theta, theta_dot])

    def reward(self, state, action, next_state) -> float:
        return 1.0

    def is_terminal(self, state) -> bool:
        c = self.spec.constants
        return bool(abs(state[0]) > c["x_threshold"]
                    or abs(state[2]) > c["theta_threshold"])

    def true_dynamics_oracle(self, state, action) -> np.ndarray:
        return self._transition(np.asarray(state, dtype=float), action)

    def small_angle_theta_acc(self, state, force: float) -> float:
        """Angular acceleration with sin(theta)~theta, cos(theta)~1."""
        c = self.spec.constants
        _, _, theta, theta_dot = state
        total_mass = c["pole_mass"] + c["cart_mass"]
        coupling = (force + c["pole_length"] * theta_dot**2 * theta) / total_mass
        return (c["gravity"] * theta - coupling) / (
            c["pole_length"] * (4.0 / 3.0 - c["pole_mass"] / total_mass))


# ---------------------------------------------------------------------------
# Inverted pendulum: cart pole with viscous damping and a continuous force
# ---------------------------------------------------------------------------

_INVERTED_PENDULUM_CONSTANTS = {
    **_CARTPOLE_CONSTANTS,
    "force_limit": 10.0,
    "cart_damping": 0.1,
    "pole_damping": 0.05,
    "theta_threshold": 0.2,
}


class InvertedPendulumEnv(Environment):
    """Damped pole-on-cart with a continuous force input."""

    sindy_mode = "discrete"

    def __init__(self, overrides: Mapping[str, float] | None = None):
        constants = dict(_INVERTED_PENDULUM_CONSTANTS)
        if overrides:
            _apply_overrides(constants, overrides, "inverted_pendulum")
        limit = constants["force_limit"]
        spec = EnvironmentSpec(
            name="inverted_pendulum",
            state_dim=4,
            action_space=ActionSpace(kind="continuous", low=(-limit,), high=(limit,)),
            dt=overrides.get("dt", 0.02) if overrides else 0.02,
            max_episode_steps=int(overrides.get("max_episode_steps", 200)) if overrides else 200,
            constants=constants,
        )
        super().__init__(spec)

    def _sample_initial_state(self, rng: np.random.Generator) -> np.ndarray:
        h = self.spec.constants["reset_halfwidth"]
        return rng.uniform(-h, h, size=4)

    def accelerations(self, state: np.ndarray, force: float) -> tuple[float, float]:
        c = self.spec.constants
        x_acc, theta_acc = _cartpole_accelerations(state, force, c)
        m_p = c["pole_mass"]
        length = c["pole_length"]
        total_mass = m_p + c["cart_mass"]
        theta_acc -= c["pole_damping"] * state[3] / (m_p * length**2)
        x_acc -= c["cart_damping"] * state[1] / total_mass
        return x_acc, theta_acc

    def _transition(self, state: np.ndarray, action) -> np.ndarray:
        force = float(self.action_to_model_input(action)[0])
        x, x_dot, theta, theta_dot = state
        x_acc, theta_acc = self.accelerations(state, force)
        dt = self.spec.dt
        x_dot = x_dot + dt * x_acc
        x = x + dt * x_dot
        theta_dot = theta_dot + dt * theta_acc
        theta = theta + dt * theta_dot
        return np.array([x, x_dot, theta, theta_dot])

    def reward(self, state, action, next_state) -> float:
        return 1.0

    def is_terminal(self, state) -> bool:
        return bool(abs(state[2]) > self.spec.constants["theta_threshold"])

    def true_dynamics_oracle(self, state, action) -> np.ndarray:
        return self._transition(np.asarray(state, dtype=float), action)


# ---------------------------------------------------------------------------
# Continuous mountain car (difference equations with clamps)
# ---------------------------------------------------------------------------

_MOUNTAIN_CAR_CONSTANTS = {
    "power": 0.0015,
    "gravity": 0.0025,
    "min_position": -1.2,
    "max_position": 0.6,
    "max_speed": 0.07,
    "goal_position": 0.45,
    "goal_reward": 100.0,
    "action_cost": 0.1,
    "reset_low": -0.6,
    "reset_high": -0.4,
}


class MountainCarEnv(Environment):
    """Standard continuous mountain car; left-wall collisions are inelastic."""

    sindy_mode = "discrete"

    def __init__(self, overrides: Mapping[str, float] | None = None):
        constants = dict(_MOUNTAIN_CAR_CONSTANTS)
        if overrides:
            _apply_overrides(constants, overrides, "mountain_car")
        spec = EnvironmentSpec(
            name="mountain_car",
            state_dim=2,
            action_space=ActionSpace(kind="continuous", low=(-1.0,), high=(1.0,)),
            dt=overrides.get("dt", 1.0) if overrides else 1.0,
            max_episode_steps=int(overrides.get("max_episode_steps", 999)) if overrides else 999,
            constants=constants,
        )
        super().__init__(spec)

    def _sample_initial_state(self, rng: np.random.Generator) -> np.ndarray:
        c = self.spec.constants
        return np.array([rng.uniform(c["reset_low"], c["reset_high"]), 0.0])

    def _transition(self, state: np.ndarray, action) -> np.ndarray:
        c = self.spec.constants
        force = float(self.action_to_model_input(action)[0])
        position, velocity = state
        velocity = velocity + force * c["power"] - c["gravity"] * math.cos(3.0 * position)
        velocity = min(max(velocity, -c["max_speed"]), c["max_speed"])
        position = position + velocity
        position = min(max(position, c["min_position"]), c["max_position"])
        if position <= c["min_position"] and velocity < 0.0:
            velocity = 0.0
        return np.array([position, velocity])

    def reward(self, state, action, next_state) -> float:
        c = self.spec.constants
        force = float(self.action_to_model_input(action)[0])
        reward = -c["action_cost"] * force**2
        if next_state[0] >= c["goal_position"]:
            reward += c["goal_reward"]
        return reward

    def is_terminal(self, state) -> bool:
        return bool(state[0] >= self.spec.constants["goal_position"])

    def true_dynamics_oracle(self, state, action) -> np.ndarray:
        return self._transition(np.asarray(state, dtype=float), action)

    def unclamped_next_state(self, state: np.ndarray, action) -> np.ndarray:
        """Difference equations without the velocity/position clamps.

        This is the sparse form a fitted model should recover; the clamps
        only activate at the state-space boundary.
        """
        c = self.spec.constants
        force = float(self.action_to_model_input(action)[0])
        position, velocity = state
        velocity = velocity + force * c["power"] - c["gravity"] * math.cos(3.0 * position)
        return np.array([position + velocity, velocity])

    def clip_model_state(self, state: np.ndarray) -> np.ndarray:
        c = self.spec.constants
        position, velocity = state
        velocity = min(max(velocity, -c["max_speed"]), c["max_speed"])
        position = min(max(position, c["min_position"]), c["max_position"])
        if position <= c["min_position"] and velocity < 0.0:
            velocity = 0.0
        return np.array([position, velocity])

    def model_start_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.spec.constants
        return (np.array([c["min_position"], -c["max_speed"]]),
                np.array([c["goal_position"], c["max_speed"]]))


# ---------------------------------------------------------------------------
# Pendulum swing-up (torque-driven, observed as cos/sin/angular velocity)
# ---------------------------------------------------------------------------

_PENDULUM_CONSTANTS = {
    "gravity": 10.0,
    "mass": 1.0,
    "length": 1.0,
    "max_torque": 2.0,
    "max_speed": 8.0,
    "angle_cost": 1.0,
    "speed_cost": 0.1,
    "torque_cost": 0.001,
    "reset_theta_low": -math.pi,
    "reset_theta_high": math.pi,
    "reset_thetadot_low": -1.0,
    "reset_thetadot_high": 1.0,
}

def _wrap_angle(theta: float) -> float:
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


class PendulumEnv(Environment):
    """Torque-driven pendulum; theta = 0 is upright, reward penalizes angle error.

    The internal (theta, theta_dot) state advances by semi-implicit Euler at
    dt (velocity first, then position); the observation is
    (cos theta, sin theta, theta_dot).  The dynamics model works in the
    internal coordinates, recovered from observations via atan2 plus
    unwrapping, where the stepped dynamics are sparse in the feature basis.
    """

    sindy_mode = "discrete"

    def __init__(self, overrides: Mapping[str, float] | None = None):
        constants = dict(_PENDULUM_CONSTANTS)
        if overrides:
            _apply_overrides(constants, overrides, "pendulum")
        limit = constants["max_torque"]
        spec = EnvironmentSpec(
            name="pendulum",
            state_dim=3,
            action_space=ActionSpace(kind="continuous", low=(-limit,), high=(limit,)),
            dt=overrides.get("dt", 0.05) if overrides else 0.05,
            max_episode_steps=int(overrides.get("max_episode_steps", 200)) if overrides else 200,
            constants=constants,
        )
        super().__init__(spec)
        self._theta = 0.0
        self._theta_dot = 0.0

    def _sample_initial_state(self, rng: np.random.Generator) -> np.ndarray:
        c = self.spec.constants
        self._theta = rng.uniform(c["reset_theta_low"], c["reset_theta_high"])
        self._theta_dot = rng.uniform(c["reset_thetadot_low"], c["reset_thetadot_high"])
        return self._observe()

    def _observe(self) -> np.ndarray:
        return np.array([math.cos(self._theta), math.sin(self._theta), self._theta_dot])

    def _angular_acceleration(self, theta: float, torque: float) -> float:
        c = self.spec.constants
        return (3.0 * c["gravity"] / (2.0 * c["length"]) * math.sin(theta)
                + 3.0 * torque / (c["mass"] * c["length"] ** 2))

    def _transition(self, state: np.ndarray, action) -> np.ndarray:
        torque = float(self.action_to_model_input(action)[0])
        dt = self.spec.dt
        theta_dot = self._theta_dot + dt * self._angular_acceleration(self._theta, torque)
        max_speed = self.spec.constants["max_speed"]
        theta_dot = min(max(theta_dot, -max_speed), max_speed)
        theta = self._theta + dt * theta_dot
        self._theta = _wrap_angle(theta)
        self._theta_dot = theta_dot
        return self._observe()

    def reward(self, state, action, next_state) -> float:
        c = self.spec.constants
        torque = float(self.action_to_model_input(action)[0])
        theta = math.atan2(state[1], state[0])
        return -(c["angle_cost"] * theta**2
                 + c["speed_cost"] * state[2] ** 2
                 + c["torque_cost"] * torque**2)

    def is_terminal(self, state) -> bool:
        return False

    @property
    def model_state_dim(self) -> int:
        return 2

    def states_to_model(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        theta = np.unwrap(np.arctan2(states[:, 1], states[:, 0]))
        return np.column_stack([theta, states[:, 2]])

    def model_state_to_observation(self, state: np.ndarray) -> np.ndarray:
        theta, theta_dot = np.asarray(state, dtype=float)
        return np.array([math.cos(theta), math.sin(theta), theta_dot])

    def model_reward(self, state, action, next_state) -> float:
        c = self.spec.constants
        torque = float(self.action_to_model_input(action)[0])
        return -(c["angle_cost"] * _wrap_angle(state[0]) ** 2
                 + c["speed_cost"] * state[1] ** 2
                 + c["torque_cost"] * torque**2)

    def model_is_terminal(self, state) -> bool:
        return False

    def clip_model_state(self, state: np.ndarray) -> np.ndarray:
        max_speed = self.spec.constants["max_speed"]
        theta, theta_dot = state
        return np.array([theta, min(max(theta_dot, -max_speed), max_speed)])

    def model_start_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        max_speed = self.spec.constants["max_speed"]
        return (np.array([-math.pi, -max_speed]), np.array([math.pi, max_speed]))

    def true_dynamics_oracle(self, state, action) -> np.ndarray:
        """Next model state (theta, theta_dot) without the speed clamp."""
        torque = float(self.action_to_model_input(action)[0])
        theta, theta_dot = np.asarray(state, dtype=float)
        dt = self.spec.dt
        theta_dot = theta_dot + dt * self._angular_acceleration(theta, torque)
        return np.array([theta + dt * theta_dot, theta_dot])

    def mechanical_energy(self) -> float:
        """Kinetic plus potential energy of the internal state (zero torque check)."""
        c = self.spec.constants
        # Uniform rod pivoting at one end: I = m l^2 / 3, COM at l/2.
        inertia = c["mass"] * c["length"] ** 2 / 3.0
        kinetic = 0.5 * inertia * self._theta_dot**2
        potential = c["mass"] * c["gravity"] * (c["length"] / 2.0) * math.cos(self._theta)
        return kinetic + potential


# ---------------------------------------------------------------------------
# Factory
# ---------------------------------------------------------------------------

_ENV_CLASSES = {
    "cartpole": CartPoleEnv,
    "inverted_pendulum": InvertedPendulumEnv,
    "mountain_car": MountainCarEnv,
    "pendulum": PendulumEnv,
}

ENVIRONMENT_NAMES = tuple(sorted(_ENV_CLASSES))


def _apply_overrides(constants: dict, overrides: Mapping[str, float], name: str) -> None:
    for key, value in overrides.items():
        if key in ("dt", "max_episode_steps"):
            continue
        if key not in constants:
            raise ValueError(f"unknown constant {key!r} for environment {name!r}")
        constants[key] = float(value)


def make_env(name: str, overrides: Mapping[str, float] | None = None) -> Environment:
    try:
        cls = _ENV_CLASSES[name]
    except KeyError:
        raise ValueError(
            f"unknown environment {name!r}; choices: {ENVIRONMENT_NAMES}") from None
    return cls(overrides)
