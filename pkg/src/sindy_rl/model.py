"""Fitting, evaluating, integrating, and printing sparse dynamics models.

A fitted model is a feature library plus a sparse F x n coefficient matrix.
In continuous mode the model is an ODE right-hand side integrated with RK4
(zero-order-hold actions); in discrete mode it is a difference equation
evaluated directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .differentiation import smoothed_finite_difference
from .features import FeatureLibrary, evaluate_library, parse_custom_features
from .regression import CoefficientMatrix, RegressionProblem, StlsqConfig, stlsq

__all__ = [
    "Trajectory",
    "DifferentiationConfig",
    "SindyModel",
    "DivergenceError",
    "fit",
    "rollout_model",
    "save_model",
    "load_model",
]

#: Model rollouts abort when any state coordinate exceeds this magnitude.
DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    """A model rollout produced a non-finite or runaway state."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class Trajectory:
    """One episode: T+1 states, T actions/rewards/dones, fixed timestep."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    dt: float

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        actions = np.asarray(self.actions, dtype=float)
        if actions.ndim == 1:
            actions = actions[:, None]
        rewards = np.asarray(self.rewards, dtype=float)
        dones = np.asarray(self.dones, dtype=bool)
        if states.shape[0] != actions.shape[0] + 1:
            raise ValueError(
                f"states must have exactly one more row than actions "
                f"({states.shape[0]} vs {actions.shape[0]})")
        if rewards.shape[0] != actions.shape[0] or dones.shape[0] != actions.shape[0]:
            raise ValueError("rewards and dones must match the action count")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(actions))
                and np.all(np.isfinite(rewards))):
            raise ValueError("trajectory contains non-finite entries")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "dones", dones)

    @property
    def length(self) -> int:
        return self.actions.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))

    def transitions(self):
        """Yield (state, action, reward, next_state, done) tuples."""
        for t in range(self.length):
            yield (self.states[t], self.actions[t], self.rewards[t],
                   self.states[t + 1], bool(self.dones[t]))


@dataclass(frozen=True)
class DifferentiationConfig:
    """Smoothed-differentiation settings for continuous-mode fitting."""

    window: int = 7
    poly_order: int = 3
    include_boundary: bool = False


@dataclass(frozen=True)
class SindyModel:
    """A fitted dynamics model: library, sparse coefficients, and mode."""

    library: FeatureLibrary
    coefficients: CoefficientMatrix
    mode: str  # "continuous" | "discrete"
    state_dim: int
    action_dim: int
    fit_dt: float
    diagnostics: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.mode not in ("continuous", "discrete"):
            raise ValueError(f"mode must be 'continuous' or 'discrete', got {self.mode!r}")
        if self.coefficients.n_features != self.library.size:
            raise ValueError("coefficient row count must equal library size")
        if self.coefficients.n_targets != self.state_dim:
            raise ValueError("coefficient column count must equal state_dim")
        if self.library.input_dim != self.state_dim + self.action_dim:
            raise ValueError("library input_dim must equal state_dim + action_dim")

    def parameter_count(self) -> int:
        return self.library.size * self.state_dim

    def nonzero_count(self) -> int:
        return self.coefficients.nonzero_count()

    def _evaluate(self, x: np.ndarray, a: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        a = np.asarray(a, dtype=float).ravel()
        if x.shape[0] != self.state_dim or a.shape[0] != self.action_dim:
            raise ValueError(
                f"expected state dim {self.state_dim} and action dim {self.action_dim}, "
                f"got {x.shape[0]} and {a.shape[0]}")
        theta = evaluate_library(self.library, x[None, :], a[None, :])
        return (theta @ self.coefficients.values)[0]

    def predict_derivative(self, x: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self.mode != "continuous":
            raise ValueError("predict_derivative requires a continuous-mode model")
        return self._evaluate(x, a)

    def simulate_step(self, x: np.ndarray, a: np.ndarray, dt: float | None = None) -> np.ndarray:
        """One step forward: RK4 over dt (continuous) or direct evaluation (discrete)."""
        if self.mode == "discrete":
            next_state = self._evaluate(x, a)
        else:
            if dt is None:
                dt = self.fit_dt
            if dt <= 0:
                raise ValueError("dt must be positive for continuous simulation")
            x = np.asarray(x, dtype=float).ravel()
            k1 = self._evaluate(x, a)
            k2 = self._evaluate(x + 0.5 * dt * k1, a)
            k3 = self._evaluate(x + 0.5 * dt * k2, a)
            k4 = self._evaluate(x + dt * k3, a)
            next_state = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(next_state)) or np.any(np.abs(next_state) > DIVERGENCE_LIMIT):
            raise DivergenceError("model state diverged within a single step", step=0)
        return next_state

    def equations_to_string(self) -> str:
        """One line per state dimension listing the nonzero terms to 4 decimals."""
        lines = []
        names = self.library.names
        for j in range(self.state_dim):
            lhs = f"d x{j}/dt" if self.mode == "continuous" else f"x{j}[t+1]"
            column = self.coefficients.values[:, j]
            terms = [f"{column[i]:.4f}*{names[i]}" if names[i] != "1" else f"{column[i]:.4f}"
                     for i in np.flatnonzero(column)]
            rhs = " + ".join(terms).replace("+ -", "- ") if terms else "0"
            lines.append(f"{lhs} = {rhs}")
        return "\n".join(lines)


def _assemble_problem(
    trajectories: Sequence[Trajectory],
    library: FeatureLibrary,
    mode: str,
    diff_config: DifferentiationConfig,
) -> RegressionProblem:
    theta_blocks = []
    target_blocks = []
    for traj in trajectories:
        if mode == "discrete":
            rows = slice(0, traj.length)
            theta_blocks.append(evaluate_library(
                library, traj.states[rows], traj.actions))
            target_blocks.append(traj.states[1:])
        else:
            estimate = smoothed_finite_difference(
                traj.states, traj.dt, diff_config.window, diff_config.poly_order)
            if diff_config.include_boundary:
                start, stop = 0, traj.states.shape[0]
            else:
                start, stop = estimate.valid_range
            # Actions exist only for rows 0..T-1.
            stop = min(stop, traj.length)
            if stop <= start:
                raise ValueError(
                    f"trajectory of length {traj.length} leaves no usable rows after "
                    f"excluding differentiation boundaries (window {diff_config.window})")
            theta_blocks.append(evaluate_library(
                library, traj.states[start:stop], traj.actions[start:stop]))
            target_blocks.append(estimate.values[start:stop])
    return RegressionProblem(theta=np.vstack(theta_blocks),
                             targets=np.vstack(target_blocks))


def fit(
    trajectories: Sequence[Trajectory],
    library: FeatureLibrary,
    mode: str,
    stlsq_config: StlsqConfig | None = None,
    diff_config: DifferentiationConfig | None = None,
) -> SindyModel:
    """Fit a sparse dynamics model to one or more trajectories."""
    if not trajectories:
        raise ValueError("need at least one trajectory")
    if mode not in ("continuous", "discrete"):
        raise ValueError(f"mode must be 'continuous' or 'discrete', got {mode!r}")
    stlsq_config = stlsq_config or StlsqConfig()
    diff_config = diff_config or DifferentiationConfig()
    dims = {(t.state_dim, t.action_dim) for t in trajectories}
    if len(dims) != 1:
        raise ValueError(f"inconsistent trajectory dimensions: {sorted(dims)}")
    dts = {t.dt for t in trajectories}
    if len(dts) != 1:
        raise ValueError(f"inconsistent trajectory timesteps: {sorted(dts)}")
    state_dim, action_dim = dims.pop()
    if library.input_dim != state_dim + action_dim:
        raise ValueError(
            f"library expects {library.input_dim} inputs but trajectories provide "
            f"{state_dim + action_dim}")
    if mode == "continuous":
        min_len = min(t.states.shape[0] for t in trajectories)
        if min_len < diff_config.window:
            raise ValueError(
                f"continuous fitting needs trajectories with at least "
                f"{diff_config.window} states, shortest has {min_len}")
    problem = _assemble_problem(trajectories, library, mode, diff_config)
    coefficients = stlsq(problem, stlsq_config)
    return SindyModel(
        library=library,
        coefficients=coefficients,
        mode=mode,
        state_dim=state_dim,
        action_dim=action_dim,
        fit_dt=list(dts)[0] if dts else trajectories[0].dt,
        diagnostics=coefficients.diagnostics,
    )


def rollout_model(
    model: SindyModel,
    policy: Callable[[np.ndarray], np.ndarray],
    initial_state: np.ndarray,
    horizon: int,
    dt: float | None = None,
    reward_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], float] | None = None,
    termination_fn: Callable[[np.ndarray], bool] | None = None,
) -> Trajectory:
    """Roll the model forward under a policy, scoring with the known reward.

    ``policy`` maps a state to the action vector occupying the library's
    action slots.  The rollout stops early when ``termination_fn`` fires.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if dt is None:
        dt = model.fit_dt
    states = [np.asarray(initial_state, dtype=float).ravel().copy()]
    actions, rewards, dones = [], [], []
    for step in range(horizon):
        action = np.atleast_1d(np.asarray(policy(states[-1]), dtype=float))
        try:
            next_state = model.simulate_step(states[-1], action, dt)
        except DivergenceError as exc:
            raise DivergenceError(f"model rollout diverged at step {step}", step) from exc
        reward = reward_fn(states[-1], action, next_state) if reward_fn else 0.0
        done = bool(termination_fn(next_state)) if termination_fn else False
        states.append(next_state)
        actions.append(action)
        rewards.append(reward)
        dones.append(done)
        if done:
            break
    return Trajectory(states=np.array(states), actions=np.array(actions),
                      rewards=np.array(rewards), dones=np.array(dones), dt=dt)


# ---------------------------------------------------------------------------
# Serialization: flat text, coefficients at 17 significant digits
# ---------------------------------------------------------------------------

_FORMAT_VERSION = 1


def save_model(model: SindyModel, path: str | Path) -> None:
    lines = [
        f"sindy-model v{_FORMAT_VERSION}",
        f"mode {model.mode}",
        f"dt {model.fit_dt!r}",
        f"state_dim {model.state_dim}",
        f"action_dim {model.action_dim}",
        f"features {model.library.size}",
    ]
    for name in model.library.names:
        lines.append(f"feature {name}")
    lines.append("coefficients")
    for row in model.coefficients.values:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> SindyModel:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("sindy-model v"):
        raise ValueError(f"{path}: not a sindy model file")
    version = int(lines[0].split("v")[-1])
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    header: dict[str, str] = {}
    names: list[str] = []
    index = 1
    while index < len(lines) and lines[index] != "coefficients":
        key, _, value = lines[index].partition(" ")
        if key == "feature":
            names.append(value)
        else:
            header[key] = value
        index += 1
    if index == len(lines):
        raise ValueError(f"{path}: missing coefficient table")
    state_dim = int(header["state_dim"])
    action_dim = int(header["action_dim"])
    values = np.array([[float(v) for v in line.split()]
                       for line in lines[index + 1:] if line.strip()])
    if values.shape != (len(names), state_dim):
        raise ValueError(f"{path}: coefficient table shape {values.shape} does not "
                         f"match {len(names)} features x {state_dim} states")
    library = parse_custom_features(names, state_dim, action_dim)
    coefficients = CoefficientMatrix(values=values, active_mask=values != 0.0)
    return SindyModel(
        library=library,
        coefficients=coefficients,
        mode=header["mode"],
        state_dim=state_dim,
        action_dim=action_dim,
        fit_dt=float(header["dt"]),
    )
