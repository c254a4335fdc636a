"""Dyna-style training loop: seed rollouts, one sparse-model fit, policy
training on model rollouts, then real-environment fine-tuning to convergence.

The model-epoch count N may be a fixed integer, zero (pure model-free
training on the real environment, the control condition for speedup
comparisons), or unbounded, in which case model-side training runs until the
policy passes the convergence criterion on model rollouts or a configured
epoch budget runs out.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .environments import Environment
from .model import DifferentiationConfig, DivergenceError, SindyModel, Trajectory, fit
from .regression import StlsqConfig
from .sac import ReplayBuffer, evaluate_policy

__all__ = [
    "DynaConfig",
    "RunRecord",
    "DynaResult",
    "collect_seed_data",
    "fit_model_from_env",
    "convergence_check",
    "run_dyna",
]

_EXPLORATION_KINDS = ("alternating", "sinusoid", "uniform")
_MODEL_START_KINDS = ("reset", "uniform")


@dataclass(frozen=True)
class DynaConfig:
    """Outer-loop settings: seeding, model training, and convergence."""

    n_seed_rollouts: int = 1
    rollout_length: int = 100
    #: Model epochs per real epoch; None means unbounded (train on the model
    #: until the model-side convergence criterion fires).
    model_epochs: int | None = None
    exploration: str = "sinusoid"
    exploration_random_prob: float = 0.2
    exploration_period: float = 60.0
    exploration_amplitude: float = 1.0
    target_return: float = 0.0
    consecutive_passes: int = 1
    eval_episodes: int = 10
    max_real_episodes: int = 10
    model_horizon: int = 200
    model_episodes_per_epoch: int = 10
    model_epoch_budget: int = 50
    model_start: str = "uniform"
    warmup_steps: int = 1000
    update_every: int = 1
    buffer_capacity: int = 200_000
    #: Refit cadence in real episodes; 0 disables refitting (the default).
    refit_period: int = 0

    def __post_init__(self):
        if self.n_seed_rollouts < 1:
            raise ValueError("n_seed_rollouts must be at least 1")
        if self.rollout_length < 2:
            raise ValueError("rollout_length must be at least 2")
        if self.model_epochs is not None and self.model_epochs < 0:
            raise ValueError("model_epochs must be nonnegative or None")
        if self.exploration not in _EXPLORATION_KINDS:
            raise ValueError(f"exploration must be one of {_EXPLORATION_KINDS}")
        if self.model_start not in _MODEL_START_KINDS:
            raise ValueError(f"model_start must be one of {_MODEL_START_KINDS}")
        if not 0.0 <= self.exploration_random_prob <= 1.0:
            raise ValueError("exploration_random_prob must be in [0, 1]")


@dataclass
class RunRecord:
    """Per-evaluation log rows plus cumulative counters for one seeded run."""

    rows: list[dict] = field(default_factory=list)
    real_steps: int = 0
    model_steps: int = 0

    def log(self, **row) -> None:
        if self.rows:
            last = self.rows[-1]
            if (row["real_steps"] < last["real_steps"]
                    or row["model_steps"] < last["model_steps"]):
                raise ValueError("cumulative step counters must be non-decreasing")
        self.rows.append(row)


@dataclass
class DynaResult:
    record: RunRecord
    model: SindyModel | None
    agent: object
    converged: bool
    fine_tune_episodes: int
    #: Cumulative real steps at the first evaluation opening the passing
    #: streak; None when the run never converged.
    steps_to_threshold: int | None
    seed_trajectories: list[Trajectory] = field(default_factory=list)


def _exploration_policy(env: Environment, config: DynaConfig, rng: np.random.Generator):
    """Time-indexed exploration policy for seed-data collection."""
    space = env.spec.action_space
    kind = config.exploration

    if kind == "alternating":
        if space.kind == "discrete":
            def policy(t, state):
                if rng.random() < config.exploration_random_prob:
                    return int(rng.integers(space.n))
                return t % 2
        else:
            high = np.asarray(space.high)

            def policy(t, state):
                if rng.random() < config.exploration_random_prob:
                    return rng.uniform(space.low, space.high)
                return high if t % 2 else -high
        return policy

    if kind == "sinusoid":
        if space.kind == "discrete":
            raise ValueError("sinusoid exploration requires a continuous action space")
        phase = rng.uniform(0.0, 2.0 * np.pi)
        high = np.asarray(space.high)

        def policy(t, state):
            return config.exploration_amplitude * high * np.sin(
                2.0 * np.pi * t / config.exploration_period + phase)
        return policy

    def policy(t, state):
        if space.kind == "discrete":
            return int(rng.integers(space.n))
        return rng.uniform(space.low, space.high)
    return policy


def collect_seed_data(env: Environment, config: DynaConfig, seed: int) -> list[Trajectory]:
    """Run the exploration policy for n_seed_rollouts episodes of up to
    rollout_length steps; early termination just yields a shorter trajectory."""
    rng = np.random.default_rng(seed)
    trajectories = []
    for rollout_index in range(config.n_seed_rollouts):
        policy = _exploration_policy(env, config, rng)
        state = env.reset(seed + rollout_index)
        states, actions, rewards, dones = [state], [], [], []
        for t in range(config.rollout_length):
            action = policy(t, states[-1])
            result = env.step(action)
            states.append(result.next_state)
            actions.append(env.action_to_model_input(action))
            rewards.append(result.reward)
            dones.append(result.done)
            if result.done:
                break
        trajectories.append(Trajectory(
            states=np.array(states), actions=np.array(actions),
            rewards=np.array(rewards), dones=np.array(dones), dt=env.spec.dt))
    return trajectories


def fit_model_from_env(
    env: Environment,
    library,
    trajectories: Sequence[Trajectory],
    stlsq_config: StlsqConfig | None = None,
    diff_config: DifferentiationConfig | None = None,
) -> SindyModel:
    """Fit in the environment's model coordinates and declared mode."""
    converted = [
        replace(t, states=env.states_to_model(t.states)) for t in trajectories]
    return fit(converted, library, env.sindy_mode, stlsq_config, diff_config)


def convergence_check(returns: Sequence[float], target: float, consecutive: int) -> bool:
    """True when the last `consecutive` evaluation returns all meet the target."""
    if consecutive < 1:
        raise ValueError("consecutive must be at least 1")
    if len(returns) < consecutive:
        return False
    return all(r >= target for r in returns[-consecutive:])


def _action_record(env: Environment, action) -> np.ndarray:
    # Replay entries store the action as the agent emitted it (index for
    # discrete spaces), not the library's force representation.
    if env.spec.action_space.kind == "discrete":
        return np.array([float(action)])
    return np.asarray(action, dtype=float).ravel()


def _sample_model_start(env: Environment, config: DynaConfig,
                        rng: np.random.Generator) -> np.ndarray:
    bounds = env.model_start_bounds() if config.model_start == "uniform" else None
    if bounds is None:
        observation = env.reset(int(rng.integers(2**31)))
        return env.states_to_model(observation[None, :])[0]
    low, high = bounds
    return rng.uniform(low, high)


class _Learner:
    """Couples an agent with its replay buffer and update cadence."""

    def __init__(self, env, agent, config: DynaConfig, seed: int):
        self.env = env
        self.agent = agent
        self.config = config
        action_dim = (1 if env.spec.action_space.kind == "discrete"
                      else len(env.spec.action_space.low))
        self.buffer = ReplayBuffer(config.buffer_capacity, env.spec.state_dim,
                                   action_dim, seed=seed)
        self.total_env_steps = 0
        self._rng = np.random.default_rng(seed + 17)

    def act(self, observation):
        if self.total_env_steps < self.config.warmup_steps:
            space = self.env.spec.action_space
            if space.kind == "discrete":
                return int(self._rng.integers(space.n))
            return self._rng.uniform(space.low, space.high)
        return self.agent.select_action(observation, deterministic=False)

    def observe(self, observation, action, reward, next_observation, terminal, source):
        self.buffer.add(observation, _action_record(self.env, action), reward,
                        next_observation, terminal, source)
        self.total_env_steps += 1
        batch_size = self.agent.config.batch_size
        if (len(self.buffer) >= batch_size
                and self.total_env_steps >= self.config.warmup_steps
                and self.total_env_steps % self.config.update_every == 0):
            self.agent.update(self.buffer.sample(batch_size, dtype=self.agent.dtype))


def _model_episode(env, model, learner, config, rng, record) -> None:
    state = _sample_model_start(env, config, rng)
    for _ in range(config.model_horizon):
        observation = env.model_state_to_observation(state)
        action = learner.act(observation)
        model_input = env.action_to_model_input(action)
        next_state = env.clip_model_state(model.simulate_step(state, model_input))
        next_observation = env.model_state_to_observation(next_state)
        reward = env.model_reward(state, action, next_state)
        terminal = env.model_is_terminal(next_state)
        learner.observe(observation, action, reward, next_observation, terminal, "model")
        record.model_steps += 1
        state = next_state
        if terminal:
            break


def _evaluate_on_model(env, model, agent, config, seed: int) -> float:
    """Deterministic-policy mean return over model rollouts from reset starts."""
    returns = []
    for episode in range(config.eval_episodes):
        observation = env.reset(seed + episode)
        state = env.states_to_model(observation[None, :])[0]
        total = 0.0
        for _ in range(config.model_horizon):
            observation = env.model_state_to_observation(state)
            action = agent.select_action(observation, deterministic=True)
            next_state = env.clip_model_state(
                model.simulate_step(state, env.action_to_model_input(action)))
            total += env.model_reward(state, action, next_state)
            state = next_state
            if env.model_is_terminal(state):
                break
        returns.append(total)
    return float(np.mean(returns))


def _real_episode(env, learner, seed: int) -> Trajectory:
    """One stochastic-policy episode on the real environment with inline updates."""
    state = env.reset(seed)
    states, actions, rewards, dones = [state], [], [], []
    done = False
    while not done:
        action = learner.act(states[-1])
        result = env.step(action)
        # Horizon cutoffs are not terminal for bootstrapping purposes.
        terminal = result.done_reason == "termination"
        learner.observe(states[-1], action, result.reward, result.next_state,
                        terminal, "real")
        states.append(result.next_state)
        actions.append(env.action_to_model_input(action))
        rewards.append(result.reward)
        dones.append(result.done)
        done = result.done
    return Trajectory(states=np.array(states), actions=np.array(actions),
                      rewards=np.array(rewards), dones=np.array(dones), dt=env.spec.dt)


def run_dyna(
    env: Environment,
    library,
    agent,
    config: DynaConfig,
    seed: int = 0,
    stlsq_config: StlsqConfig | None = None,
    diff_config: DifferentiationConfig | None = None,
) -> DynaResult:
    """Execute the full loop; see the module docstring for the schedule."""
    start_time = time.monotonic()
    rng = np.random.default_rng(seed)
    record = RunRecord()
    learner = _Learner(env, agent, config, seed)

    pure_model_free = config.model_epochs == 0
    seed_trajectories: list[Trajectory] = []
    sindy_data: list[Trajectory] = []
    model: SindyModel | None = None
    if not pure_model_free:
        seed_trajectories = collect_seed_data(env, config, seed)
        sindy_data = list(seed_trajectories)
        record.real_steps += sum(t.length for t in seed_trajectories)
        model = fit_model_from_env(env, library, sindy_data, stlsq_config, diff_config)

        # Model-side training: fixed N epochs, or unbounded until the policy
        # passes the criterion on model rollouts (capped by the epoch budget).
        model_evals: list[float] = []
        epoch = 0
        while True:
            if config.model_epochs is not None and epoch >= config.model_epochs:
                break
            if config.model_epochs is None and epoch >= config.model_epoch_budget:
                break
            try:
                for _ in range(config.model_episodes_per_epoch):
                    _model_episode(env, model, learner, config, rng, record)
            except DivergenceError as exc:
                raise DivergenceError(
                    f"model rollout diverged during epoch {epoch}: {exc}", exc.step)
            epoch += 1
            if config.model_epochs is None:
                model_evals.append(_evaluate_on_model(env, model, agent, config,
                                                      seed + 5000))
                if convergence_check(model_evals, config.target_return,
                                     config.consecutive_passes):
                    break

    # Real-environment evaluation and fine-tuning.
    evals: list[float] = []
    fine_tune = 0
    converged = False
    steps_to_threshold: int | None = None
    while True:
        mean_return, returns = evaluate_policy(agent, env, config.eval_episodes,
                                               seed=seed + 9000)
        evals.append(mean_return)
        record.log(real_steps=record.real_steps, model_steps=record.model_steps,
                   eval_mean=mean_return, eval_std=float(np.std(returns)),
                   fine_tune_episodes=fine_tune,
                   model_nonzero=model.nonzero_count() if model else 0,
                   wall_time=time.monotonic() - start_time)
        if convergence_check(evals, config.target_return, config.consecutive_passes):
            converged = True
            # The streak opened consecutive_passes evaluations ago.
            streak_row = record.rows[len(record.rows) - config.consecutive_passes]
            steps_to_threshold = streak_row["real_steps"]
            break
        if fine_tune >= config.max_real_episodes:
            break
        trajectory = _real_episode(env, learner, seed + 100 + fine_tune)
        record.real_steps += trajectory.length
        sindy_data.append(trajectory)
        fine_tune += 1
        if (model is not None and config.refit_period
                and fine_tune % config.refit_period == 0):
            model = fit_model_from_env(env, library, sindy_data,
                                       stlsq_config, diff_config)

    return DynaResult(record=record, model=model, agent=agent, converged=converged,
                      fine_tune_episodes=fine_tune,
                      steps_to_threshold=steps_to_threshold,
                      seed_trajectories=seed_trajectories)
