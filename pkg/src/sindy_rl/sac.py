"""Soft actor-critic learners used on both real and model rollouts.

Two variants share the twin-critic machinery: a squashed-Gaussian actor for
continuous action spaces and a categorical actor for discrete ones.  Loss
terms are exposed as separate methods so their gradients can be checked
against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

__all__ = [
    "ReplayBuffer",
    "SacConfig",
    "ContinuousSac",
    "DiscreteSac",
    "make_agent",
    "evaluate_policy",
]

_LOG_STD_MIN = -20.0
_LOG_STD_MAX = 2.0
_CHECKPOINT_VERSION = 1


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with per-transition source tags."""

    REAL = 0
    MODEL = 1
    _SOURCES = {"real": REAL, "model": MODEL}

    def __init__(self, capacity: int, state_dim: int, action_dim: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self._states = np.zeros((capacity, state_dim), dtype=np.float64)
        self._actions = np.zeros((capacity, action_dim), dtype=np.float64)
        self._rewards = np.zeros(capacity, dtype=np.float64)
        self._next_states = np.zeros((capacity, state_dim), dtype=np.float64)
        self._dones = np.zeros(capacity, dtype=np.float64)
        self._sources = np.zeros(capacity, dtype=np.uint8)
        self._size = 0
        self._cursor = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self._size

    def count(self, source: str | None = None) -> int:
        if source is None:
            return self._size
        tag = self._SOURCES[source]
        return int(np.count_nonzero(self._sources[: self._size] == tag))

    def add(self, state, action, reward, next_state, done, source: str) -> None:
        if source not in self._SOURCES:
            raise ValueError(f"source must be one of {sorted(self._SOURCES)}")
        i = self._cursor
        self._states[i] = np.asarray(state, dtype=np.float64).ravel()
        self._actions[i] = np.asarray(action, dtype=np.float64).ravel()
        self._rewards[i] = float(reward)
        self._next_states[i] = np.asarray(next_state, dtype=np.float64).ravel()
        self._dones[i] = float(bool(done))
        self._sources[i] = self._SOURCES[source]
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def add_trajectory(self, trajectory, source: str) -> None:
        for state, action, reward, next_state, done in trajectory.transitions():
            self.add(state, action, reward, next_state, done, source)

    def sample(self, batch_size: int, source: str | None = None,
               dtype=torch.float32) -> dict[str, torch.Tensor]:
        """Uniformly sample a batch; optionally restricted to one source tag."""
        if source is None:
            pool = np.arange(self._size)
        else:
            pool = np.flatnonzero(self._sources[: self._size] == self._SOURCES[source])
        if pool.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = pool[self._rng.integers(0, pool.size, size=batch_size)]
        return {
            "states": torch.as_tensor(self._states[idx], dtype=dtype),
            "actions": torch.as_tensor(self._actions[idx], dtype=dtype),
            "rewards": torch.as_tensor(self._rewards[idx], dtype=dtype),
            "next_states": torch.as_tensor(self._next_states[idx], dtype=dtype),
            "dones": torch.as_tensor(self._dones[idx], dtype=dtype),
        }


@dataclass(frozen=True)
class SacConfig:
    """Learner hyperparameters; defaults are conventional desk-scale settings."""

    hidden_sizes: tuple[int, ...] = (64, 64)
    learning_rate: float = 3e-4
    batch_size: int = 128
    gamma: float = 0.99
    tau: float = 0.005
    init_temperature: float = 1.0
    #: None selects the per-variant default (-action_dim continuous,
    #: 0.6 * log(n_actions) discrete).
    target_entropy: float | None = None

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.init_temperature <= 0:
            raise ValueError("init_temperature must be positive")


def _mlp(sizes: tuple[int, ...], dtype) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1], dtype=dtype))
        if i < len(sizes) - 2:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class _SacBase:
    """Shared twin-critic plumbing for both action-space variants."""

    def __init__(self, state_dim: int, config: SacConfig, seed: int, dtype):
        self.state_dim = state_dim
        self.config = config
        self.dtype = dtype
        torch.manual_seed(seed)
        self._noise = torch.Generator().manual_seed(seed + 1)
        self.log_alpha = torch.tensor(
            float(np.log(config.init_temperature)), dtype=dtype, requires_grad=True)

    def _finish_init(self):
        cfg = self.config
        self.target_critic_1.load_state_dict(self.critic_1.state_dict())
        self.target_critic_2.load_state_dict(self.critic_2.state_dict())
        for p in self.target_critic_1.parameters():
            p.requires_grad_(False)
        for p in self.target_critic_2.parameters():
            p.requires_grad_(False)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=cfg.learning_rate)
        self.critic_opt = torch.optim.Adam(
            list(self.critic_1.parameters()) + list(self.critic_2.parameters()),
            lr=cfg.learning_rate)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=cfg.learning_rate)

    @property
    def alpha(self) -> torch.Tensor:
        return self.log_alpha.exp()

    def soft_update_targets(self) -> None:
        tau = self.config.tau
        with torch.no_grad():
            for target, live in ((self.target_critic_1, self.critic_1),
                                 (self.target_critic_2, self.critic_2)):
                for tp, lp in zip(target.parameters(), live.parameters()):
                    tp.mul_(1.0 - tau).add_(tau * lp)

    def update(self, batch: dict[str, torch.Tensor]) -> dict[str, float]:
        """One gradient step on critics, actor, and temperature; soft target update."""
        critic_loss = self.critic_loss(batch)
        self.critic_opt.zero_grad()
        critic_loss.backward()
        self.critic_opt.step()

        actor_loss = self.actor_loss(batch)
        self.actor_opt.zero_grad()
        actor_loss.backward()
        self.actor_opt.step()

        alpha_loss = self.temperature_loss(batch)
        self.alpha_opt.zero_grad()
        alpha_loss.backward()
        self.alpha_opt.step()

        self.soft_update_targets()
        losses = {"critic_loss": float(critic_loss.detach()),
                  "actor_loss": float(actor_loss.detach()),
                  "alpha_loss": float(alpha_loss.detach()),
                  "alpha": float(self.alpha.detach())}
        for name, value in losses.items():
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite {name}: {losses}")
        return losses

    # -- checkpointing -------------------------------------------------------

    def _modules(self) -> dict[str, nn.Module]:
        return {"actor": self.actor, "critic_1": self.critic_1,
                "critic_2": self.critic_2, "target_critic_1": self.target_critic_1,
                "target_critic_2": self.target_critic_2}

    def save_checkpoint(self, path: str | Path) -> None:
        payload = {"version": _CHECKPOINT_VERSION,
                   "variant": type(self).__name__,
                   "log_alpha": self.log_alpha.detach().clone()}
        for name, module in self._modules().items():
            payload[name] = module.state_dict()
        torch.save(payload, path)

    def load_checkpoint(self, path: str | Path) -> None:
        payload = torch.load(path, weights_only=True)
        if payload.get("version") != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
        if payload.get("variant") != type(self).__name__:
            raise ValueError(f"checkpoint holds a {payload.get('variant')}, "
                             f"expected {type(self).__name__}")
        for name, module in self._modules().items():
            module.load_state_dict(payload[name])
        with torch.no_grad():
            self.log_alpha.copy_(payload["log_alpha"])


class ContinuousSac(_SacBase):
    """SAC with a squashed-Gaussian actor for box-bounded action spaces."""

    def __init__(self, state_dim: int, action_dim: int,
                 action_low, action_high,
                 config: SacConfig | None = None, seed: int = 0,
                 dtype=torch.float32):
        config = config or SacConfig()
        super().__init__(state_dim, config, seed, dtype)
        self.action_dim = action_dim
        low = np.broadcast_to(np.asarray(action_low, dtype=float), (action_dim,))
        high = np.broadcast_to(np.asarray(action_high, dtype=float), (action_dim,))
        if np.any(high <= low):
            raise ValueError("action_high must exceed action_low")
        self._scale = torch.as_tensor((high - low) / 2.0, dtype=dtype)
        self._center = torch.as_tensor((high + low) / 2.0, dtype=dtype)
        sizes = (state_dim, *config.hidden_sizes)
        self.actor = _mlp((*sizes, 2 * action_dim), dtype)
        self.critic_1 = _mlp((state_dim + action_dim, *config.hidden_sizes, 1), dtype)
        self.critic_2 = _mlp((state_dim + action_dim, *config.hidden_sizes, 1), dtype)
        self.target_critic_1 = _mlp((state_dim + action_dim, *config.hidden_sizes, 1), dtype)
        self.target_critic_2 = _mlp((state_dim + action_dim, *config.hidden_sizes, 1), dtype)
        self.target_entropy = (config.target_entropy if config.target_entropy is not None
                               else -float(action_dim))
        self._finish_init()

    def _policy_params(self, states: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = self.actor(states)
        mean, log_std = out.chunk(2, dim=-1)
        log_std = torch.clamp(log_std, _LOG_STD_MIN, _LOG_STD_MAX)
        return mean, log_std

    def _sample(self, states: torch.Tensor, noise: torch.Tensor | None = None):
        """Reparameterized squashed-Gaussian sample with its log probability."""
        mean, log_std = self._policy_params(states)
        std = log_std.exp()
        if noise is None:
            noise = torch.randn(mean.shape, generator=self._noise, dtype=mean.dtype)
        pre_tanh = mean + std * noise
        squashed = torch.tanh(pre_tanh)
        action = self._center + self._scale * squashed
        gauss_logp = (-0.5 * noise**2 - log_std - 0.5 * float(np.log(2 * np.pi))).sum(-1)
        # Change of variables through tanh and the affine rescale.
        correction = torch.log(self._scale * (1.0 - squashed**2) + 1e-9).sum(-1)
        return action, gauss_logp - correction

    def select_action(self, state, deterministic: bool = False) -> np.ndarray:
        state_t = torch.as_tensor(np.asarray(state, dtype=float), dtype=self.dtype)
        with torch.no_grad():
            if deterministic:
                mean, _ = self._policy_params(state_t)
                action = self._center + self._scale * torch.tanh(mean)
            else:
                action, _ = self._sample(state_t.unsqueeze(0))
                action = action.squeeze(0)
        action = action.numpy().astype(float)
        if not np.all(np.isfinite(action)):
            raise FloatingPointError(f"actor produced non-finite action {action}")
        return action

    def _q(self, critic: nn.Module, states: torch.Tensor, actions: torch.Tensor):
        return critic(torch.cat([states, actions], dim=-1)).squeeze(-1)

    def critic_loss(self, batch: dict[str, torch.Tensor],
                    noise: torch.Tensor | None = None) -> torch.Tensor:
        states, actions = batch["states"], batch["actions"]
        with torch.no_grad():
            next_actions, next_logp = self._sample(batch["next_states"], noise=noise)
            target_q = torch.min(
                self._q(self.target_critic_1, batch["next_states"], next_actions),
                self._q(self.target_critic_2, batch["next_states"], next_actions))
            soft_value = target_q - self.alpha * next_logp
            target = batch["rewards"] + self.config.gamma * (1.0 - batch["dones"]) * soft_value
        loss_1 = F.mse_loss(self._q(self.critic_1, states, actions), target)
        loss_2 = F.mse_loss(self._q(self.critic_2, states, actions), target)
        return loss_1 + loss_2

    def actor_loss(self, batch: dict[str, torch.Tensor],
                   noise: torch.Tensor | None = None) -> torch.Tensor:
        states = batch["states"]
        actions, logp = self._sample(states, noise=noise)
        q = torch.min(self._q(self.critic_1, states, actions),
                      self._q(self.critic_2, states, actions))
        return (self.alpha.detach() * logp - q).mean()

    def temperature_loss(self, batch: dict[str, torch.Tensor],
                         noise: torch.Tensor | None = None) -> torch.Tensor:
        with torch.no_grad():
            _, logp = self._sample(batch["states"], noise=noise)
        return (-self.log_alpha.exp() * (logp + self.target_entropy).detach()).mean()


class DiscreteSac(_SacBase):
    """SAC with a categorical actor; critics output per-action values."""

    def __init__(self, state_dim: int, n_actions: int,
                 config: SacConfig | None = None, seed: int = 0,
                 dtype=torch.float32):
        config = config or SacConfig()
        super().__init__(state_dim, config, seed, dtype)
        self.n_actions = n_actions
        self.actor = _mlp((state_dim, *config.hidden_sizes, n_actions), dtype)
        self.critic_1 = _mlp((state_dim, *config.hidden_sizes, n_actions), dtype)
        self.critic_2 = _mlp((state_dim, *config.hidden_sizes, n_actions), dtype)
        self.target_critic_1 = _mlp((state_dim, *config.hidden_sizes, n_actions), dtype)
        self.target_critic_2 = _mlp((state_dim, *config.hidden_sizes, n_actions), dtype)
        self.target_entropy = (config.target_entropy if config.target_entropy is not None
                               else 0.6 * float(np.log(n_actions)))
        self._finish_init()

    def _policy(self, states: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        logits = self.actor(states)
        log_probs = F.log_softmax(logits, dim=-1)
        return log_probs.exp(), log_probs

    def select_action(self, state, deterministic: bool = False) -> int:
        state_t = torch.as_tensor(np.asarray(state, dtype=float), dtype=self.dtype)
        with torch.no_grad():
            probs, _ = self._policy(state_t)
        if not torch.all(torch.isfinite(probs)):
            raise FloatingPointError(f"actor produced non-finite probabilities {probs}")
        if deterministic:
            return int(torch.argmax(probs))
        return int(torch.multinomial(probs, 1, generator=self._noise))

    def critic_loss(self, batch: dict[str, torch.Tensor]) -> torch.Tensor:
        states = batch["states"]
        action_idx = batch["actions"].long().squeeze(-1)
        with torch.no_grad():
            probs, log_probs = self._policy(batch["next_states"])
            target_q = torch.min(self.target_critic_1(batch["next_states"]),
                                 self.target_critic_2(batch["next_states"]))
            soft_value = (probs * (target_q - self.alpha * log_probs)).sum(-1)
            target = batch["rewards"] + self.config.gamma * (1.0 - batch["dones"]) * soft_value
        q1 = self.critic_1(states).gather(1, action_idx[:, None]).squeeze(-1)
        q2 = self.critic_2(states).gather(1, action_idx[:, None]).squeeze(-1)
        return F.mse_loss(q1, target) + F.mse_loss(q2, target)

    def actor_loss(self, batch: dict[str, torch.Tensor]) -> torch.Tensor:
        states = batch["states"]
        probs, log_probs = self._policy(states)
        with torch.no_grad():
            q = torch.min(self.critic_1(states), self.critic_2(states))
        return (probs * (self.alpha.detach() * log_probs - q)).sum(-1).mean()

    def temperature_loss(self, batch: dict[str, torch.Tensor]) -> torch.Tensor:
        with torch.no_grad():
            probs, log_probs = self._policy(batch["states"])
            entropy = -(probs * log_probs).sum(-1)
        return (self.log_alpha.exp() * (entropy - self.target_entropy).detach()).mean()


def make_agent(env, config: SacConfig | None = None, seed: int = 0, dtype=torch.float32):
    """Build the SAC variant matching an environment's action space."""
    space = env.spec.action_space
    if space.kind == "discrete":
        return DiscreteSac(env.spec.state_dim, space.n, config, seed, dtype)
    return ContinuousSac(env.spec.state_dim, len(space.low), space.low, space.high,
                         config, seed, dtype)


def evaluate_policy(agent, env, episodes: int, seed: int = 0):
    """Deterministic-policy rollouts; returns (mean, per-episode returns)."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    returns = []
    for episode in range(episodes):
        state = env.reset(seed + episode)
        total = 0.0
        done = False
        while not done:
            action = agent.select_action(state, deterministic=True)
            result = env.step(action)
            total += result.reward
            state = result.next_state
            done = result.done
        returns.append(total)
    return float(np.mean(returns)), returns
