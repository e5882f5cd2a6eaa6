"""DDPG learner: actor/critic with target copies, OU noise, replay, soft updates."""
from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import DdpgHyper, SystemConfig
from .distortion import make_rng
from .env import SemComEnv
from .nn import DenseNetwork, soft_update

CHECKPOINT_FORMAT = "semcom-alloc-agent"
CHECKPOINT_VERSION = 1


class AgentError(ValueError):
    pass


class CheckpointError(AgentError):
    pass


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored column-wise."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise AgentError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity)
        self._next = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, t: Transition):
        i = self._next
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.terminals[i] = float(t.terminal)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise AgentError("cannot sample from an empty buffer")
        return rng.choice(self.size, size=min(batch, self.size), replace=False)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = self.sample_indices(batch, rng)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.terminals[idx])


@dataclass
class OuNoiseState:
    current: np.ndarray
    theta: float = 0.15
    sigma_ou: float = 0.2
    decay: float = 0.995

    @classmethod
    def zeros(cls, dim: int, theta=0.15, sigma_ou=0.2, decay=0.995) -> "OuNoiseState":
        return cls(np.zeros(dim), theta, sigma_ou, decay)

    def reset(self):
        self.current = np.zeros_like(self.current)

    def end_episode(self):
        self.sigma_ou *= self.decay
        self.reset()


def ou_step(noise: OuNoiseState, rng: np.random.Generator) -> OuNoiseState:
    """x <- x + theta * (0 - x) + sigma * N(0, 1), per dimension (in place)."""
    noise.current = noise.current - noise.theta * noise.current + noise.sigma_ou * rng.standard_normal(noise.current.shape)
    return noise


def transform_reward(r, scale: float = 1.0, kind: str = "linear"):
    """Learner-side reward rescaling; ``symlog`` is sign(x) * log(1 + |x|) of the scaled reward."""
    x = np.asarray(r, dtype=float) * scale
    if kind == "symlog":
        return np.sign(x) * np.log1p(np.abs(x))
    if kind == "linear":
        return x
    raise AgentError(f"unknown reward transform {kind!r}")


def critic_target(r, q_next, gamma: float, terminal):
    """One-step bootstrapped target r + gamma * Q'(s', a') on non-terminal steps."""
    return np.asarray(r) + gamma * np.asarray(q_next) * (1.0 - np.asarray(terminal, dtype=float))


class DdpgAgent:
    """Deterministic actor and Q critic over raw action logits.

    The actor's last layer is mapped through ``bound * tanh(z / bound)`` so
    the logits the critic sees stay in a fixed window.
    """

    def __init__(self, state_dim: int, action_dim: int, hyper: DdpgHyper, seed=0, action_bound: float = 6.0):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hyper = hyper
        self.seed = seed
        self.action_bound = float(action_bound)
        rng = make_rng([seed, 1])
        hidden = tuple(hyper.hidden)
        self.actor = DenseNetwork.create((state_dim, *hidden, action_dim), rng, hyper.momentum, output_scale=0.1)
        self.critic = DenseNetwork.create((state_dim + action_dim, *hidden, 1), rng, hyper.momentum)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.episodes_trained = 0

    # -- policy -------------------------------------------------------------

    def _bounded(self, z):
        b = self.action_bound
        return b * np.tanh(z / b)

    def act(self, features) -> np.ndarray:
        return self._bounded(self.actor.forward(features))

    def target_act(self, features) -> np.ndarray:
        return self._bounded(self.actor_target.forward(features))

    def critic_input(self, states, actions) -> np.ndarray:
        return np.concatenate([states, actions / self.action_bound], axis=-1)

    def q_value(self, states, actions, target: bool = False) -> np.ndarray:
        net = self.critic_target if target else self.critic
        return net.forward(self.critic_input(states, actions))[..., 0]

    def select_action(self, features, noise: OuNoiseState | None = None, explore: bool = False,
                      rng: np.random.Generator | None = None) -> np.ndarray:
        a = self.act(features)
        if explore and noise is not None:
            ou_step(noise, rng)
            a = np.clip(a + noise.current * self.action_bound, -self.action_bound, self.action_bound)
        return a

    # -- learning -------------------------------------------------------------

    def update_critic(self, states, actions, targets) -> float:
        n = len(states)
        if n == 0:
            raise AgentError("empty batch")
        x = self.critic_input(states, actions)
        q, cache = self.critic.forward(x, return_cache=True)
        err = q[:, 0] - np.asarray(targets, dtype=float)
        loss = float(np.mean(err ** 2))
        tape = self.critic.backward(x, (2.0 / n) * err[:, None], cache=cache)
        self.critic.apply_gradients(tape.clipped(self.hyper.grad_clip), self.hyper.lr_critic)
        return loss

    def update_actor(self, states) -> float:
        """Ascend mean Q(s, pi(s)); critic parameters are left untouched."""
        n = len(states)
        if n == 0:
            raise AgentError("empty batch")
        z, a_cache = self.actor.forward(states, return_cache=True)
        actions = self._bounded(z)
        x = self.critic_input(states, actions)
        q, c_cache = self.critic.forward(x, return_cache=True)
        objective = float(np.mean(q))
        c_tape = self.critic.backward(x, np.full((n, 1), 1.0 / n), cache=c_cache)
        dq_da = c_tape.inputs[:, self.state_dim:] / self.action_bound
        dq_dz = dq_da * (1.0 - np.tanh(z / self.action_bound) ** 2)
        a_tape = self.actor.backward(states, -dq_dz, cache=a_cache)
        self.actor.apply_gradients(a_tape.clipped(self.hyper.grad_clip), self.hyper.lr_actor)
        return objective

    def learn(self, batch) -> tuple[float, float]:
        s, a, r, s2, term = batch
        r = transform_reward(r, self.hyper.reward_scale, self.hyper.reward_transform)
        q_next = self.q_value(s2, self.target_act(s2), target=True)
        y = critic_target(r, q_next, self.hyper.gamma, term)
        critic_loss = self.update_critic(s, a, y)
        objective = self.update_actor(s)
        soft_update(self.critic_target, self.critic, self.hyper.tau)
        soft_update(self.actor_target, self.actor, self.hyper.tau)
        return critic_loss, objective

    # -- persistence ---------------------------------------------------------

    def to_dict(self, metadata: dict | None = None) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "metadata": {
                "hyper": {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(self.hyper).items()},
                "seed": self.seed,
                "episodes": self.episodes_trained,
                "state_dim": self.state_dim,
                "action_dim": self.action_dim,
                "action_bound": self.action_bound,
                **(metadata or {}),
            },
            "actor": self.actor.to_dict(),
            "critic": self.critic.to_dict(),
            "actor_target": self.actor_target.to_dict(),
            "critic_target": self.critic_target.to_dict(),
        }

    def save(self, path, metadata: dict | None = None):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(metadata)))
        os.replace(tmp, path)

    @classmethod
    def from_dict(cls, d: dict) -> "DdpgAgent":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError("not an agent checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"checkpoint version {d.get('version')!r} != supported {CHECKPOINT_VERSION}")
        meta = d["metadata"]
        hyper_fields = dict(meta["hyper"])
        hyper_fields["hidden"] = tuple(hyper_fields["hidden"])
        agent = cls.__new__(cls)
        agent.state_dim = int(meta["state_dim"])
        agent.action_dim = int(meta["action_dim"])
        agent.hyper = DdpgHyper(**hyper_fields)
        agent.seed = meta["seed"]
        agent.action_bound = float(meta["action_bound"])
        agent.episodes_trained = int(meta["episodes"])
        agent.actor = DenseNetwork.from_dict(d["actor"])
        agent.critic = DenseNetwork.from_dict(d["critic"])
        agent.actor_target = DenseNetwork.from_dict(d["actor_target"])
        agent.critic_target = DenseNetwork.from_dict(d["critic_target"])
        if agent.actor.n_inputs != agent.state_dim or agent.actor.n_outputs != agent.action_dim:
            raise CheckpointError("actor shape does not match checkpoint metadata")
        return agent

    @classmethod
    def load(cls, path) -> "DdpgAgent":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
        try:
            return cls.from_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, CheckpointError):
                raise
            raise CheckpointError(f"malformed checkpoint {path}: {exc}") from None


@dataclass
class EpisodeMetrics:
    episode: int
    warmup: bool
    mean_reward: float
    mean_energy_J: float
    mean_delay_s: float
    mean_penalty: float
    violation_rate: float
    mean_selected: float
    critic_loss: float = math.nan
    actor_objective: float = math.nan


@dataclass
class TrainResult:
    agent: DdpgAgent
    metrics: list = field(default_factory=list)
    buffer: ReplayBuffer | None = None


def random_raw_action(action_dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(action_dim)


def train(config: SystemConfig, seed: int | None = None, phase: str | None = None,
          episodes: int | None = None, warmup_episodes: int | None = None,
          progress=None) -> TrainResult:
    """Warm up the buffer with random actions, then learn once per environment step.

    Deterministic for a fixed (config, seed).
    """
    hyper = config.ddpg
    seed = config.seed if seed is None else seed
    phase = phase or config.phase
    episodes = hyper.train_episodes if episodes is None else episodes
    warmup = hyper.warmup_episodes if warmup_episodes is None else warmup_episodes
    env = SemComEnv(config)
    agent = DdpgAgent(env.state_dim, env.action_dim, hyper, seed=seed)
    rng = make_rng([seed, 2])
    buffer = ReplayBuffer(hyper.buffer_capacity, env.state_dim, env.action_dim)
    noise = OuNoiseState.zeros(env.action_dim, hyper.ou_theta, hyper.ou_sigma, hyper.ou_decay)
    result = TrainResult(agent, [], buffer)
    T = hyper.steps_per_episode
    for ep in range(warmup + episodes):
        is_warmup = ep < warmup
        env.reset(seed=[seed, 3, ep])
        obs = env.observe()
        stats = np.zeros(6)
        losses, objectives = [], []
        for t in range(T):
            if is_warmup:
                raw = random_raw_action(env.action_dim, rng)
            else:
                raw = agent.select_action(obs, noise, explore=True, rng=rng)
            out = env.step(raw, phase)
            obs2 = env.observe(out.next_state)
            terminal = t == T - 1
            buffer.add(Transition(obs, raw, out.reward, obs2, terminal))
            stats += (out.reward, out.energy_J, out.time_s, out.penalty,
                      float(out.constraint_violated), float(out.action.selected.sum()))
            if not is_warmup and len(buffer) >= hyper.batch:
                loss, objective = agent.learn(buffer.sample(hyper.batch, rng))
                losses.append(loss)
                objectives.append(objective)
            obs = obs2
        if not is_warmup:
            noise.end_episode()
            agent.episodes_trained += 1
        stats /= T
        m = EpisodeMetrics(ep, is_warmup, *stats.tolist(),
                           critic_loss=float(np.mean(losses)) if losses else math.nan,
                           actor_objective=float(np.mean(objectives)) if objectives else math.nan)
        result.metrics.append(m)
        if progress is not None:
            progress(m)
    return result
