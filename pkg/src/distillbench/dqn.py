"""Baseline DQN: replay buffer, target network, epsilon-greedy exploration.

Everything is seeded and single-threaded, so a (seed, config) pair pins the
trained weights bit for bit.  Timeout truncations are not marked terminal in
the replay buffer (the TD target still bootstraps through them), and the
trainer periodically evaluates the greedy policy, keeping the best snapshot;
both choices matter for reaching the reward bands on MountainCar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import rollout
from .nn import Adam, Mlp


@dataclass
class DqnConfig:
    hidden_sizes: tuple[int, ...] = (24, 48)
    gamma: float = 0.99
    episodes: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay: float = 0.995          # multiplicative, applied per episode
    batch_size: int = 32
    target_sync: int = 500            # gradient steps between target refreshes
    learning_rate: float = 1e-3
    replay_capacity: int = 50_000
    warmup: int = 1_000               # transitions stored before updates start
    eval_every: int = 25              # episodes between greedy evaluations
    eval_episodes: int = 10
    keep_best: bool = True
    target_reward: float | None = None  # early stop once an evaluation reaches this


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity)
        self._head = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, state, action, reward, next_state, terminal) -> None:
        i = self._head
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = float(terminal)
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if batch_size > self._size:
            raise ValueError(f"cannot sample {batch_size} of {self._size} transitions")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.terminals[idx],
        )


@dataclass
class QPolicy:
    """Frozen greedy policy over a Q network, with fixed input scaling."""

    net: Mlp
    input_shift: np.ndarray
    input_scale: np.ndarray
    label: str = "expert"
    kind: str = "mlp"

    @property
    def param_count(self) -> int:
        return self.net.param_count

    def q_values(self, states: np.ndarray) -> np.ndarray:
        scaled = (np.asarray(states, dtype=float) - self.input_shift) / self.input_scale
        return self.net.forward(scaled)

    def act(self, state: np.ndarray) -> int:
        return int(np.argmax(self.q_values(state)))

    def predict_batch(self, states: np.ndarray) -> np.ndarray:
        return np.argmax(self.q_values(np.atleast_2d(states)), axis=1).astype(int)


@dataclass
class TrainingLog:
    episode_rewards: list[float] = field(default_factory=list)
    episode_epsilons: list[float] = field(default_factory=list)
    evaluations: list[tuple[int, float]] = field(default_factory=list)  # (episode, mean reward)
    best_eval: float = -np.inf
    gradient_steps: int = 0


def _greedy_eval(env, policy: QPolicy, seed, episodes: int) -> float:
    total = 0.0
    for j in range(episodes):
        start = env.reset((seed, 1_000_000 + j))
        total += rollout(env, policy, start).total_reward
    return total / episodes


def train_dqn(env, config: DqnConfig, seed: int) -> tuple[QPolicy, TrainingLog]:
    """Train a Q network on ``env``; returns the frozen policy and a log."""
    spec = env.spec
    layer_sizes = (spec.state_dim, *config.hidden_sizes, spec.action_count)
    init_rng = np.random.default_rng((seed, 0))
    explore_rng = np.random.default_rng((seed, 1))
    sample_rng = np.random.default_rng((seed, 2))

    online = Mlp.init(layer_sizes, init_rng)
    target = online.copy()
    shift = (spec.state_lower + spec.state_upper) / 2.0
    scale = (spec.state_upper - spec.state_lower) / 2.0
    policy = QPolicy(online, shift, scale)

    buffer = ReplayBuffer(config.replay_capacity, spec.state_dim)
    opt = Adam(lr=config.learning_rate)
    log = TrainingLog()
    best_net = None
    eps = config.eps_start

    for episode in range(config.episodes):
        state = env.reset((seed, episode))
        ep_reward = 0.0
        for _ in range(spec.max_steps):
            if explore_rng.uniform() < eps:
                action = int(explore_rng.integers(spec.action_count))
            else:
                action = policy.act(state)
            result = env.step(state, action)
            # result.done is only true at real terminals; the step-cap
            # truncation below stays bootstrappable on purpose.
            buffer.push(state, action, result.reward, result.state, result.done)
            ep_reward += result.reward
            state = result.state

            if len(buffer) >= max(config.warmup, config.batch_size):
                s, a, r, s2, term = buffer.sample(config.batch_size, sample_rng)
                scaled_s = (s - shift) / scale
                scaled_s2 = (s2 - shift) / scale
                q_next = target.forward(scaled_s2).max(axis=1)
                targets = r + config.gamma * q_next * (1.0 - term)
                q = online.forward(scaled_s)
                picked = q[np.arange(config.batch_size), a]
                loss = float(np.mean((picked - targets) ** 2))
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"DQN diverged at episode {episode}, step {log.gradient_steps}: loss={loss}"
                    )
                grad_q = np.zeros_like(q)
                grad_q[np.arange(config.batch_size), a] = 2.0 * (picked - targets) / config.batch_size
                opt.step(online.params(), online.backward(scaled_s, grad_q))
                log.gradient_steps += 1
                if log.gradient_steps % config.target_sync == 0:
                    target.load_from(online)

            if result.done:
                break

        log.episode_rewards.append(ep_reward)
        log.episode_epsilons.append(eps)
        eps = max(config.eps_end, eps * config.eps_decay)

        last_episode = episode == config.episodes - 1
        if (episode + 1) % config.eval_every == 0 or last_episode:
            mean_reward = _greedy_eval(env, policy, seed, config.eval_episodes)
            log.evaluations.append((episode, mean_reward))
            if mean_reward > log.best_eval:
                log.best_eval = mean_reward
                if config.keep_best:
                    best_net = online.copy()
            if config.target_reward is not None and mean_reward >= config.target_reward:
                break

    final_net = best_net if (config.keep_best and best_net is not None) else online
    return QPolicy(final_net, shift, scale), log
