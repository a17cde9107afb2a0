"""Classic-control environments with pure, stateless dynamics.

Both tasks expose the same tiny interface: a static ``spec`` describing the
state box and action set, a seeded ``reset`` that draws a start state, and a
pure ``step(state, action)`` that returns a :class:`StepResult`.  Episode
bookkeeping (step caps, traces) lives in :func:`rollout`, so the dynamics
themselves stay referentially transparent and trivially reproducible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class DoneReason(enum.Enum):
    RUNNING = "running"
    GOAL = "goal"
    FAILURE = "failure"
    TIME_LIMIT = "time_limit"


class RewardScheme(enum.Enum):
    STEP_PENALTY = "step_penalty"  # -1 per step, episodes end at a goal
    STEP_BONUS = "step_bonus"      # +1 per step, episodes end at a failure


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_count: int
    state_lower: np.ndarray
    state_upper: np.ndarray
    max_steps: int
    reward_scheme: RewardScheme


@dataclass(frozen=True)
class StepResult:
    state: np.ndarray
    reward: float
    done: bool
    reason: DoneReason


@dataclass
class EpisodeTrace:
    states: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    reason: DoneReason = DoneReason.RUNNING

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    def discounted_return(self, gamma: float) -> float:
        total = 0.0
        for t, r in enumerate(self.rewards):
            total += (gamma ** t) * r
        return total


class MountainCar:
    """Underpowered car in a valley; reach the right hilltop at p >= 0.5.

    State is (position, velocity).  Actions 0/1/2 push left/idle/right.
    Every step costs -1; reaching the goal ends the episode.
    """

    FORCE = 0.001
    GRAVITY = 0.0025
    MIN_POSITION = -1.2
    MAX_POSITION = 0.6
    MAX_SPEED = 0.07
    GOAL_POSITION = 0.5

    spec = EnvSpec(
        name="mountaincar",
        state_dim=2,
        action_count=3,
        state_lower=np.array([-1.2, -0.07]),
        state_upper=np.array([0.6, 0.07]),
        max_steps=200,
        reward_scheme=RewardScheme.STEP_PENALTY,
    )

    def reset(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return np.array([rng.uniform(-0.6, -0.4), 0.0])

    def step(self, state: np.ndarray, action: int) -> StepResult:
        if action not in (0, 1, 2):
            raise ValueError(f"mountaincar action must be 0, 1 or 2, got {action!r}")
        position, velocity = float(state[0]), float(state[1])

        velocity += (action - 1) * self.FORCE - self.GRAVITY * math.cos(3 * position)
        velocity = min(max(velocity, -self.MAX_SPEED), self.MAX_SPEED)
        position += velocity
        position = min(max(position, self.MIN_POSITION), self.MAX_POSITION)
        if position == self.MIN_POSITION:
            # Inelastic collision with the left wall.
            velocity = 0.0

        done = position >= self.GOAL_POSITION
        reason = DoneReason.GOAL if done else DoneReason.RUNNING
        return StepResult(np.array([position, velocity]), -1.0, done, reason)


class CartPole:
    """Pole balancing on a cart, Euler-integrated at 0.02 s per step.

    State is (x, x_dot, theta, theta_dot) with theta in radians.  Actions 0/1
    push left/right with a fixed 10 N force.  Every surviving step earns +1;
    the episode fails when |theta| > 12 degrees or |x| > 2.4.
    """

    GRAVITY = 9.8
    MASS_CART = 1.0
    MASS_POLE = 0.1
    TOTAL_MASS = MASS_CART + MASS_POLE
    HALF_LENGTH = 0.5
    POLE_MASS_LENGTH = MASS_POLE * HALF_LENGTH
    FORCE_MAG = 10.0
    TAU = 0.02
    X_THRESHOLD = 2.4
    THETA_THRESHOLD = 12 * 2 * math.pi / 360

    spec = EnvSpec(
        name="cartpole",
        state_dim=4,
        action_count=2,
        state_lower=np.array([-4.8, -10.0, -2 * THETA_THRESHOLD, -10.0]),
        state_upper=np.array([4.8, 10.0, 2 * THETA_THRESHOLD, 10.0]),
        max_steps=200,
        reward_scheme=RewardScheme.STEP_BONUS,
    )

    def reset(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.uniform(-0.05, 0.05, size=4)

    def step(self, state: np.ndarray, action: int) -> StepResult:
        if action not in (0, 1):
            raise ValueError(f"cartpole action must be 0 or 1, got {action!r}")
        x, x_dot, theta, theta_dot = (float(v) for v in state)

        force = self.FORCE_MAG if action == 1 else -self.FORCE_MAG
        cos_t = math.cos(theta)
        sin_t = math.sin(theta)
        temp = (force + self.POLE_MASS_LENGTH * theta_dot**2 * sin_t) / self.TOTAL_MASS
        theta_acc = (self.GRAVITY * sin_t - cos_t * temp) / (
            self.HALF_LENGTH * (4.0 / 3.0 - self.MASS_POLE * cos_t**2 / self.TOTAL_MASS)
        )
        x_acc = temp - self.POLE_MASS_LENGTH * theta_acc * cos_t / self.TOTAL_MASS

        x += self.TAU * x_dot
        x_dot += self.TAU * x_acc
        theta += self.TAU * theta_dot
        theta_dot += self.TAU * theta_acc

        failed = abs(x) > self.X_THRESHOLD or abs(theta) > self.THETA_THRESHOLD
        reason = DoneReason.FAILURE if failed else DoneReason.RUNNING
        return StepResult(np.array([x, x_dot, theta, theta_dot]), 1.0, failed, reason)


_ENVS = {"mountaincar": MountainCar, "cartpole": CartPole}


def make_env(name: str):
    try:
        return _ENVS[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(_ENVS)}") from None


def rollout(env, controller, start_state: np.ndarray, step_cap: int | None = None) -> EpisodeTrace:
    """Run ``controller`` from ``start_state`` until termination or ``step_cap``.

    ``controller`` is either a callable ``state -> action`` or an object with
    an ``act`` method.  A trace that exhausts the cap without terminating is
    marked ``TIME_LIMIT``.
    """
    act = controller.act if hasattr(controller, "act") else controller
    cap = env.spec.max_steps if step_cap is None else step_cap
    if cap < 1:
        raise ValueError(f"step_cap must be >= 1, got {cap}")

    trace = EpisodeTrace()
    state = np.asarray(start_state, dtype=float)
    trace.states.append(state)
    for _ in range(cap):
        action = int(act(state))
        result = env.step(state, action)
        trace.actions.append(action)
        trace.rewards.append(result.reward)
        trace.states.append(result.state)
        state = result.state
        if result.done:
            trace.reason = result.reason
            return trace
    trace.reason = DoneReason.TIME_LIMIT
    return trace


def grid_states(
    spec: EnvSpec,
    steps_per_dim: int,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
) -> np.ndarray:
    """Evenly spaced state grid over the spec's box, endpoints included.

    Rows come out in lexicographic order (first dimension slowest) and there
    are exactly ``steps_per_dim ** state_dim`` of them.  ``lower``/``upper``
    override the spec bounds, e.g. to restrict velocities for evaluation.
    """
    if steps_per_dim < 2:
        raise ValueError(f"steps_per_dim must be >= 2, got {steps_per_dim}")
    lo = spec.state_lower if lower is None else np.asarray(lower, dtype=float)
    hi = spec.state_upper if upper is None else np.asarray(upper, dtype=float)
    if lo.shape != (spec.state_dim,) or hi.shape != (spec.state_dim,):
        raise ValueError("grid bounds must match the spec's state dimension")
    if not np.all(lo < hi):
        raise ValueError("grid bounds must satisfy lower < upper elementwise")

    axes = [np.linspace(lo[d], hi[d], steps_per_dim) for d in range(spec.state_dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
