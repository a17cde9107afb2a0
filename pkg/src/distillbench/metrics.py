"""Fidelity and performance metrics for distilled controllers.

Three views of a student, all computed against the same frozen expert:

* **Empirical value function (EVF).**  Roll the controller out once from
  every state of a grid over the state box and record the discounted
  return.  One rollout per seed state suffices because both environments
  are deterministic after reset.
* **NRMSE.**  Root mean square difference between two EVF tables,
  normalized by the student table's maximum absolute value, so experts
  with different reward scales stay comparable.
* **Policy accuracy.**  Percent of grid states where the student picks
  the same action as the expert.

Raw task performance (mean episode reward with a 95% confidence interval
over seeded evaluation episodes) rounds out the picture, and
:func:`evaluate_all` bundles everything into one report row per
controller.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .envs import grid_states, rollout

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalConfig:
    """Knobs for :func:`evaluate_all`.

    Grid densities default to the MountainCar settings (20 steps per
    dimension for value estimation, 100 for action agreement); CartPole
    runs want 5/10 with explicit ``grid_lower``/``grid_upper`` bounds
    since its spec box is far wider than the states any controller sees.
    """

    evf_grid_steps: int = 20
    acc_grid_steps: int = 100
    n_episodes: int = 100
    gamma_eval: float = 1.0
    step_cap: int | None = None
    grid_lower: tuple[float, ...] | None = None
    grid_upper: tuple[float, ...] | None = None
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.evf_grid_steps < 2 or self.acc_grid_steps < 2:
            raise ValueError("grid steps per dimension must be >= 2")
        if self.n_episodes < 2:
            raise ValueError("n_episodes must be >= 2")
        if not 0.0 < self.gamma_eval <= 1.0:
            raise ValueError("gamma_eval must lie in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class EvfTable:
    """Per-seed-state returns of one controller under a fixed discount."""

    seed_states: np.ndarray   # (n, state_dim)
    returns: np.ndarray       # (n,)
    gamma: float
    step_cap: int

    def __post_init__(self) -> None:
        if self.returns.shape != (self.seed_states.shape[0],):
            raise ValueError("one return per seed state required")
        if not np.all(np.isfinite(self.returns)):
            raise ValueError("EVF returns must all be finite")


def estimate_evf(
    env,
    controller,
    seed_states: np.ndarray,
    gamma_eval: float = 1.0,
    step_cap: int | None = None,
    workers: int = 1,
) -> EvfTable:
    """Roll ``controller`` out once from each seed state and tabulate returns.

    ``workers > 1`` farms rollouts out to a thread pool; results land in a
    preallocated slot per seed-state index, so the table is bitwise
    identical to a serial run regardless of completion order.
    """
    states = np.asarray(seed_states, dtype=float)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("seed_states must be a nonempty (n, state_dim) array")
    cap = env.spec.max_steps if step_cap is None else step_cap
    if cap < 1:
        raise ValueError(f"step_cap must be >= 1, got {cap}")

    returns = np.empty(states.shape[0])

    def run(j: int) -> None:
        try:
            trace = rollout(env, controller, states[j], step_cap=cap)
        except Exception as exc:
            raise RuntimeError(f"rollout failed at seed state {j}: {exc}") from exc
        returns[j] = trace.discounted_return(gamma_eval)

    if workers <= 1:
        for j in range(states.shape[0]):
            run(j)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # list() drains the iterator so worker exceptions surface here.
            list(pool.map(run, range(states.shape[0])))
    return EvfTable(seed_states=states, returns=returns, gamma=gamma_eval, step_cap=cap)


def nrmse(expert_evf: EvfTable, student_evf: EvfTable, normalize_by: str = "student") -> float:
    """Normalized RMSE between two EVF tables over identical seed states.

    The denominator is the student table's maximum absolute return by
    default; pass ``normalize_by="expert"`` to anchor the scale to the
    expert instead.
    """
    if normalize_by not in ("student", "expert"):
        raise ValueError(f"normalize_by must be 'student' or 'expert', got {normalize_by!r}")
    if not np.array_equal(expert_evf.seed_states, student_evf.seed_states):
        raise ValueError("EVF tables must share the same seed states in the same order")
    if expert_evf.gamma != student_evf.gamma:
        raise ValueError("EVF tables were estimated under different discounts")
    rmse = math.sqrt(float(np.mean((expert_evf.returns - student_evf.returns) ** 2)))
    table = student_evf if normalize_by == "student" else expert_evf
    denom = float(np.max(np.abs(table.returns)))
    if denom == 0.0:
        raise ValueError("cannot normalize by an all-zero EVF table")
    return rmse / denom


def policy_accuracy(expert, student, grid: np.ndarray) -> float:
    """Percent of grid states where both controllers choose the same action."""
    states = np.asarray(grid, dtype=float)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("grid must be a nonempty (n, state_dim) array")
    agree = _actions_on(expert, states) == _actions_on(student, states)
    return 100.0 * float(np.mean(agree))


def _actions_on(controller, states: np.ndarray) -> np.ndarray:
    batch = getattr(controller, "predict_batch", None)
    if batch is not None:
        return np.asarray(batch(states), dtype=int)
    act = controller.act if hasattr(controller, "act") else controller
    return np.array([int(act(s)) for s in states], dtype=int)


def performance_ci(
    env,
    controller,
    n_episodes: int,
    base_seed: int = 0,
    step_cap: int | None = None,
) -> tuple[float, float]:
    """Mean episode reward and 95% CI half-width over seeded evaluations.

    Episode ``j`` resets with seed ``(base_seed, j)``, so every controller
    evaluated under the same ``base_seed`` faces the same start states.
    """
    if n_episodes < 2:
        raise ValueError(f"n_episodes must be >= 2, got {n_episodes}")
    totals = np.empty(n_episodes)
    for j in range(n_episodes):
        start = env.reset((base_seed, j))
        totals[j] = rollout(env, controller, start, step_cap=step_cap).total_reward
    half_width = 1.96 * float(np.std(totals, ddof=1)) / math.sqrt(n_episodes)
    return float(np.mean(totals)), half_width


@dataclass(frozen=True)
class MetricsReport:
    """One evaluated controller, ready for a report row."""

    label: str
    kind: str
    depth: int | None
    mean_reward: float
    ci95_half_width: float
    nrmse: float
    acc_pct: float
    param_count: int
    n_eval_episodes: int
    seed: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.acc_pct <= 100.0:
            raise ValueError("acc_pct must lie in [0, 100]")
        if self.ci95_half_width < 0.0:
            raise ValueError("ci95_half_width must be nonnegative")


def evaluate_all(env, expert, students, config: EvalConfig | None = None) -> list[MetricsReport]:
    """Evaluate the expert and every student under one shared configuration.

    The expert's fidelity metrics are self-comparisons (NRMSE 0, accuracy
    100 by determinism) but are computed rather than assumed.  A student
    whose evaluation raises is logged and skipped; the rest proceed.
    """
    cfg = config or EvalConfig()
    lower = None if cfg.grid_lower is None else np.asarray(cfg.grid_lower, dtype=float)
    upper = None if cfg.grid_upper is None else np.asarray(cfg.grid_upper, dtype=float)
    evf_grid = grid_states(env.spec, cfg.evf_grid_steps, lower=lower, upper=upper)
    acc_grid = grid_states(env.spec, cfg.acc_grid_steps, lower=lower, upper=upper)

    expert_evf = estimate_evf(
        env, expert, evf_grid, gamma_eval=cfg.gamma_eval, step_cap=cfg.step_cap, workers=cfg.workers
    )

    reports: list[MetricsReport] = []
    for controller in [expert, *students]:
        try:
            reports.append(
                _evaluate_one(env, expert, expert_evf, controller, acc_grid, cfg)
            )
        except Exception:
            logger.exception("evaluation failed for controller %r, skipping",
                             getattr(controller, "label", "?"))
    return reports


def _evaluate_one(env, expert, expert_evf, controller, acc_grid, cfg: EvalConfig) -> MetricsReport:
    if controller is expert:
        student_evf = expert_evf
    else:
        student_evf = estimate_evf(
            env, controller, expert_evf.seed_states,
            gamma_eval=cfg.gamma_eval, step_cap=cfg.step_cap, workers=cfg.workers,
        )
    mean_reward, half_width = performance_ci(
        env, controller, cfg.n_episodes, base_seed=cfg.base_seed, step_cap=cfg.step_cap
    )
    # HDTs report their configured depth cap, SDTs their structural depth.
    depth = getattr(controller, "max_depth", getattr(controller, "depth", None))
    return MetricsReport(
        label=getattr(controller, "label", "controller"),
        kind=getattr(controller, "kind", "unknown"),
        depth=depth,
        mean_reward=mean_reward,
        ci95_half_width=half_width,
        nrmse=nrmse(expert_evf, student_evf),
        acc_pct=policy_accuracy(expert, controller, acc_grid),
        param_count=int(controller.param_count),
        n_eval_episodes=cfg.n_episodes,
        seed=cfg.base_seed,
    )
