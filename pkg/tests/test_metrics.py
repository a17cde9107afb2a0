"""Metric suite tests: frozen hand values, identities, and grid semantics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pytest

from distillbench.envs import (
    DoneReason,
    EnvSpec,
    RewardScheme,
    StepResult,
    grid_states,
    make_env,
)
from distillbench.metrics import (
    EvalConfig,
    EvfTable,
    MetricsReport,
    estimate_evf,
    evaluate_all,
    nrmse,
    performance_ci,
    policy_accuracy,
)


def table(returns, gamma=1.0):
    r = np.asarray(returns, dtype=float)
    states = np.arange(len(r), dtype=float).reshape(-1, 1)
    return EvfTable(seed_states=states, returns=r, gamma=gamma, step_cap=200)


class OneShotEnv:
    """Terminates after a single step with a reward chosen by the reset seed.

    ``reset((base, j))`` stores the episode's payout in the state, and
    ``step`` pays it out and ends the episode, which makes confidence
    intervals exactly computable by hand.
    """

    spec = EnvSpec(
        name="oneshot",
        state_dim=1,
        action_count=2,
        state_lower=np.array([-10.0]),
        state_upper=np.array([10.0]),
        max_steps=200,
        reward_scheme=RewardScheme.STEP_BONUS,
    )

    def __init__(self, payout):
        self.payout = payout  # maps episode index j to the episode reward

    def reset(self, seed) -> np.ndarray:
        base, j = seed
        return np.array([float(self.payout(j))])

    def step(self, state, action) -> StepResult:
        return StepResult(state=state.copy(), reward=float(state[0]), done=True,
                          reason=DoneReason.GOAL)


@dataclass
class StubController:
    action: int
    label: str = "stub"
    kind: str = "stub"
    param_count: int = 1

    def act(self, state) -> int:
        return self.action

    def predict_batch(self, states) -> np.ndarray:
        return np.full(len(states), self.action, dtype=int)


def energy_pump(state) -> int:
    # Push along the velocity sign: the textbook MountainCar solution.
    return 2 if state[1] >= 0.0 else 0


# ---------------------------------------------------------------------------
# nrmse


def test_nrmse_hand_example():
    # Oracle by hand: RMSE = sqrt(((1-3)^2 + (2-2)^2) / 2) = sqrt(2),
    # denominator = max |student| = 3.
    oracle = math.sqrt(((1 - 3) ** 2 + (2 - 2) ** 2) / 2) / 3
    got = nrmse(table([1.0, 2.0]), table([3.0, 2.0]))
    assert got == pytest.approx(oracle, abs=1e-12)
    assert got == pytest.approx(0.471405, abs=1e-6)


def test_nrmse_identity_is_exactly_zero():
    t = table([-200.0, -137.0, -88.5])
    assert nrmse(t, t) == 0.0


def test_nrmse_scale_invariance():
    rng = np.random.default_rng(3)
    e = rng.normal(size=40)
    s = rng.normal(size=40)
    base = nrmse(table(e), table(s))
    scaled = nrmse(table(3.7 * e), table(3.7 * s))
    assert scaled == pytest.approx(base, abs=1e-12)


def test_nrmse_expert_normalization_option():
    oracle = math.sqrt(2.0) / 2.0  # same RMSE, denominator max |expert| = 2
    got = nrmse(table([1.0, 2.0]), table([3.0, 2.0]), normalize_by="expert")
    assert got == pytest.approx(oracle, abs=1e-12)
    with pytest.raises(ValueError, match="normalize_by"):
        nrmse(table([1.0]), table([1.0]), normalize_by="both")


def test_nrmse_rejects_degenerate_and_mismatched_tables():
    with pytest.raises(ValueError, match="all-zero"):
        nrmse(table([1.0, 2.0]), table([0.0, 0.0]))
    a = EvfTable(np.array([[0.0], [1.0]]), np.array([1.0, 2.0]), 1.0, 200)
    b = EvfTable(np.array([[0.0], [2.0]]), np.array([1.0, 2.0]), 1.0, 200)
    with pytest.raises(ValueError, match="seed states"):
        nrmse(a, b)
    with pytest.raises(ValueError, match="discount"):
        nrmse(table([1.0], gamma=1.0), table([1.0], gamma=0.99))


def test_evf_table_invariants():
    with pytest.raises(ValueError, match="one return per seed state"):
        EvfTable(np.zeros((3, 1)), np.zeros(2), 1.0, 200)
    with pytest.raises(ValueError, match="finite"):
        EvfTable(np.zeros((1, 1)), np.array([np.inf]), 1.0, 200)


# ---------------------------------------------------------------------------
# policy accuracy


def test_accuracy_self_agreement_is_100():
    env = make_env("mountaincar")
    grid = grid_states(env.spec, 10)
    c = StubController(action=1)
    assert policy_accuracy(c, c, grid) == 100.0


def test_accuracy_counts_agreements():
    grid = np.zeros((4, 1))
    a = StubController(action=0)

    class ThreeOfFour:
        def predict_batch(self, states):
            return np.array([0, 0, 0, 1])

    assert policy_accuracy(a, ThreeOfFour(), grid) == 75.0


def test_accuracy_is_symmetric_and_accepts_plain_callables():
    env = make_env("mountaincar")
    grid = grid_states(env.spec, 15)
    left = lambda s: 0 if s[0] < -0.3 else 2  # noqa: E731
    assert policy_accuracy(left, energy_pump, grid) == pytest.approx(
        policy_accuracy(energy_pump, left, grid), abs=0.0
    )


def test_accuracy_rejects_empty_grid():
    with pytest.raises(ValueError, match="nonempty"):
        policy_accuracy(StubController(0), StubController(0), np.zeros((0, 2)))


# ---------------------------------------------------------------------------
# estimate_evf


def test_single_step_episode_returns_its_reward():
    env = OneShotEnv(payout=lambda j: 3.25)
    t = estimate_evf(env, StubController(0), np.array([[3.25]]))
    assert t.returns.tolist() == [3.25]


def test_discounted_return_matches_geometric_series():
    # Do-nothing from the rest start runs the full 200 steps at -1 each;
    # oracle is the closed-form geometric sum.
    oracle = -(1.0 - 0.99**200) / (1.0 - 0.99)
    env = make_env("mountaincar")
    t = estimate_evf(env, StubController(1), np.array([[-0.5, 0.0]]), gamma_eval=0.99)
    assert t.returns[0] == pytest.approx(oracle, abs=1e-9)
    assert t.returns[0] == pytest.approx(-86.60203, abs=1e-5)


def test_do_nothing_grid_returns():
    # Time-limit episodes pay exactly -200; grid states with enough kinetic
    # energy coast over the goal hill with no motor input and finish early,
    # so their returns sit strictly above -200.
    env = make_env("mountaincar")
    grid = grid_states(env.spec, 20)
    t = estimate_evf(env, StubController(1), grid)
    assert np.all((t.returns == -200.0) | (t.returns > -200.0))
    assert np.all(t.returns <= -1.0)
    early = t.returns > -200.0
    assert np.any(early) and not np.all(early)
    for r in t.returns[early]:
        assert r == float(int(r))  # -1 per step means integer returns
    rest = estimate_evf(env, StubController(1), np.array([[-0.5, 0.0]]))
    assert rest.returns[0] == -200.0


def test_parallel_evf_is_bitwise_identical_to_serial():
    env = make_env("mountaincar")
    grid = grid_states(env.spec, 10)
    serial = estimate_evf(env, energy_pump, grid, workers=1)
    threaded = estimate_evf(env, energy_pump, grid, workers=4)
    assert np.array_equal(serial.returns, threaded.returns)


def test_estimate_evf_validation_and_failure_reporting():
    env = make_env("mountaincar")
    with pytest.raises(ValueError, match="nonempty"):
        estimate_evf(env, StubController(1), np.zeros((0, 2)))
    with pytest.raises(ValueError, match="step_cap"):
        estimate_evf(env, StubController(1), np.array([[-0.5, 0.0]]), step_cap=0)

    def broken(state):
        if state[0] > 0.0:
            raise ValueError("boom")
        return 1

    states = np.array([[-0.5, 0.0], [0.55, 0.0]])
    with pytest.raises(RuntimeError, match="seed state 1"):
        estimate_evf(env, broken, states)


# ---------------------------------------------------------------------------
# performance_ci


def test_ci_hand_example():
    # Totals {1, 2, 3}: mean 2, sample std 1, half-width 1.96 / sqrt(3).
    env = OneShotEnv(payout=lambda j: j + 1)
    mean, half = performance_ci(env, StubController(0), n_episodes=3)
    assert mean == 2.0
    assert half == pytest.approx(1.96 / math.sqrt(3), abs=1e-12)
    assert half == pytest.approx(1.131607, abs=1e-6)


def test_ci_constant_rewards_have_zero_width():
    env = OneShotEnv(payout=lambda j: 200.0)
    mean, half = performance_ci(env, StubController(0), n_episodes=100)
    assert (mean, half) == (200.0, 0.0)


def test_ci_half_width_shrinks_like_inverse_sqrt_n():
    def payout(j):
        return float(np.random.default_rng((999, j)).normal())

    env = OneShotEnv(payout=payout)
    halves = [performance_ci(env, StubController(0), n)[1] for n in (25, 100, 400)]
    assert halves[0] > halves[1] > halves[2]
    assert 2.0 < halves[0] / halves[2] < 8.0  # expected factor 4


def test_ci_requires_two_episodes():
    env = OneShotEnv(payout=lambda j: 1.0)
    with pytest.raises(ValueError, match="n_episodes"):
        performance_ci(env, StubController(0), n_episodes=1)


def test_ci_uses_shared_seeded_starts():
    env = make_env("mountaincar")
    m1, h1 = performance_ci(env, energy_pump, n_episodes=5, base_seed=7)
    m2, h2 = performance_ci(env, energy_pump, n_episodes=5, base_seed=7)
    assert (m1, h1) == (m2, h2)
    m3, _ = performance_ci(env, energy_pump, n_episodes=5, base_seed=8)
    assert m3 != m1  # different start states, different totals


# ---------------------------------------------------------------------------
# evaluate_all


def mc_eval_config(**overrides):
    defaults = dict(evf_grid_steps=5, acc_grid_steps=8, n_episodes=4, base_seed=11)
    defaults.update(overrides)
    return EvalConfig(**defaults)


def test_evaluate_all_expert_row_identities():
    env = make_env("mountaincar")

    @dataclass
    class Expert(StubController):
        label: str = "expert"
        kind: str = "mlp"

        def act(self, state):
            return energy_pump(state)

        def predict_batch(self, states):
            return np.array([energy_pump(s) for s in states], dtype=int)

    expert = Expert(action=-1)
    student = StubController(action=1, label="idle", kind="hdt")
    reports = evaluate_all(env, expert, [student], mc_eval_config())
    assert [r.label for r in reports] == ["expert", "idle"]
    assert reports[0].nrmse == 0.0
    assert reports[0].acc_pct == 100.0
    assert reports[0].kind == "mlp"
    assert all(r.seed == 11 and r.n_eval_episodes == 4 for r in reports)
    assert reports[1].nrmse > 0.0


def test_evaluate_all_reports_depths_from_models():
    from distillbench.hard_tree import train_hard_tree
    from distillbench.soft_tree import train_soft_tree

    env = make_env("mountaincar")
    rng = np.random.default_rng(0)
    states = rng.uniform([-1.2, -0.07], [0.6, 0.07], size=(120, 2))
    labels = np.array([energy_pump(s) for s in states])
    hdt = train_hard_tree(states, labels, max_depth=3, n_classes=3)
    sdt, _ = train_soft_tree(states, labels, depth=2, n_classes=3, seed=0)
    reports = evaluate_all(env, StubController(2, label="e"), [hdt, sdt], mc_eval_config())
    by_kind = {r.kind: r for r in reports}
    assert by_kind["hdt"].depth == 3
    assert by_kind["sdt"].depth == 2
    assert by_kind["stub"].depth is None
    assert by_kind["hdt"].param_count == hdt.param_count


def test_evaluate_all_skips_failing_students(caplog):
    env = make_env("mountaincar")

    class Broken:
        label = "broken"
        kind = "hdt"
        param_count = 0

        def act(self, state):
            raise RuntimeError("dead model")

    good = StubController(action=1, label="ok")
    with caplog.at_level("ERROR"):
        reports = evaluate_all(env, StubController(2, label="e"), [Broken(), good],
                               mc_eval_config())
    assert [r.label for r in reports] == ["e", "ok"]
    assert any("broken" in rec.message for rec in caplog.records)


def test_eval_config_validation():
    with pytest.raises(ValueError, match="grid steps"):
        EvalConfig(evf_grid_steps=1)
    with pytest.raises(ValueError, match="n_episodes"):
        EvalConfig(n_episodes=1)
    with pytest.raises(ValueError, match="gamma_eval"):
        EvalConfig(gamma_eval=0.0)
    with pytest.raises(ValueError, match="workers"):
        EvalConfig(workers=0)


def test_metrics_report_invariants():
    base = dict(label="x", kind="hdt", depth=2, mean_reward=-150.0,
                ci95_half_width=1.0, nrmse=0.1, acc_pct=90.0, param_count=6,
                n_eval_episodes=100, seed=0)
    MetricsReport(**base)
    with pytest.raises(ValueError, match="acc_pct"):
        MetricsReport(**{**base, "acc_pct": 101.0})
    with pytest.raises(ValueError, match="ci95"):
        MetricsReport(**{**base, "ci95_half_width": -0.5})
