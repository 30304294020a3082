import math

import numpy as np
import pytest

from fastslow.policy import (
    Action,
    BoundThresholdPolicy,
    CostSchedule,
    EpisodeError,
    FastOnlyPolicy,
    OraclePolicy,
    RandomPolicy,
    RewardWeights,
    SlowOnlyPolicy,
    decision_threshold,
    policy_fast,
    policy_oracle,
    policy_random,
    policy_slow,
    run_episode,
    select_generic,
    step_cost,
    step_reward,
    summarize,
)

W = RewardWeights(1.0, 0.003)
C = CostSchedule(1.0, 2.5)


def test_step_cost_use_fast():
    assert step_cost(Action.USE_FAST, C) == 1.0


def test_step_cost_invoke_slow_adds_both():
    assert step_cost(Action.INVOKE_SLOW, C) == 3.5


def test_step_cost_zero_fast():
    assert step_cost(Action.INVOKE_SLOW, CostSchedule(0.0, 0.017)) == 0.017


def test_step_reward_zero_loss():
    assert step_reward(Action.USE_FAST, 0.0, W, C) == pytest.approx(-0.003)


def test_step_reward_slow_hand_value():
    # -beta * (c_fast + c_slow) = -0.003 * 3.5
    assert step_reward(Action.INVOKE_SLOW, 0.0, W, C) == pytest.approx(-0.0105)


def test_step_reward_infinite_loss():
    assert step_reward(Action.USE_FAST, math.inf, W, C) == -math.inf


def test_decision_threshold_values():
    assert decision_threshold(W, C) == pytest.approx(0.0075)
    assert decision_threshold(RewardWeights(1.0, 0.0), C) == 0.0
    assert decision_threshold(RewardWeights(1.0, 3e-4), CostSchedule(0.0, 0.017)) == pytest.approx(5.1e-6)


def test_weights_reject_zero_alpha():
    with pytest.raises(ValueError):
        RewardWeights(0.0, 0.1)
    with pytest.raises(ValueError):
        RewardWeights(1.0, -0.1)


def test_costs_warn_when_slow_is_cheaper():
    with pytest.warns(UserWarning):
        CostSchedule(2.0, 1.0)
    with pytest.raises(ValueError):
        CostSchedule(-1.0, 1.0)


def test_select_generic_cases():
    assert select_generic(0.01, 0.0075) == Action.INVOKE_SLOW
    assert select_generic(0.0075, 0.0075) == Action.USE_FAST  # tie keeps the cheap model
    assert select_generic(0.0, 0.0) == Action.USE_FAST


def test_fixed_policies():
    assert policy_fast() == Action.USE_FAST
    assert policy_slow() == Action.INVOKE_SLOW


def test_random_policy_is_fair():
    rng = np.random.default_rng(77)
    n = 100_000
    draws = sum(int(policy_random(rng)) for _ in range(n))
    assert abs(draws / n - 0.5) < 0.01
    # binomial concentration: 4 standard deviations of Binomial(n, 1/2)
    assert abs(draws - n / 2) <= 4 * math.sqrt(n * 0.25)


def test_policy_oracle_cases():
    assert policy_oracle(0.02, 0.0, W, C) == Action.INVOKE_SLOW
    assert policy_oracle(0.0, 0.0, W, C) == Action.USE_FAST
    assert policy_oracle(0.42, 0.42, W, C) == Action.USE_FAST


def test_policy_oracle_exact_tie_keeps_fast():
    w = RewardWeights(1.0, 1.0)
    c = CostSchedule(0.0, 1.0)
    # alpha * (loss_fast - loss_slow) == beta * c_slow exactly
    assert policy_oracle(1.0, 0.0, w, c) == Action.USE_FAST


def test_policy_oracle_infinite_losses():
    assert policy_oracle(math.inf, 0.0, W, C) == Action.INVOKE_SLOW
    assert policy_oracle(math.inf, math.inf, W, C) == Action.USE_FAST
    assert policy_oracle(0.0, math.inf, W, C) == Action.USE_FAST


def test_scale_invariance_of_decisions():
    rng = np.random.default_rng(5)
    for _ in range(300):
        alpha = float(rng.uniform(0.1, 5.0))
        beta = float(rng.uniform(0.0, 2.0))
        c = CostSchedule(float(rng.uniform(0, 1)), float(rng.uniform(1, 4)))
        gain = float(rng.uniform(0.0, 10.0))
        lf, ls = float(rng.uniform(0, 5)), float(rng.uniform(0, 5))
        for k in (2.0, 4.0, 0.5, 3.7, 10.0):
            w1 = RewardWeights(alpha, beta)
            w2 = RewardWeights(k * alpha, k * beta)
            assert select_generic(gain, decision_threshold(w1, c)) == select_generic(
                gain, decision_threshold(w2, c)
            )
            assert policy_oracle(lf, ls, w1, c) == policy_oracle(lf, ls, w2, c)


# --- episode runner ---


def _stream(n, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.uniform(0, 1, size=3) for _ in range(n)]


def _fast(x):
    return 1.05 * x


def _slow(x):
    return x


def _l2(a, b):
    d = a - b
    return float(d @ d)


def test_run_episode_empty_stream():
    records, summary = run_episode([], _fast, _slow, FastOnlyPolicy(), _l2, W, C)
    assert records == []
    assert summary.cumulative_reward == 0.0
    assert summary.n_steps == 0
    assert summary.slow_query_fraction == 0.0


def test_run_episode_slow_policy_has_zero_loss():
    n = 50
    records, summary = run_episode(_stream(n), _fast, _slow, SlowOnlyPolicy(), _l2, W, C)
    assert summary.mean_loss == 0.0
    assert summary.total_cost == pytest.approx(n * 3.5)
    assert summary.slow_query_fraction == 1.0


def test_run_episode_oracle_beats_fast():
    xs = _stream(200, seed=3)
    _, s_fast = run_episode(xs, _fast, _slow, FastOnlyPolicy(), _l2, W, C)
    _, s_oracle = run_episode(xs, _fast, _slow, OraclePolicy(), _l2, W, C)
    assert s_oracle.cumulative_reward >= s_fast.cumulative_reward


def test_oracle_dominates_every_policy_per_step():
    xs = _stream(300, seed=11)
    policies = [
        FastOnlyPolicy(),
        SlowOnlyPolicy(),
        RandomPolicy(99),
        BoundThresholdPolicy(lambda y: 0.05 * float(y @ y)),
        OraclePolicy(),
    ]
    all_records = [run_episode(xs, _fast, _slow, p, _l2, W, C)[0] for p in policies]
    oracle_records = all_records[-1]
    for other in all_records[:-1]:
        for r_o, r_p in zip(oracle_records, other):
            assert r_o.reward >= r_p.reward


def test_reward_decomposition():
    xs = _stream(2000, seed=21)
    records, summary = run_episode(xs, _fast, _slow, RandomPolicy(4), _l2, W, C)
    losses = math.fsum(r.loss_realized for r in records)
    costs = math.fsum(r.cost_incurred for r in records)
    expected = -W.alpha * losses - W.beta * costs
    assert abs(summary.cumulative_reward - expected) <= 1e-9 * max(1.0, abs(expected))


def test_step_record_cost_invariant():
    xs = _stream(100, seed=8)
    records, _ = run_episode(xs, _fast, _slow, RandomPolicy(12), _l2, W, C)
    for r in records:
        expected = 3.5 if r.action == Action.INVOKE_SLOW else 1.0
        assert r.cost_incurred == expected
        assert r.reward == step_reward(r.action, r.loss_realized, W, C)


def test_episode_error_carries_step_index():
    def flaky(x):
        if flaky.count == 3:
            raise RuntimeError("boom")
        flaky.count += 1
        return x

    flaky.count = 0
    with pytest.raises(EpisodeError) as exc_info:
        run_episode(_stream(10), flaky, _slow, FastOnlyPolicy(), _l2, W, C)
    assert exc_info.value.step == 3
    assert exc_info.value.which == "fast"

    def bad_slow(x):
        raise RuntimeError("slow down")

    with pytest.raises(EpisodeError) as exc_info:
        run_episode(_stream(10), _fast, bad_slow, SlowOnlyPolicy(), _l2, W, C)
    assert exc_info.value.step == 0
    assert exc_info.value.which == "slow"


def test_summarize_infinite_rewards():
    xs = _stream(5, seed=1)

    def far(x):
        return x + 100.0

    records, summary = run_episode(
        xs, far, _slow, FastOnlyPolicy(), lambda a, b: math.inf, W, C
    )
    assert summary.cumulative_reward == -math.inf
    assert summary.mean_loss == math.inf
    assert all(r.reward == -math.inf for r in records)


def test_summarize_matches_records():
    xs = _stream(64, seed=9)
    records, summary = run_episode(xs, _fast, _slow, RandomPolicy(1), _l2, W, C)
    again = summarize(records)
    assert again == summary
    n_slow = sum(1 for r in records if r.action == Action.INVOKE_SLOW)
    assert summary.slow_query_fraction == n_slow / len(records)
