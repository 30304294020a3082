"""Reward accounting, the optimal threshold rule, benchmark policies, and the
episode runner shared by every scenario.

The decision problem: at each step a fast model output is already in hand and
the question is whether paying for the slow model is worth the accuracy gain.
Offloading is worth it exactly when the expected gain exceeds the threshold
(beta / alpha) * c_slow.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Callable, Iterable

import numpy as np

INFINITE_LOSS = math.inf

LossFn = Callable[[Any, Any], float]


class Action(IntEnum):
    USE_FAST = 0
    INVOKE_SLOW = 1


@dataclass(frozen=True)
class RewardWeights:
    """Emphasis on accuracy (alpha) vs compute cost (beta)."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0 so the decision threshold is finite, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class CostSchedule:
    """Per-invocation costs of the two models, in caller-chosen units."""

    c_fast: float
    c_slow: float

    def __post_init__(self) -> None:
        if self.c_fast < 0 or self.c_slow < 0:
            raise ValueError("costs must be non-negative")
        if not self.c_slow > self.c_fast:
            warnings.warn(
                "c_slow <= c_fast: the slow model is not the expensive one, "
                "the cost/accuracy trade-off is degenerate",
                stacklevel=2,
            )


@dataclass
class StepRecord:
    """Per-step decision log entry."""

    t: int
    action: Action
    loss_realized: float
    cost_incurred: float
    reward: float
    bound_used: float


@dataclass(frozen=True)
class EpisodeSummary:
    cumulative_reward: float
    total_cost: float
    mean_loss: float
    slow_query_fraction: float
    n_steps: int


class EpisodeError(RuntimeError):
    """A model evaluation failed; carries the step index."""

    def __init__(self, step: int, which: str):
        super().__init__(f"{which} model evaluation failed at step {step}")
        self.step = step
        self.which = which


def step_cost(action: Action, costs: CostSchedule) -> float:
    """The fast model always runs, so its cost is always paid; offloading
    adds c_slow on top."""
    if action == Action.INVOKE_SLOW:
        return costs.c_fast + costs.c_slow
    return costs.c_fast


def step_reward(action: Action, loss: float, weights: RewardWeights, costs: CostSchedule) -> float:
    """-alpha * loss - beta * cost(action); an infinite loss yields -inf."""
    return -weights.alpha * loss - weights.beta * step_cost(action, costs)


def decision_threshold(weights: RewardWeights, costs: CostSchedule) -> float:
    """(beta / alpha) * c_slow: the accuracy gain needed to justify offloading."""
    if weights.alpha <= 0:
        raise ValueError("alpha must be positive")
    return (weights.beta / weights.alpha) * costs.c_slow


def select_generic(expected_gain: float, threshold: float) -> Action:
    """Offload iff the estimated gain strictly exceeds the threshold.

    Ties keep the cheap model: equality means the gain exactly pays for the
    extra compute, so there is nothing to win by offloading.
    """
    return Action.INVOKE_SLOW if threshold < expected_gain else Action.USE_FAST


def policy_fast() -> Action:
    return Action.USE_FAST


def policy_slow() -> Action:
    return Action.INVOKE_SLOW


def policy_random(rng: np.random.Generator) -> Action:
    """Fair coin between the two models."""
    return Action(int(rng.integers(0, 2)))


def policy_oracle(loss_fast: float, loss_slow: float, weights: RewardWeights, costs: CostSchedule) -> Action:
    """Privileged benchmark: sees both realized losses before deciding.

    Offloads iff the slow-model reward strictly beats the fast-model reward,
    which is alpha * (loss_fast - loss_slow) > beta * c_slow for finite
    losses. Comparing rewards directly keeps infinite losses well defined
    (both infinite -> tie -> keep the cheap model).
    """
    r_slow = step_reward(Action.INVOKE_SLOW, loss_slow, weights, costs)
    r_fast = step_reward(Action.USE_FAST, loss_fast, weights, costs)
    return Action.INVOKE_SLOW if r_slow > r_fast else Action.USE_FAST


class StepView:
    """What a selection policy may inspect at one step.

    The fast output is free to read. ``y_slow`` is privileged: calling it
    before deciding is what makes the oracle unrealizable.
    """

    __slots__ = ("t", "x", "y_fast", "weights", "costs", "_slow_model", "_loss_fn", "_y_slow", "_have_slow")

    def __init__(self, t, x, y_fast, weights, costs, slow_model, loss_fn):
        self.t = t
        self.x = x
        self.y_fast = y_fast
        self.weights = weights
        self.costs = costs
        self._slow_model = slow_model
        self._loss_fn = loss_fn
        self._y_slow = None
        self._have_slow = False

    def y_slow(self):
        if not self._have_slow:
            try:
                self._y_slow = self._slow_model(self.x)
            except Exception as exc:
                raise EpisodeError(self.t, "slow") from exc
            self._have_slow = True
        return self._y_slow

    def fast_loss_vs_slow(self) -> float:
        return self._loss_fn(self.y_fast, self.y_slow())


class FastOnlyPolicy:
    name = "fast"

    def decide(self, view: StepView) -> tuple[Action, float]:
        return policy_fast(), 0.0


class SlowOnlyPolicy:
    name = "slow"

    def decide(self, view: StepView) -> tuple[Action, float]:
        return policy_slow(), 0.0


class RandomPolicy:
    name = "random"

    def __init__(self, seed: int):
        self._rng = np.random.default_rng(seed)

    def decide(self, view: StepView) -> tuple[Action, float]:
        return policy_random(self._rng), 0.0


class OraclePolicy:
    name = "oracle"

    def decide(self, view: StepView) -> tuple[Action, float]:
        gain = view.fast_loss_vs_slow()
        return policy_oracle(gain, 0.0, view.weights, view.costs), gain


class BoundThresholdPolicy:
    """The realizable selector: compares a scenario-supplied expected-loss
    bound (a function of the fast output only) against the threshold."""

    def __init__(self, bound_fn: Callable[[Any], float], name: str = "our_selector"):
        self.bound_fn = bound_fn
        self.name = name

    def decide(self, view: StepView) -> tuple[Action, float]:
        bound = self.bound_fn(view.y_fast)
        threshold = decision_threshold(view.weights, view.costs)
        return select_generic(bound, threshold), bound


def summarize(records: list[StepRecord]) -> EpisodeSummary:
    n = len(records)
    if n == 0:
        return EpisodeSummary(0.0, 0.0, 0.0, 0.0, 0)
    cumulative = math.fsum(r.reward for r in records)
    total_cost = math.fsum(r.cost_incurred for r in records)
    mean_loss = math.fsum(r.loss_realized for r in records) / n
    n_slow = sum(1 for r in records if r.action == Action.INVOKE_SLOW)
    return EpisodeSummary(cumulative, total_cost, mean_loss, n_slow / n, n)


def run_episode(
    input_stream: Iterable[Any],
    fast_model: Callable[[Any], Any],
    slow_model: Callable[[Any], Any],
    policy,
    loss_fn: LossFn,
    weights: RewardWeights,
    costs: CostSchedule,
) -> tuple[list[StepRecord], EpisodeSummary]:
    """Run one sequential decision episode over a stream of inputs.

    The fast model runs at every step (the policy always sees its output and
    its cost is always charged). The slow model's output doubles as ground
    truth, so the realized loss is loss_fn(y_fast, y_slow) when keeping the
    fast result and exactly 0 after offloading. Scoring the fast result
    therefore evaluates the slow model too, but c_slow is only charged on
    the steps where the policy actually invoked it.
    """
    records: list[StepRecord] = []
    for t, x in enumerate(input_stream):
        try:
            y_fast = fast_model(x)
        except Exception as exc:
            raise EpisodeError(t, "fast") from exc
        view = StepView(t, x, y_fast, weights, costs, slow_model, loss_fn)
        action, bound = policy.decide(view)
        if action == Action.INVOKE_SLOW:
            view.y_slow()  # charged invocation; result is the ground truth
            loss = 0.0
        else:
            loss = view.fast_loss_vs_slow()
        cost = step_cost(action, costs)
        reward = step_reward(action, loss, weights, costs)
        records.append(StepRecord(t, action, loss, cost, reward, bound))
    return records, summarize(records)
