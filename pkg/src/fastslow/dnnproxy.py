"""Probabilistic predictor pairs: a fixed smooth nonlinear reference predictor
plus a cheap companion whose output is, with probability 1-delta, a
per-coordinate rescaling within [1-eps, 1+eps] and otherwise an additive
corruption capped so the squared-norm loss never exceeds the configured cap.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .policy import Action, CostSchedule, RewardWeights, decision_threshold, select_generic
from .seeding import rng_for

MULTIPLICATIVE = "multiplicative"
TAIL = "tail"


@dataclass(frozen=True)
class ProbabilisticBound:
    """(epsilon, delta, loss cap) triple describing the fast/slow relation."""

    epsilon: float
    delta: float
    m_loss_cap: float

    def __post_init__(self) -> None:
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not 0 <= self.delta <= 1:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")
        if not (self.m_loss_cap > 0 and math.isfinite(self.m_loss_cap)):
            raise ValueError(f"loss cap must be positive and finite, got {self.m_loss_cap}")


@dataclass(frozen=True)
class ProxyPair:
    """Slow predictor y_i(x) = center + spread * sum_k C_ik cos(W_k . x + p_k),
    with sum_k |C_ik| = 1 so outputs stay inside [center - spread, center + spread],
    strictly positive. The fast companion corrupts the slow output; the branch
    and the perturbation are a pure function of (corruption_seed, input index),
    so replays are exact and evaluation is safe to share across threads.
    """

    feature_weights: np.ndarray  # (K, n)
    feature_phases: np.ndarray  # (K,)
    coefs: np.ndarray  # (m, K), rows sum to 1 in absolute value
    out_center: float
    out_spread: float
    bound: ProbabilisticBound
    corruption_seed: int

    def __post_init__(self) -> None:
        if not self.out_center > self.out_spread > 0:
            raise ValueError("need out_center > out_spread > 0 for positive outputs")

    @property
    def n_outputs(self) -> int:
        return self.coefs.shape[0]

    @property
    def tail_half_width(self) -> float:
        # Per-coordinate band making the worst-case squared-norm gap exactly the cap.
        return math.sqrt(self.bound.m_loss_cap / self.n_outputs)

    def slow_output(self, x: np.ndarray) -> np.ndarray:
        feats = np.cos(self.feature_weights @ np.asarray(x, dtype=float) + self.feature_phases)
        return self.out_center + self.out_spread * (self.coefs @ feats)

    def fast_with_branch(self, x: np.ndarray, index: int) -> tuple[np.ndarray, str]:
        """Fast output plus which branch fired for input number `index`."""
        y_slow = self.slow_output(x)
        rng = rng_for(self.corruption_seed, index)
        eps, delta = self.bound.epsilon, self.bound.delta
        if rng.random() < delta:
            offsets = rng.uniform(-self.tail_half_width, self.tail_half_width, size=y_slow.shape)
            return y_slow + offsets, TAIL
        factors = rng.uniform(1.0 - eps, 1.0 + eps, size=y_slow.shape)
        return factors * y_slow, MULTIPLICATIVE

    def fast_output(self, x: np.ndarray, index: int) -> np.ndarray:
        return self.fast_with_branch(x, index)[0]

    def to_dict(self) -> dict:
        return {
            "kind": "proxy_predictor_pair",
            "feature_weights": self.feature_weights.tolist(),
            "feature_phases": self.feature_phases.tolist(),
            "coefs": self.coefs.tolist(),
            "out_center": self.out_center,
            "out_spread": self.out_spread,
            "bound": {
                "epsilon": self.bound.epsilon,
                "delta": self.bound.delta,
                "m_loss_cap": self.bound.m_loss_cap,
            },
            "corruption_seed": self.corruption_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProxyPair":
        return cls(
            feature_weights=np.array(d["feature_weights"], dtype=float),
            feature_phases=np.array(d["feature_phases"], dtype=float),
            coefs=np.array(d["coefs"], dtype=float),
            out_center=float(d["out_center"]),
            out_spread=float(d["out_spread"]),
            bound=ProbabilisticBound(**d["bound"]),
            corruption_seed=int(d["corruption_seed"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "ProxyPair":
        return cls.from_dict(json.loads(Path(path).read_text()))


def make_proxy_pair(
    rng: np.random.Generator,
    n: int,
    m: int,
    bound: ProbabilisticBound,
    n_features: int = 16,
    out_center: float = 1.0,
    out_spread: float = 0.5,
    length_scale: float = 1.0,
) -> ProxyPair:
    """Draw a fixed random smooth predictor and wrap it into a corrupted pair."""
    if not isinstance(bound, ProbabilisticBound):
        bound = ProbabilisticBound(*bound)
    W = rng.standard_normal((n_features, n)) / length_scale
    phases = rng.uniform(0.0, 2.0 * math.pi, size=n_features)
    C = rng.standard_normal((m, n_features))
    C /= np.sum(np.abs(C), axis=1, keepdims=True)
    corruption_seed = int(rng.integers(0, 2**63 - 1))
    return ProxyPair(W, phases, C, out_center, out_spread, bound, corruption_seed)


def expected_loss_bound_dnn(y_fast: np.ndarray, bound: ProbabilisticBound) -> float:
    """delta * cap + (1 - delta) * eps^2 * ||y_fast||^2 / (1 - eps)^2."""
    y_fast = np.asarray(y_fast, dtype=float)
    eps, delta = bound.epsilon, bound.delta
    mult = eps * eps * (y_fast @ y_fast) / ((1.0 - eps) ** 2)
    return float(delta * bound.m_loss_cap + (1.0 - delta) * mult)


def select_dnn(y_fast: np.ndarray, bound: ProbabilisticBound, weights: RewardWeights, costs: CostSchedule) -> Action:
    """Offload iff the expected-loss bound exceeds the decision threshold."""
    return select_generic(expected_loss_bound_dnn(y_fast, bound), decision_threshold(weights, costs))
