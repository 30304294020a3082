"""Simulated rover navigation: nonlinear kinematic bicycle ground truth,
per-step linearization with multiplicative yaw-row uncertainty, spline
reference tracking with finite-horizon LQ control, and per-step safety
assessment through the reachability selection policy.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .policy import (
    Action,
    CostSchedule,
    EpisodeSummary,
    RewardWeights,
    StepRecord,
    policy_oracle,
    policy_random,
    step_cost,
    step_reward,
    summarize,
)
from .reach import (
    Box,
    IntervalMatrix,
    ReachResult,
    StatReachConfig,
    UnsafeSet,
    bloat,
    calibrate_bloat,
    CalibrationResult,
    loss_nav,
    reach_sampled,
)
from .seeding import role_rng, rng_for
from .spline import ReferencePath, cubic_spline_plan

POLICY_KINDS = ("fast", "slow", "random", "our_selector", "oracle")

_CALIB_TAG = 7001


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    return math.pi - (math.pi - a) % (2.0 * math.pi)


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


@dataclass(frozen=True)
class RoverState:
    x: float
    y: float
    yaw: float
    v: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw, self.v])


@dataclass(frozen=True)
class RoverControl:
    accel: float
    steer: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.accel, self.steer])


@dataclass(frozen=True)
class RoverParams:
    wheelbase: float = 2.0
    dt: float = 0.1
    v_max: float = 2.0
    steer_max: float = 0.6
    accel_max: float = 1.0
    yaw_uncertainty: float = 0.05

    def __post_init__(self) -> None:
        for name in ("wheelbase", "dt", "v_max", "steer_max", "accel_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.yaw_uncertainty < 1:
            raise ValueError("yaw uncertainty must lie in [0, 1)")


def bicycle_step(s: RoverState, u: RoverControl, p: RoverParams) -> RoverState:
    """One Euler step of the kinematic bicycle, with clamped controls,
    speed clamped to [0, v_max], and yaw normalization."""
    steer = _clamp(u.steer, -p.steer_max, p.steer_max)
    accel = _clamp(u.accel, -p.accel_max, p.accel_max)
    return RoverState(
        x=s.x + s.v * math.cos(s.yaw) * p.dt,
        y=s.y + s.v * math.sin(s.yaw) * p.dt,
        yaw=wrap_angle(s.yaw + s.v / p.wheelbase * math.tan(steer) * p.dt),
        v=_clamp(s.v + accel * p.dt, 0.0, p.v_max),
    )


def linearize(s: RoverState, u: RoverControl, p: RoverParams) -> tuple[np.ndarray, np.ndarray]:
    """Discrete Jacobians (A, B) of the bicycle step at (s, u), away from the
    clamping boundaries."""
    dt, L = p.dt, p.wheelbase
    cos_y, sin_y = math.cos(s.yaw), math.sin(s.yaw)
    cos_st = math.cos(u.steer)
    A = np.array(
        [
            [1.0, 0.0, -s.v * sin_y * dt, cos_y * dt],
            [0.0, 1.0, s.v * cos_y * dt, sin_y * dt],
            [0.0, 0.0, 1.0, math.tan(u.steer) / L * dt],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [0.0, 0.0],
            [0.0, 0.0],
            [0.0, s.v * dt / (L * cos_st * cos_st)],
            [dt, 0.0],
        ]
    )
    return A, B


def build_uncertain_dynamics(
    A: np.ndarray,
    B: np.ndarray,
    planned_controls: list[RoverControl],
    eta: float,
    horizon: int | None = None,
    perturb_rows: tuple[int, ...] = (2,),
) -> IntervalMatrix:
    """Augmented one-step matrix over (state, control) with multiplicative
    uncertainty on the yaw row.

    Block form [[A, B], [0, I]]: the planned control enters as extra
    coordinates held fixed over the assessment horizon. Every entry a of a
    perturbed row becomes the interval between a*(1-eta) and a*(1+eta), which
    keeps the order right for negative entries and leaves zeros zero-width.
    """
    if len(planned_controls) == 0:
        raise ValueError("horizon mismatch: no planned controls")
    if horizon is not None and len(planned_controls) < horizon:
        raise ValueError(
            f"horizon mismatch: {len(planned_controls)} planned controls for horizon {horizon}"
        )
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    nx, nu = B.shape
    m = np.zeros((nx + nu, nx + nu))
    m[:nx, :nx] = A
    m[:nx, nx:] = B
    m[nx:, nx:] = np.eye(nu)
    lo, hi = m.copy(), m.copy()
    for r in perturb_rows:
        lo[r] = np.minimum(m[r] * (1.0 - eta), m[r] * (1.0 + eta))
        hi[r] = np.maximum(m[r] * (1.0 - eta), m[r] * (1.0 + eta))
    return IntervalMatrix(lo, hi)


def augmented_start(s: RoverState, u: RoverControl) -> Box:
    """Point box over the concatenated (state, control) vector."""
    return Box.point(np.concatenate([s.as_vector(), u.as_vector()]))


DEFAULT_Q = np.diag([1.0, 1.0, 0.5, 0.5])
DEFAULT_R = np.diag([0.01, 0.01])
DEFAULT_MPC_HORIZON = 5


@dataclass(frozen=True)
class TrackingProblem:
    """Time-varying linearization of the tracking task around the reference."""

    A_seq: list[np.ndarray]
    B_seq: list[np.ndarray]
    drift_seq: list[np.ndarray]
    e0: np.ndarray
    nominal_controls: list[RoverControl]
    ref_states: list[RoverState]


def _state_error(s: RoverState, ref: RoverState) -> np.ndarray:
    return np.array([s.x - ref.x, s.y - ref.y, wrap_angle(s.yaw - ref.yaw), s.v - ref.v])


def build_tracking_problem(
    ref: ReferencePath,
    s: RoverState,
    horizon: int,
    p: RoverParams,
    v_ref: float,
) -> TrackingProblem:
    """Reference states at arc offsets v_ref * dt, curvature-feedforward
    nominal steering, and the error dynamics e+ = A e + B du + drift."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if len(ref.s) == 0:
        raise ValueError("empty reference")
    s0 = ref.project(s.x, s.y)
    ref_states: list[RoverState] = []
    curvatures: list[float] = []
    for k in range(horizon + 1):
        rx, ry, ryaw, kappa = ref.state_at(s0 + k * v_ref * p.dt)
        ref_states.append(RoverState(rx, ry, ryaw, v_ref))
        curvatures.append(kappa)
    nominal_controls = [
        RoverControl(0.0, _clamp(math.atan(p.wheelbase * curvatures[k]), -p.steer_max, p.steer_max))
        for k in range(horizon)
    ]
    A_seq, B_seq, drift_seq = [], [], []
    for k in range(horizon):
        A, B = linearize(ref_states[k], nominal_controls[k], p)
        predicted = bicycle_step(ref_states[k], nominal_controls[k], p)
        drift_seq.append(_state_error(predicted, ref_states[k + 1]))
        A_seq.append(A)
        B_seq.append(B)
    e0 = _state_error(s, ref_states[0])
    return TrackingProblem(A_seq, B_seq, drift_seq, e0, nominal_controls, ref_states)


def tracking_cost(problem: TrackingProblem, deltas: list[np.ndarray], Q: np.ndarray, R: np.ndarray) -> float:
    """Quadratic tracking cost of a control-perturbation sequence on the
    linearized model (the objective the controller minimizes)."""
    e = problem.e0
    total = 0.0
    for A, B, d, du in zip(problem.A_seq, problem.B_seq, problem.drift_seq, deltas):
        total += float(e @ Q @ e + du @ R @ du)
        e = A @ e + B @ du + d
    total += float(e @ Q @ e)
    return total


def mpc_track(
    ref: ReferencePath,
    s: RoverState,
    horizon: int,
    p: RoverParams,
    v_ref: float = 1.0,
    Q: np.ndarray | None = None,
    R: np.ndarray | None = None,
) -> list[RoverControl]:
    """Finite-horizon LQ tracking via the backward Riccati recursion.

    The affine drift (the spline reference is not exactly dynamically
    feasible) is folded in by augmenting the error state with a constant
    coordinate. Returned controls are nominal + correction, clamped to the
    actuator bounds.
    """
    Q = DEFAULT_Q if Q is None else np.asarray(Q, dtype=float)
    R = DEFAULT_R if R is None else np.asarray(R, dtype=float)
    prob = build_tracking_problem(ref, s, horizon, p, v_ref)
    nx = 4
    Qa = np.zeros((nx + 1, nx + 1))
    Qa[:nx, :nx] = Q
    P = Qa.copy()
    gains: list[np.ndarray] = [np.zeros((2, nx + 1))] * horizon
    for k in reversed(range(horizon)):
        Aa = np.zeros((nx + 1, nx + 1))
        Aa[:nx, :nx] = prob.A_seq[k]
        Aa[:nx, nx] = prob.drift_seq[k]
        Aa[nx, nx] = 1.0
        Ba = np.vstack([prob.B_seq[k], np.zeros((1, 2))])
        F = R + Ba.T @ P @ Ba
        K = np.linalg.solve(F, Ba.T @ P @ Aa)
        gains[k] = K
        P = Qa + Aa.T @ P @ (Aa - Ba @ K)
    controls: list[RoverControl] = []
    z = np.concatenate([prob.e0, [1.0]])
    for k in range(horizon):
        du = -gains[k] @ z
        u_nom = prob.nominal_controls[k]
        controls.append(
            RoverControl(
                _clamp(u_nom.accel + du[0], -p.accel_max, p.accel_max),
                _clamp(u_nom.steer + du[1], -p.steer_max, p.steer_max),
            )
        )
        Aa = np.zeros((nx + 1, nx + 1))
        Aa[:nx, :nx] = prob.A_seq[k]
        Aa[:nx, nx] = prob.drift_seq[k]
        Aa[nx, nx] = 1.0
        Ba = np.vstack([prob.B_seq[k], np.zeros((1, 2))])
        z = Aa @ z + Ba @ du
    return controls


@dataclass(frozen=True)
class RoverScenario:
    """Everything one navigation episode needs."""

    name: str
    waypoints: np.ndarray
    obstacles: UnsafeSet
    initial_state: RoverState
    goal_tolerance: float
    reach_horizon: int
    fast_cfg: StatReachConfig
    slow_cfg: StatReachConfig
    weights: RewardWeights
    costs: CostSchedule
    params: RoverParams = RoverParams()
    cruise_speed: float = 1.0
    mpc_horizon: int = DEFAULT_MPC_HORIZON
    plan_ds: float = 0.1
    step_cap: int = 2000
    perturb_rows: tuple[int, ...] = (2,)

    def __post_init__(self) -> None:
        wp = np.asarray(self.waypoints, dtype=float)
        object.__setattr__(self, "waypoints", wp)
        if wp.shape[0] < 2:
            raise ValueError("need at least two waypoints")
        if self.goal_tolerance <= 0:
            raise ValueError("goal tolerance must be positive")
        if not self.slow_cfg.confidence > self.fast_cfg.confidence:
            raise ValueError("the slow routine must carry the higher confidence")
        if self.slow_cfg.type1_error > self.fast_cfg.type1_error:
            warnings.warn("slow reachability allows a larger type-I error than fast", stacklevel=2)
        if not self.slow_cfg.cost > self.fast_cfg.cost:
            warnings.warn("slow reachability is not the expensive one", stacklevel=2)

    def reference(self) -> ReferencePath:
        return cubic_spline_plan(self.waypoints, self.plan_ds)

    def goal(self) -> np.ndarray:
        return self.waypoints[-1]


@dataclass
class NavStep:
    """One consulted decision during navigation."""

    t: int
    state: RoverState
    control: RoverControl
    action: Action
    loss: float
    reward: float
    dynamics: IntervalMatrix
    start_box: Box
    fast_result: ReachResult
    slow_result: ReachResult | None


@dataclass
class NavigationResult:
    states: list[RoverState]
    steps: list[NavStep]
    records: list[StepRecord]
    summary: EpisodeSummary
    reached_goal: bool
    flagged_unsafe: bool
    hit_step_cap: bool

    def trajectory(self) -> np.ndarray:
        return np.array([s.as_vector() for s in self.states])


def _decide(
    kind: str,
    fast_bloated: list[Box],
    slow_boxes_fn,
    unsafe: UnsafeSet,
    weights: RewardWeights,
    costs: CostSchedule,
    rng_policy,
) -> tuple[Action, float]:
    """Action plus the gain figure the policy compared (inf/0 in this 0-or-inf
    loss setting)."""
    if kind == "fast":
        return Action.USE_FAST, 0.0
    if kind == "slow":
        return Action.INVOKE_SLOW, 0.0
    if kind == "random":
        return policy_random(rng_policy), 0.0
    fast_hit = loss_nav(fast_bloated, unsafe)
    if kind == "our_selector":
        return (Action.INVOKE_SLOW, math.inf) if fast_hit == math.inf else (Action.USE_FAST, 0.0)
    if kind == "oracle":
        loss_slow = loss_nav(slow_boxes_fn(), unsafe)
        action = policy_oracle(fast_hit, loss_slow, weights, costs)
        gain = math.inf if (fast_hit == math.inf and loss_slow == 0.0) else 0.0
        return action, gain
    raise ValueError(f"unknown policy kind {kind!r}; expected one of {POLICY_KINDS}")


def run_navigation(
    scn: RoverScenario,
    policy_kind: str,
    seed: int,
    bloat_mu: float = 0.0,
) -> NavigationResult:
    """Drive the rover along the planned path under one selection policy.

    Per decision step: plan controls, linearize, build the uncertain
    augmented dynamics, run the fast reachability (always), pick the model
    per the policy, and score the consulted verdict. A safe verdict lets the
    first planned control execute; an unsafe one triggers a full stop at
    maximum deceleration and flags the episode. Randomness is keyed by
    (seed, step, role), so two policies that make the same decisions see
    bit-identical reachable sets.
    """
    if policy_kind not in POLICY_KINDS:
        raise ValueError(f"unknown policy kind {policy_kind!r}; expected one of {POLICY_KINDS}")
    ref = scn.reference()
    unsafe = scn.obstacles
    state = scn.initial_state
    goal = scn.goal()
    states = [state]
    steps: list[NavStep] = []
    records: list[StepRecord] = []
    reached = False
    flagged = False
    for t in range(scn.step_cap):
        if math.hypot(state.x - goal[0], state.y - goal[1]) <= scn.goal_tolerance:
            reached = True
            break
        controls = mpc_track(ref, state, scn.mpc_horizon, scn.params, scn.cruise_speed)
        u0 = controls[0]
        A, B = linearize(state, u0, scn.params)
        lam = build_uncertain_dynamics(
            A, B, controls, scn.params.yaw_uncertainty,
            horizon=scn.reach_horizon, perturb_rows=scn.perturb_rows,
        )
        z0 = augmented_start(state, u0)
        fast_result = reach_sampled(lam, z0, scn.fast_cfg, role_rng(seed, t, "fast"))
        fast_bloated = [bloat(b, bloat_mu) for b in fast_result.boxes]

        slow_result: ReachResult | None = None

        def slow_boxes():
            nonlocal slow_result
            if slow_result is None:
                slow_result = reach_sampled(lam, z0, scn.slow_cfg, role_rng(seed, t, "slow"))
            return slow_result.boxes

        action, gain = _decide(
            policy_kind, fast_bloated, slow_boxes, unsafe, scn.weights, scn.costs,
            role_rng(seed, t, "policy"),
        )
        consulted = slow_boxes() if action == Action.INVOKE_SLOW else fast_bloated
        loss = loss_nav(consulted, unsafe)
        cost = step_cost(action, scn.costs)
        reward = step_reward(action, loss, scn.weights, scn.costs)
        records.append(StepRecord(t, action, loss, cost, reward, gain))
        steps.append(
            NavStep(t, state, u0, action, loss, reward, lam, z0, fast_result, slow_result)
        )
        if loss == math.inf:
            flagged = True
            # Full stop: maximum deceleration, wheels straight.
            brake = RoverControl(-scn.params.accel_max, 0.0)
            while state.v > 0.0:
                state = bicycle_step(state, brake, scn.params)
                states.append(state)
            break
        state = bicycle_step(state, u0, scn.params)
        states.append(state)
    hit_cap = not reached and not flagged
    return NavigationResult(states, steps, records, summarize(records), reached, flagged, hit_cap)


def nominal_rollout(scn: RoverScenario) -> list[tuple[IntervalMatrix, Box]]:
    """Drive the scenario with no safety checks and collect the per-step
    uncertain dynamics and start boxes (the calibration family)."""
    ref = scn.reference()
    state = scn.initial_state
    goal = scn.goal()
    out: list[tuple[IntervalMatrix, Box]] = []
    for _ in range(scn.step_cap):
        if math.hypot(state.x - goal[0], state.y - goal[1]) <= scn.goal_tolerance:
            break
        controls = mpc_track(ref, state, scn.mpc_horizon, scn.params, scn.cruise_speed)
        u0 = controls[0]
        A, B = linearize(state, u0, scn.params)
        lam = build_uncertain_dynamics(
            A, B, controls, scn.params.yaw_uncertainty,
            horizon=scn.reach_horizon, perturb_rows=scn.perturb_rows,
        )
        out.append((lam, augmented_start(state, u0)))
        state = bicycle_step(state, u0, scn.params)
    return out


def calibrate_scenario(scn: RoverScenario, seed: int, repeats: int = 2) -> CalibrationResult:
    """Paired fast/slow reachability along the nominal trajectory; returns the
    minimum bloat radius that makes every slow set fit."""
    family = nominal_rollout(scn)
    pairs = []
    for i, (lam, z0) in enumerate(family):
        for r in range(repeats):
            fast = reach_sampled(lam, z0, scn.fast_cfg, rng_for(seed, _CALIB_TAG, i, r, 0))
            slow = reach_sampled(lam, z0, scn.slow_cfg, rng_for(seed, _CALIB_TAG, i, r, 1))
            pairs.append((fast, slow))
    return calibrate_bloat(pairs)


def obstacles_from_points(points: np.ndarray, cell_size: float) -> list[Box]:
    """Grid-bin scattered (x, y) points into occupied cells.

    Lets externally derived terrain (for example elevation-thresholded point
    clouds) feed the obstacle map.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of points")
    if cell_size <= 0:
        raise ValueError("cell size must be positive")
    cells = np.unique(np.floor(points / cell_size).astype(int), axis=0)
    return [Box(c * cell_size, (c + 1) * cell_size) for c in cells]


def load_points_csv(path: str | Path) -> np.ndarray:
    """Read x,y rows, tolerating a single header line."""
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def scenario_from_dict(d: dict, base_dir: Path | None = None) -> RoverScenario:
    """Build a scenario from its JSON document."""
    params = RoverParams(**d.get("params", {}))
    horizon = int(d.get("reach_horizon", 5))
    aug_dim = 6
    fast_cfg = StatReachConfig(dim=aug_dim, horizon=horizon, **d["fast_reach"])
    slow_cfg = StatReachConfig(dim=aug_dim, horizon=horizon, **d["slow_reach"])
    if "obstacles" in d:
        boxes = [Box(np.array(o["lo"], dtype=float), np.array(o["hi"], dtype=float)) for o in d["obstacles"]]
    elif "points_csv" in d:
        csv_path = Path(d["points_csv"])
        if base_dir is not None and not csv_path.is_absolute():
            csv_path = base_dir / csv_path
        if not csv_path.exists():
            raise ValueError(f"points csv not found: {csv_path}")
        boxes = obstacles_from_points(load_points_csv(csv_path), float(d["cell_size"]))
    else:
        boxes = []
    weights = RewardWeights(**d.get("weights", {"alpha": 0.7, "beta": 0.3}))
    costs = (
        CostSchedule(**d["costs"])
        if "costs" in d
        else CostSchedule(fast_cfg.cost, slow_cfg.cost)
    )
    init = d.get("initial_state", {})
    return RoverScenario(
        name=d.get("name", "rover"),
        waypoints=np.asarray(d["waypoints"], dtype=float),
        obstacles=UnsafeSet(tuple(boxes), (0, 1)),
        initial_state=RoverState(
            init.get("x", 0.0), init.get("y", 0.0), init.get("yaw", 0.0), init.get("v", 0.0)
        ),
        goal_tolerance=float(d.get("goal_tolerance", 0.5)),
        reach_horizon=horizon,
        fast_cfg=fast_cfg,
        slow_cfg=slow_cfg,
        weights=weights,
        costs=costs,
        params=params,
        cruise_speed=float(d.get("cruise_speed", 1.0)),
        mpc_horizon=int(d.get("mpc_horizon", DEFAULT_MPC_HORIZON)),
        plan_ds=float(d.get("plan_ds", 0.1)),
        step_cap=int(d.get("step_cap", 2000)),
        perturb_rows=tuple(int(r) for r in d.get("perturb_rows", (2,))),
    )


def load_scenario(path: str | Path) -> RoverScenario:
    path = Path(path)
    return scenario_from_dict(json.loads(path.read_text()), base_dir=path.parent)
