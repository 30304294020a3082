"""Cost-aware selection between fast and slow compute models."""
from .policy import (
    Action,
    BoundThresholdPolicy,
    CostSchedule,
    EpisodeSummary,
    FastOnlyPolicy,
    INFINITE_LOSS,
    OraclePolicy,
    RandomPolicy,
    RewardWeights,
    SlowOnlyPolicy,
    StepRecord,
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
from .linreg import (
    CoresetPair,
    InputDistribution,
    LinearModel,
    generate_coreset_pair,
    loss_bound_lr,
    loss_l2,
    select_lr,
)
from .dnnproxy import (
    ProbabilisticBound,
    ProxyPair,
    expected_loss_bound_dnn,
    make_proxy_pair,
    select_dnn,
)
from .reach import (
    Box,
    CalibrationResult,
    IntervalMatrix,
    ReachResult,
    StatReachConfig,
    UnsafeSet,
    bloat,
    calibrate_bloat,
    example_interval_matrix,
    intersects,
    loss_nav,
    reach_sampled,
    required_samples,
    sample_matrix,
    select_rs,
    step_box,
)
from .rover import (
    NavigationResult,
    RoverControl,
    RoverParams,
    RoverScenario,
    RoverState,
    bicycle_step,
    build_uncertain_dynamics,
    calibrate_scenario,
    linearize,
    load_scenario,
    mpc_track,
    run_navigation,
)
from .spline import ReferencePath, cubic_spline_plan

__version__ = "0.1.0"
