"""Mean-field control approximation for multi-agent RL with non-uniform
(doubly stochastic) agent interactions."""

from .interaction import (
    InteractionMatrix,
    ring_k_neighbor,
    ring_symmetric,
    sinkhorn_random,
    uniform,
    validate_doubly_stochastic,
    weighted_view,
)
from .meanfield import (
    BoundInapplicableError,
    BoundInputs,
    MFTrajectory,
    approximation_bound,
    bound_inputs,
    mf_action_distribution,
    mf_reward,
    mf_transition,
    mf_value,
    truncation_horizon,
)
from .model import (
    AffineRewardRequiredError,
    AffineRewardSpec,
    EnvModel,
    FirmModelConfig,
    RewardConstants,
    affine_reward_eval,
    build_firm_env,
    firm_reward,
    firm_transition_distribution,
    reward_constants,
)
from .nagent import AgentSystemState, RolloutRecord, estimate_v_marl, rollout, step
from .npg import (
    NPGConfig,
    OccupancySample,
    TrainingDivergenceError,
    inner_sgd,
    npg_train,
    sample_occupancy,
    select_policy,
)
from .policy import (
    FunctionPolicy,
    TabularPolicy,
    PolicyConfig,
    SoftmaxPolicy,
    action_distribution,
    estimate_lipschitz_lq,
    init_params,
    load_policy,
    log_policy_gradient,
    save_policy,
)
from .simplex import Simplex, empirical_distribution, expectation, l1_distance, sample

__all__ = [
    "AffineRewardRequiredError",
    "AffineRewardSpec",
    "AgentSystemState",
    "BoundInapplicableError",
    "BoundInputs",
    "EnvModel",
    "FirmModelConfig",
    "FunctionPolicy",
    "InteractionMatrix",
    "MFTrajectory",
    "NPGConfig",
    "OccupancySample",
    "PolicyConfig",
    "RewardConstants",
    "RolloutRecord",
    "Simplex",
    "SoftmaxPolicy",
    "TabularPolicy",
    "TrainingDivergenceError",
    "action_distribution",
    "affine_reward_eval",
    "approximation_bound",
    "bound_inputs",
    "build_firm_env",
    "empirical_distribution",
    "estimate_lipschitz_lq",
    "estimate_v_marl",
    "expectation",
    "firm_reward",
    "firm_transition_distribution",
    "init_params",
    "inner_sgd",
    "l1_distance",
    "load_policy",
    "log_policy_gradient",
    "mf_action_distribution",
    "mf_reward",
    "mf_transition",
    "mf_value",
    "npg_train",
    "reward_constants",
    "ring_k_neighbor",
    "ring_symmetric",
    "rollout",
    "sample",
    "sample_occupancy",
    "save_policy",
    "select_policy",
    "sinkhorn_random",
    "step",
    "truncation_horizon",
    "uniform",
    "validate_doubly_stochastic",
    "weighted_view",
]
