"""Contextual restless bandits: dual decomposition, index policies, learning."""

from .arm_solver import (
    ArmPolicy,
    QTable,
    ValueTable,
    bellman_residual,
    greedy_policy,
    q_from_values,
    solve_arm_values,
)
from .demand_response import DrConfig, build_dr_instance
from .dual import (
    DualSolveReport,
    OccupancyTables,
    StepSchedule,
    constraint_slack,
    occupancy_A,
    occupancy_B,
    relaxed_value,
    solve_dual,
    update_multipliers,
)
from .index_policy import (
    BaselinePolicy,
    IndexPolicy,
    baseline_policy,
    build_index_policy,
    compute_indices,
    select_arms,
)
from .learner import (
    EmpiricalModel,
    InstanceSkeleton,
    LearnerState,
    init_learner,
    plan_epoch,
)
from .model import (
    ArmModel,
    ContextChain,
    CrbInstance,
    InitialCondition,
    MultiplierVector,
    stationary_context_distribution,
    validate_instance,
)
from .simulator import (
    TrajectoryLog,
    brute_force_primal,
    check_lemma1,
    estimate_steady_state,
    monte_carlo_value,
    rollout,
)
from .version import __version__

__all__ = [
    "ArmModel",
    "ArmPolicy",
    "BaselinePolicy",
    "ContextChain",
    "CrbInstance",
    "DrConfig",
    "DualSolveReport",
    "EmpiricalModel",
    "IndexPolicy",
    "InitialCondition",
    "InstanceSkeleton",
    "LearnerState",
    "MultiplierVector",
    "OccupancyTables",
    "QTable",
    "StepSchedule",
    "TrajectoryLog",
    "ValueTable",
    "__version__",
    "baseline_policy",
    "bellman_residual",
    "brute_force_primal",
    "build_dr_instance",
    "build_index_policy",
    "check_lemma1",
    "compute_indices",
    "constraint_slack",
    "estimate_steady_state",
    "greedy_policy",
    "init_learner",
    "monte_carlo_value",
    "occupancy_A",
    "occupancy_B",
    "plan_epoch",
    "q_from_values",
    "relaxed_value",
    "rollout",
    "select_arms",
    "solve_arm_values",
    "solve_dual",
    "stationary_context_distribution",
    "update_multipliers",
    "validate_instance",
]
