from unweave_flow.planner.planner import (
    ActionSubspace,
    Evaluation,
    LiftHeight,
    PlannerConfig,
    PlanResult,
    PrimitiveChoice,
    Scene,
    Validity,
    cost_landscape,
    enumerate_subspaces,
    is_valid,
    lift_height,
    optimize_action,
    plan,
    select_primitive,
    theta_samples,
)
from unweave_flow.planner.rewards import reward_elimination, reward_redistribution
from unweave_flow.planner.workspace import Workspace

__all__ = [
    "ActionSubspace",
    "Evaluation",
    "LiftHeight",
    "PlanResult",
    "PlannerConfig",
    "PrimitiveChoice",
    "Scene",
    "Validity",
    "Workspace",
    "cost_landscape",
    "enumerate_subspaces",
    "is_valid",
    "lift_height",
    "optimize_action",
    "plan",
    "reward_elimination",
    "reward_redistribution",
    "select_primitive",
    "theta_samples",
]
