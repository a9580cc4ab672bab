from unweave_flow.transition.transition import (
    Action,
    ActionGeometry,
    Deformation,
    Motion,
    TransitionConfig,
    acted_drafts,
    action_geometry,
    crossings_eliminated,
    deform,
    grasp_candidates,
    motion,
    pivot_index,
    pivot_node,
    predict,
    state_after,
)

__all__ = [
    "Action",
    "ActionGeometry",
    "Deformation",
    "Motion",
    "TransitionConfig",
    "acted_drafts",
    "action_geometry",
    "crossings_eliminated",
    "deform",
    "grasp_candidates",
    "motion",
    "pivot_index",
    "pivot_node",
    "predict",
    "state_after",
]
