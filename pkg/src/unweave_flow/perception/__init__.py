from unweave_flow.perception.overlay import draw_action, draw_state, save_png
from unweave_flow.perception.perception import (
    CableMask,
    PerceptionConfig,
    TraceWindow,
    build_state,
    classify_window,
    load_image,
    refine_overcrossings,
    segment_by_color,
    trace_cable,
)

__all__ = [
    "CableMask",
    "PerceptionConfig",
    "TraceWindow",
    "build_state",
    "classify_window",
    "draw_action",
    "draw_state",
    "load_image",
    "refine_overcrossings",
    "save_png",
    "segment_by_color",
    "trace_cable",
]
