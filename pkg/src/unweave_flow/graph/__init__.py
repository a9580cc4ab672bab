from unweave_flow.graph.cable_graph import (
    CableGraph,
    CableState,
    CrossingRecord,
    DraftCable,
    DraftNode,
    EdgeLabel,
    Node,
    NodeKind,
    PixelFrame,
    assemble_state,
    check_spacing,
    count_crossings,
    edge_label,
    state_from_polylines,
)
from unweave_flow.graph.geometry import GeometricCrossing, geometric_crossings
from unweave_flow.graph.serialization import deserialize_state, load_state, save_state, serialize_state

__all__ = [
    "CableGraph",
    "CableState",
    "CrossingRecord",
    "DraftCable",
    "DraftNode",
    "EdgeLabel",
    "GeometricCrossing",
    "Node",
    "NodeKind",
    "PixelFrame",
    "assemble_state",
    "check_spacing",
    "count_crossings",
    "deserialize_state",
    "edge_label",
    "geometric_crossings",
    "load_state",
    "save_state",
    "serialize_state",
    "state_from_polylines",
]
