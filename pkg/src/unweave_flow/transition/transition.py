"""Deterministic state transition model for one pick-pivot-place action.

The acted cable is split at the pivot node ``c``. Everything from ``c`` to the
fixed end stays put; the grasp segment (``c``..``g``) is pulled straight and
rotated by ``theta`` about ``c`` so that ``g`` lands on the place point ``p``;
the tail (``g``..v_free) either continues straight past ``p`` or, when it is
long compared to the grasp segment, points from ``p`` back toward where the
free end used to lie.

Geometry is evaluated in world meters (y up); states keep pixel positions.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import ClassVar, Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from unweave_flow.errors import CableTooShortToPivotError, InvalidGraspError, ThetaOutOfBoundsError
from unweave_flow.graph.cable_graph import (
    CableGraph,
    CableState,
    DraftCable,
    DraftNode,
    Node,
    NodeKind,
    PixelFrame,
    assemble_state,
    count_crossings,
)
from unweave_flow.graph.geometry import (
    DEFAULT_MERGE_RADIUS_PX,
    merge_close,
    polyline_length,
    pythagorean_height,
    rotate,
    segment_intersections,
    straight_run,
)
from unweave_flow.settings import YamlConfig

logger = logging.getLogger(__name__)

Branch = Literal["straight", "bent"]


class TransitionConfig(YamlConfig):
    default_path: ClassVar[Path] = Path(__file__).parent / "config" / "transition.yaml"

    model_config = ConfigDict(frozen=True)

    k: float = Field(default=0.8, gt=0, description="stiffness threshold on l_tail / l_grasp")
    theta_min: float = -5.0 * math.pi / 6.0
    theta_max: float = 5.0 * math.pi / 6.0
    resample_step: float = Field(default=17.0 / 500.0, gt=0, description="meters")
    merge_radius_px: float = Field(default=DEFAULT_MERGE_RADIUS_PX, gt=0)
    frame: PixelFrame = Field(default_factory=PixelFrame)

    @model_validator(mode="after")
    def _check_bounds(self) -> "TransitionConfig":
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be below theta_max")
        return self


class Action(BaseModel):
    model_config = ConfigDict(frozen=True)

    cable_id: int
    grasp_node_id: int
    pivot_angle: float


class ActionGeometry(BaseModel):
    """Everything an executor needs to carry out an action."""

    model_config = ConfigDict(frozen=True)

    cable_id: int
    pivot_node_id: int
    grasp_node_id: int
    theta: float
    pivot_px: tuple[float, float]
    grasp_px: tuple[float, float]
    place_px: tuple[float, float]
    pivot_world: tuple[float, float]
    grasp_world: tuple[float, float]
    place_world: tuple[float, float]
    l_grasp: float
    l_tail: float
    branch: Branch
    # Grasp lift before the swing. When the segment cannot reach the place
    # point flat (taut), the lift is the one that pulls the slack out of it.
    lift_height: float
    taut: bool
    grasp_orientation: float
    place_orientation: float


class Deformation(NamedTuple):
    """Kernel output; ``moved`` runs v_free -> last point before ``c`` (``c`` excluded)."""

    moved: np.ndarray
    place: np.ndarray
    place_index: int
    branch: Branch
    l_grasp: float
    l_tail: float


def deform(points: np.ndarray, grasp_index: int, pivot_index: int, theta: float, k: float, step: float) -> Deformation:
    """Straighten-rotate-place on a polyline ordered v_free -> v_fix."""
    c = points[pivot_index]
    g = points[grasp_index]
    chord = g - c
    norm = float(np.linalg.norm(chord))
    if norm == 0.0:
        raise InvalidGraspError("grasp node coincides with the pivot")
    l_grasp = polyline_length(points[grasp_index:pivot_index + 1])
    l_tail = polyline_length(points[:grasp_index + 1])

    direction = rotate(chord / norm, theta)
    place = c + direction * l_grasp
    if l_tail < k * l_grasp:
        branch: Branch = "straight"
        tail_dir = direction
    else:
        branch = "bent"
        toward = points[0] - place
        span = float(np.linalg.norm(toward))
        tail_dir = toward / span if span > 1e-12 else direction

    grasp_run = straight_run(c, place, step)
    if l_tail > 0.0:
        tail_run = straight_run(place, place + tail_dir * l_tail, step)
    else:
        tail_run = np.empty((0, 2))
    moved = np.vstack([grasp_run, tail_run])[::-1].copy()
    return Deformation(moved, place, len(tail_run), branch, l_grasp, l_tail)


def pivot_index(graph: CableGraph) -> int:
    if len(graph.nodes) < 3:
        raise CableTooShortToPivotError(f"cable {graph.cable_id} too short to pivot")
    idx = len(graph.nodes) - 2
    for i, node in enumerate(graph.nodes[1:], start=1):
        if node.kind is NodeKind.UNDER:
            idx = i - 1
            break
    if idx <= 0:
        raise CableTooShortToPivotError(f"cable {graph.cable_id} too short to pivot")
    return idx


def pivot_node(graph: CableGraph) -> Node:
    """Predecessor of the first undercrossing (or of v_fix) walking from v_free."""
    return graph.nodes[pivot_index(graph)]


def grasp_candidates(graph: CableGraph) -> list[int]:
    """Indices of regular nodes strictly between v_free and the pivot."""
    try:
        c = pivot_index(graph)
    except CableTooShortToPivotError:
        return []
    return [i for i in range(1, c) if graph.nodes[i].kind is NodeKind.REGULAR]


class NewCrossing(NamedTuple):
    static_cable: int
    point: tuple[float, float]
    moved_segment: int
    moved_t: float
    static_segment: int
    static_t: float


class Motion(NamedTuple):
    """Predicted motion of one action, before a CableState is assembled."""

    action: Action
    graph: CableGraph
    pivot_index: int
    grasp_index: int
    deformation: Deformation
    # Pixel polyline v_free -> c of the moved part, c included as the last vertex.
    moved_px: np.ndarray
    kept_crossings: frozenset[int]
    removed_crossings: frozenset[int]
    new_crossings: tuple[NewCrossing, ...]

    @property
    def predicted_count(self) -> int:
        return len(self.kept_crossings) + len(self.new_crossings)


def _check_action(state: CableState, action: Action, cfg: TransitionConfig) -> tuple[CableGraph, int, int]:
    if not cfg.theta_min <= action.pivot_angle <= cfg.theta_max:
        raise ThetaOutOfBoundsError(
            f"theta {action.pivot_angle:.4f} outside [{cfg.theta_min:.4f}, {cfg.theta_max:.4f}]"
        )
    try:
        graph = state.graph(action.cable_id)
    except KeyError as exc:
        raise InvalidGraspError(str(exc)) from exc
    c = pivot_index(graph)
    try:
        g = graph.index_of(action.grasp_node_id)
    except KeyError as exc:
        raise InvalidGraspError(f"invalid grasp node: {exc}") from exc
    if graph.nodes[g].kind is not NodeKind.REGULAR or not 0 < g < c:
        raise InvalidGraspError(
            f"invalid grasp node {action.grasp_node_id}: must be a regular node strictly between v_free and the pivot"
        )
    return graph, c, g


def motion(state: CableState, action: Action, cfg: TransitionConfig) -> Motion:
    graph, c, g = _check_action(state, action, cfg)
    frame = cfg.frame
    world = frame.to_world(graph.positions())
    deformation = deform(world, g, c, action.pivot_angle, cfg.k, cfg.resample_step)
    moved_px = np.vstack([frame.to_pixel(deformation.moved), graph.positions()[c][None, :]])

    kept, removed = set(), set()
    for cid, rec in state.crossing_registry.items():
        if action.cable_id not in (rec.over, rec.under):
            kept.add(cid)
    for idx, node in enumerate(graph.nodes):
        if node.is_crossing:
            (kept if idx >= c else removed).add(node.crossing_id)

    found: list[NewCrossing] = []
    for other in state.others(action.cable_id):
        hits = segment_intersections(moved_px, other.positions())
        if not hits:
            continue
        existing = [
            rec.pos_px for cid, rec in state.crossing_registry.items()
            if cid in kept and {rec.over, rec.under} == {action.cable_id, other.cable_id}
        ]
        points = existing + [h[4] for h in hits]
        for idx in merge_close(points, cfg.merge_radius_px):
            if idx < len(existing):
                continue
            seg_m, t_m, seg_s, t_s, pt = hits[idx - len(existing)]
            found.append(NewCrossing(other.cable_id, pt, seg_m, t_m, seg_s, t_s))
    return Motion(action, graph, c, g, deformation, moved_px, frozenset(kept), frozenset(removed), tuple(found))


def acted_drafts(m: Motion) -> list[DraftNode]:
    graph, c = m.graph, m.pivot_index
    inserts = sorted(enumerate(m.new_crossings), key=lambda item: (item[1].moved_segment, item[1].moved_t))
    drafts: list[DraftNode] = []
    cursor = 0
    n_moved = len(m.moved_px) - 1
    for i in range(n_moved):
        pos = (float(m.moved_px[i, 0]), float(m.moved_px[i, 1]))
        if i == 0:
            drafts.append(DraftNode(pos, NodeKind.ENDPOINT, node_id=graph.nodes[0].node_id))
        elif i == m.deformation.place_index:
            drafts.append(DraftNode(pos, NodeKind.REGULAR, node_id=graph.nodes[m.grasp_index].node_id))
        else:
            drafts.append(DraftNode(pos, NodeKind.REGULAR))
        while cursor < len(inserts) and inserts[cursor][1].moved_segment == i:
            k, x = inserts[cursor]
            drafts.append(DraftNode(x.point, NodeKind.OVER, key=("new", k)))
            cursor += 1
    for node in graph.nodes[c:]:
        drafts.append(_keep(node))
    return drafts


def _keep(node: Node, removed: frozenset[int] = frozenset()) -> DraftNode:
    if node.is_crossing and node.crossing_id not in removed:
        return DraftNode(node.pos_px, node.kind, ("old", node.crossing_id), node.node_id, node.crossing_id)
    kind = NodeKind.REGULAR if node.is_crossing else node.kind
    return DraftNode(node.pos_px, kind, node_id=node.node_id)


def _static_drafts(graph: CableGraph, m: Motion) -> list[DraftNode]:
    inserts = sorted(
        ((k, x) for k, x in enumerate(m.new_crossings) if x.static_cable == graph.cable_id),
        key=lambda item: (item[1].static_segment, item[1].static_t),
    )
    drafts: list[DraftNode] = []
    cursor = 0
    for i, node in enumerate(graph.nodes):
        drafts.append(_keep(node, m.removed_crossings))
        while cursor < len(inserts) and inserts[cursor][1].static_segment == i:
            k, x = inserts[cursor]
            drafts.append(DraftNode(x.point, NodeKind.UNDER, key=("new", k)))
            cursor += 1
    return drafts


def state_after(state: CableState, m: Motion) -> CableState:
    cables = []
    for graph in state.graphs:
        if graph.cable_id == m.action.cable_id:
            nodes = acted_drafts(m)
        else:
            nodes = _static_drafts(graph, m)
        cables.append(DraftCable(graph.cable_id, graph.color_name, nodes))
    return assemble_state(cables)


def predict(state: CableState, action: Action, cfg: TransitionConfig) -> CableState:
    m = motion(state, action, cfg)
    predicted = state_after(state, m)
    logger.debug(
        "predict: cable %d grasp %d theta %.3f -> %s branch, %d crossings",
        action.cable_id, action.grasp_node_id, action.pivot_angle, m.deformation.branch, count_crossings(predicted),
    )
    return predicted


def crossings_eliminated(state: CableState, action: Action, cfg: TransitionConfig) -> int:
    return count_crossings(state) - count_crossings(predict(state, action, cfg))


def _heading(vec: np.ndarray) -> float:
    return math.atan2(float(vec[1]), float(vec[0]))


def action_geometry(state: CableState, action: Action, cfg: TransitionConfig) -> ActionGeometry:
    graph, c, g = _check_action(state, action, cfg)
    frame = cfg.frame
    world = frame.to_world(graph.positions())
    d = deform(world, g, c, action.pivot_angle, cfg.k, cfg.resample_step)
    cw, gw, pw = world[c], world[g], d.place
    h, taut = pythagorean_height(float(np.linalg.norm(gw - cw)), float(np.linalg.norm(pw - cw)))
    if taut:
        h, _ = pythagorean_height(d.l_grasp, float(np.linalg.norm(gw - cw)))
    tangent = world[g + 1] - world[g - 1]
    place_px = frame.to_pixel(pw)
    return ActionGeometry(
        cable_id=action.cable_id,
        pivot_node_id=graph.nodes[c].node_id,
        grasp_node_id=action.grasp_node_id,
        theta=action.pivot_angle,
        pivot_px=graph.nodes[c].pos_px,
        grasp_px=graph.nodes[g].pos_px,
        place_px=(float(place_px[0]), float(place_px[1])),
        pivot_world=(float(cw[0]), float(cw[1])),
        grasp_world=(float(gw[0]), float(gw[1])),
        place_world=(float(pw[0]), float(pw[1])),
        l_grasp=d.l_grasp,
        l_tail=d.l_tail,
        branch=d.branch,
        lift_height=h,
        taut=taut,
        grasp_orientation=_heading(tangent),
        place_orientation=_heading(cw - pw),
    )
