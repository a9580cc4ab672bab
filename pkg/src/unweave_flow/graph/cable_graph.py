"""Graph-based cable state: typed nodes on a directed path per cable.

Image frame: origin top-left, x right, y down. World frame (``PixelFrame``):
x = u * s, y = (H - v) * s, so positive angles are counter-clockwise.
"""

from __future__ import annotations

import logging
import math
from enum import Enum
from typing import Callable, Hashable, Mapping, NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from unweave_flow.errors import StateInvariantError
from unweave_flow.graph.geometry import (
    DEFAULT_MERGE_RADIUS_PX,
    geometric_crossings,
    resample_polyline,
)

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_PX = 35.0
DEFAULT_STEP_PX = 17.0
SQRT2 = math.sqrt(2.0)


class NodeKind(str, Enum):
    ENDPOINT = "endpoint"
    REGULAR = "regular"
    OVER = "over"
    UNDER = "under"


CROSSING_KINDS = frozenset({NodeKind.OVER, NodeKind.UNDER})


class EdgeLabel(str, Enum):
    PLUS = "+"
    MINUS = "-"
    PLAIN = "o"


def edge_label(a: NodeKind, b: NodeKind) -> EdgeLabel:
    kinds = {NodeKind(a), NodeKind(b)}
    if kinds == CROSSING_KINDS:
        raise StateInvariantError("edge joins an overcrossing and an undercrossing")
    if NodeKind.OVER in kinds:
        return EdgeLabel.PLUS
    if NodeKind.UNDER in kinds:
        return EdgeLabel.MINUS
    return EdgeLabel.PLAIN


class PixelFrame(BaseModel):
    """Orthographic pixel <-> tabletop mapping (the deprojection operator)."""

    model_config = ConfigDict(frozen=True)

    scale: float = Field(default=1.0 / 500.0, gt=0, description="meters per pixel")
    width: int = Field(default=640, gt=0)
    height: int = Field(default=480, gt=0)

    def to_world(self, px: Sequence[float] | np.ndarray) -> np.ndarray:
        pts = np.asarray(px, dtype=float)
        out = np.empty_like(pts)
        out[..., 0] = pts[..., 0] * self.scale
        out[..., 1] = (self.height - pts[..., 1]) * self.scale
        return out

    def to_pixel(self, world: Sequence[float] | np.ndarray) -> np.ndarray:
        pts = np.asarray(world, dtype=float)
        out = np.empty_like(pts)
        out[..., 0] = pts[..., 0] / self.scale
        out[..., 1] = self.height - pts[..., 1] / self.scale
        return out


class Node(BaseModel):
    model_config = ConfigDict(frozen=True)

    node_id: int = Field(ge=0)
    kind: NodeKind
    pos_px: tuple[float, float]
    crossing_id: int | None = None

    @model_validator(mode="after")
    def _crossing_id_iff_crossing(self) -> "Node":
        if (self.crossing_id is not None) != (self.kind in CROSSING_KINDS):
            raise StateInvariantError(
                f"node {self.node_id}: crossing_id must be set exactly for crossing nodes"
            )
        return self

    @property
    def is_crossing(self) -> bool:
        return self.kind in CROSSING_KINDS


class CableGraph(BaseModel):
    """Directed simple path from the free endpoint (first) to the fixed one (last)."""

    model_config = ConfigDict(frozen=True)

    cable_id: int
    color_name: str
    nodes: tuple[Node, ...]
    edges: tuple[EdgeLabel, ...] = ()

    @model_validator(mode="before")
    @classmethod
    def _derive_edges(cls, data):
        if isinstance(data, dict) and not data.get("edges"):
            nodes = data.get("nodes") or ()
            kinds = [n.kind if isinstance(n, Node) else NodeKind(n["kind"]) for n in nodes]
            data = {**data, "edges": tuple(edge_label(a, b) for a, b in zip(kinds, kinds[1:]))}
        return data

    @model_validator(mode="after")
    def _check_path(self) -> "CableGraph":
        n = len(self.nodes)
        if n < 2:
            raise StateInvariantError(f"cable {self.cable_id}: not a path (fewer than two nodes)")
        if len(self.edges) != n - 1:
            raise StateInvariantError(f"cable {self.cable_id}: edge count must be node count - 1")
        if self.nodes[0].kind is not NodeKind.ENDPOINT or self.nodes[-1].kind is not NodeKind.ENDPOINT:
            raise StateInvariantError(f"cable {self.cable_id}: path must start and end at endpoints")
        if any(node.kind is NodeKind.ENDPOINT for node in self.nodes[1:-1]):
            raise StateInvariantError(f"cable {self.cable_id}: interior endpoint")
        if len({node.node_id for node in self.nodes}) != n:
            raise StateInvariantError(f"cable {self.cable_id}: not a path (repeated node)")
        expected = tuple(edge_label(a.kind, b.kind) for a, b in zip(self.nodes, self.nodes[1:]))
        if expected != tuple(self.edges):
            raise StateInvariantError(f"cable {self.cable_id}: edge label mismatch")
        return self

    @property
    def free(self) -> Node:
        return self.nodes[0]

    @property
    def fixed(self) -> Node:
        return self.nodes[-1]

    def positions(self) -> np.ndarray:
        return np.array([node.pos_px for node in self.nodes], dtype=float)

    def index_of(self, node_id: int) -> int:
        for idx, node in enumerate(self.nodes):
            if node.node_id == node_id:
                return idx
        raise KeyError(f"node {node_id} is not on cable {self.cable_id}")

    def kinds(self) -> list[NodeKind]:
        return [node.kind for node in self.nodes]


class CrossingRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    crossing_id: int
    over: int
    under: int
    pos_px: tuple[float, float]


class CableState(BaseModel):
    """The full scene: one graph per cable plus the shared crossing registry."""

    model_config = ConfigDict(frozen=True)

    graphs: tuple[CableGraph, ...] = ()
    crossing_registry: dict[int, CrossingRecord] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_invariants(self) -> "CableState":
        check_state_invariants(self)
        return self

    def graph(self, cable_id: int) -> CableGraph:
        for g in self.graphs:
            if g.cable_id == cable_id:
                return g
        raise KeyError(f"no cable {cable_id} in state")

    @property
    def cable_ids(self) -> list[int]:
        return [g.cable_id for g in self.graphs]

    def others(self, cable_id: int) -> list[CableGraph]:
        return [g for g in self.graphs if g.cable_id != cable_id]

    def find_node(self, node_id: int) -> tuple[CableGraph, int]:
        """The graph and index holding a non-crossing node id."""
        for g in self.graphs:
            for idx, node in enumerate(g.nodes):
                if node.node_id == node_id and not node.is_crossing:
                    return g, idx
        raise KeyError(f"node {node_id} not found")


def check_state_invariants(state: CableState) -> None:
    ids = state.cable_ids
    if len(set(ids)) != len(ids):
        raise StateInvariantError("duplicate cable id")

    plain_ids: dict[int, int] = {}
    occurrences: dict[int, list[tuple[int, Node]]] = {}
    for g in state.graphs:
        for node in g.nodes:
            if node.is_crossing:
                occurrences.setdefault(node.crossing_id, []).append((g.cable_id, node))
            else:
                if node.node_id in plain_ids:
                    raise StateInvariantError(f"node id {node.node_id} is not unique")
                plain_ids[node.node_id] = g.cable_id

    for cid, occ in occurrences.items():
        kinds = sorted(node.kind.value for _, node in occ)
        cables = {cable for cable, _ in occ}
        if len(occ) != 2 or kinds != ["over", "under"] or len(cables) != 2:
            raise StateInvariantError(f"unpaired crossing {cid}")
        (_, a), (_, b) = occ
        if a.node_id != b.node_id or a.pos_px != b.pos_px:
            raise StateInvariantError(f"crossing {cid}: paired nodes disagree on id or position")
        if a.node_id in plain_ids:
            raise StateInvariantError(f"crossing {cid}: node id {a.node_id} reused by a non-crossing node")
        record = state.crossing_registry.get(cid)
        if record is None:
            raise StateInvariantError(f"unregistered crossing {cid}")
        over = next(cable for cable, node in occ if node.kind is NodeKind.OVER)
        under = next(cable for cable, node in occ if node.kind is NodeKind.UNDER)
        if (record.over, record.under) != (over, under) or record.pos_px != a.pos_px:
            raise StateInvariantError(f"registry mismatch for crossing {cid}")

    stale = set(state.crossing_registry) - set(occurrences)
    if stale:
        raise StateInvariantError(f"registry lists crossings absent from graphs: {sorted(stale)}")
    for key, record in state.crossing_registry.items():
        if key != record.crossing_id:
            raise StateInvariantError(f"registry key {key} does not match crossing id {record.crossing_id}")


def check_spacing(state: CableState, d_w: float = DEFAULT_WINDOW_PX, step: float | None = None) -> None:
    """Invariants that depend on the tracing parameters."""
    records = list(state.crossing_registry.values())
    limit = SQRT2 * d_w
    for i, a in enumerate(records):
        for b in records[i + 1:]:
            if math.dist(a.pos_px, b.pos_px) < limit:
                raise StateInvariantError(
                    f"crossings too close: {a.crossing_id} and {b.crossing_id} are under sqrt(2)*d_w apart"
                )
    if step is not None:
        for g in state.graphs:
            gaps = np.linalg.norm(np.diff(g.positions(), axis=0), axis=1)
            if len(gaps) and float(gaps.max()) > 1.5 * step + 1e-9:
                raise StateInvariantError(f"cable {g.cable_id}: node spacing exceeds 1.5 x step")


def count_crossings(state: CableState) -> int:
    return len(state.crossing_registry)


class DraftNode(NamedTuple):
    """A node before ids are assigned; ``key`` pairs crossing drafts across cables."""

    pos: tuple[float, float]
    kind: NodeKind
    key: Hashable | None = None
    node_id: int | None = None
    crossing_id: int | None = None


class DraftCable(NamedTuple):
    cable_id: int
    color_name: str
    nodes: list[DraftNode]


def separate_opposite_crossings(nodes: list[DraftNode]) -> list[DraftNode]:
    """Insert a midpoint regular node between adjacent over/under drafts."""
    out: list[DraftNode] = []
    for node in nodes:
        if out and {out[-1].kind, node.kind} == CROSSING_KINDS:
            prev = out[-1]
            mid = ((prev.pos[0] + node.pos[0]) / 2.0, (prev.pos[1] + node.pos[1]) / 2.0)
            out.append(DraftNode(mid, NodeKind.REGULAR))
        out.append(node)
    return out


def assemble_state(cables: Sequence[DraftCable], first_node_id: int = 0, first_crossing_id: int = 0) -> CableState:
    """Assign ids (dense nodes, separate crossing counter) and build a CableState.

    Drafts that already carry a ``node_id`` or ``crossing_id`` keep it; the
    remaining ids are allocated after the largest one in use.
    """
    taken = {n.node_id for c in cables for n in c.nodes if n.node_id is not None}
    next_node = max(taken) + 1 if taken else first_node_id
    taken_crossings = {n.crossing_id for c in cables for n in c.nodes if n.crossing_id is not None}
    next_crossing = max(taken_crossings) + 1 if taken_crossings else first_crossing_id
    crossing_ids: dict[Hashable, tuple[int, int]] = {}
    records: dict[int, dict] = {}

    graphs = []
    for cable in cables:
        nodes = []
        for draft in separate_opposite_crossings(list(cable.nodes)):
            if draft.kind in CROSSING_KINDS:
                if draft.key not in crossing_ids:
                    if draft.node_id is not None:
                        node_id = draft.node_id
                    else:
                        node_id, next_node = next_node, next_node + 1
                    if draft.crossing_id is not None:
                        crossing_id = draft.crossing_id
                    else:
                        crossing_id, next_crossing = next_crossing, next_crossing + 1
                    crossing_ids[draft.key] = (node_id, crossing_id)
                node_id, crossing_id = crossing_ids[draft.key]
                rec = records.setdefault(crossing_id, {"crossing_id": crossing_id, "pos_px": draft.pos})
                rec["over" if draft.kind is NodeKind.OVER else "under"] = cable.cable_id
                nodes.append(Node(node_id=node_id, kind=draft.kind, pos_px=draft.pos, crossing_id=crossing_id))
            else:
                if draft.node_id is not None:
                    node_id = draft.node_id
                else:
                    node_id, next_node = next_node, next_node + 1
                nodes.append(Node(node_id=node_id, kind=draft.kind, pos_px=draft.pos))
        graphs.append(CableGraph(cable_id=cable.cable_id, color_name=cable.color_name, nodes=tuple(nodes)))

    registry = {}
    for cid, rec in records.items():
        if "over" not in rec or "under" not in rec:
            raise StateInvariantError(f"unpaired crossing {cid}")
        registry[cid] = CrossingRecord(**rec)
    return CableState(graphs=tuple(graphs), crossing_registry=registry)


def _as_pos(pt: Sequence[float]) -> tuple[float, float]:
    return float(pt[0]), float(pt[1])


def state_from_polylines(
    polylines: Mapping[int, np.ndarray],
    colors: Mapping[int, str],
    over_of: Callable[[int, int, tuple[float, float]], int],
    step: float = DEFAULT_STEP_PX,
    merge_radius: float = DEFAULT_MERGE_RADIUS_PX,
) -> CableState:
    """Ground-truth state from pixel polylines ordered v_free -> v_fix.

    Each polyline is resampled at ``step``; crossings between the resampled
    polylines become node pairs whose over cable is ``over_of(a, b, point)``.
    """
    cable_ids = list(polylines)
    resampled = [resample_polyline(np.asarray(polylines[c], dtype=float), step) for c in cable_ids]
    inserts: dict[int, list[tuple[int, float, DraftNode]]] = {i: [] for i in range(len(cable_ids))}
    for k, gc in enumerate(geometric_crossings(resampled, merge_radius)):
        a, b = cable_ids[gc.cable_a], cable_ids[gc.cable_b]
        over = over_of(a, b, gc.point)
        if over not in (a, b):
            raise StateInvariantError(f"over cable {over} is not part of crossing ({a}, {b})")
        kind_a = NodeKind.OVER if over == a else NodeKind.UNDER
        kind_b = NodeKind.UNDER if kind_a is NodeKind.OVER else NodeKind.OVER
        inserts[gc.cable_a].append((gc.segment_a, gc.t_a, DraftNode(gc.point, kind_a, ("x", k))))
        inserts[gc.cable_b].append((gc.segment_b, gc.t_b, DraftNode(gc.point, kind_b, ("x", k))))

    drafts = []
    for idx, cable_id in enumerate(cable_ids):
        pts = resampled[idx]
        extra = sorted(inserts[idx], key=lambda item: (item[0], item[1]))
        nodes: list[DraftNode] = []
        cursor = 0
        for seg in range(len(pts)):
            kind = NodeKind.ENDPOINT if seg in (0, len(pts) - 1) else NodeKind.REGULAR
            nodes.append(DraftNode(_as_pos(pts[seg]), kind))
            while cursor < len(extra) and extra[cursor][0] == seg:
                nodes.append(extra[cursor][2])
                cursor += 1
        drafts.append(DraftCable(cable_id, colors[cable_id], nodes))
    return assemble_state(drafts)
