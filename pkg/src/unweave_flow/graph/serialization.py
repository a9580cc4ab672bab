"""YAML state documents.

Layout::

    cables:
      - cable_id: 0
        color: red
        nodes:
          - {id: 0, kind: endpoint, x: 500.0, y: 360.0}
          - {id: 7, kind: over, x: 250.0, y: 240.0, crossing_id: 0}
    crossings:
      - {id: 0, over: 0, under: 1, x: 250.0, y: 240.0}
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import yaml
from pydantic import ValidationError

from unweave_flow.errors import StateDocumentError, StateInvariantError
from unweave_flow.graph.cable_graph import (
    DEFAULT_STEP_PX,
    DEFAULT_WINDOW_PX,
    CableGraph,
    CableState,
    CrossingRecord,
    Node,
    NodeKind,
    check_spacing,
)

logger = logging.getLogger(__name__)


def state_to_dict(state: CableState) -> dict[str, Any]:
    cables = []
    for g in state.graphs:
        nodes = []
        for node in g.nodes:
            entry: dict[str, Any] = {
                "id": node.node_id,
                "kind": node.kind.value,
                "x": float(node.pos_px[0]),
                "y": float(node.pos_px[1]),
            }
            if node.crossing_id is not None:
                entry["crossing_id"] = node.crossing_id
            nodes.append(entry)
        cables.append({"cable_id": g.cable_id, "color": g.color_name, "nodes": nodes})
    crossings = [
        {"id": rec.crossing_id, "over": rec.over, "under": rec.under, "x": float(rec.pos_px[0]), "y": float(rec.pos_px[1])}
        for rec in sorted(state.crossing_registry.values(), key=lambda r: r.crossing_id)
    ]
    return {"cables": cables, "crossings": crossings}


def _invariant_message(exc: ValidationError) -> str:
    for err in exc.errors():
        ctx_error = (err.get("ctx") or {}).get("error")
        if isinstance(ctx_error, StateInvariantError):
            return str(ctx_error)
    return str(exc)


def state_from_dict(doc: Any, check_tracing: bool = True) -> CableState:
    """Build and validate a state.

    With ``check_tracing`` the document must also honor the crossing and node
    spacing of the default tracing window and step.
    """
    if not isinstance(doc, dict):
        raise StateDocumentError("state document must be a mapping with 'cables' and 'crossings'")
    try:
        graphs = []
        for cable in doc.get("cables") or []:
            nodes = tuple(
                Node(
                    node_id=int(n["id"]),
                    kind=NodeKind(n["kind"]),
                    pos_px=(float(n["x"]), float(n["y"])),
                    crossing_id=n.get("crossing_id"),
                )
                for n in cable["nodes"]
            )
            graphs.append(CableGraph(cable_id=int(cable["cable_id"]), color_name=str(cable["color"]), nodes=nodes))
        registry = {
            int(c["id"]): CrossingRecord(
                crossing_id=int(c["id"]),
                over=int(c["over"]),
                under=int(c["under"]),
                pos_px=(float(c["x"]), float(c["y"])),
            )
            for c in doc.get("crossings") or []
        }
        state = CableState(graphs=tuple(graphs), crossing_registry=registry)
        if check_tracing:
            check_spacing(state, d_w=DEFAULT_WINDOW_PX, step=DEFAULT_STEP_PX)
        return state
    except ValidationError as exc:
        raise StateDocumentError(_invariant_message(exc)) from exc
    except StateInvariantError as exc:
        raise StateDocumentError(str(exc)) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise StateDocumentError(f"malformed state document: {exc!r}") from exc


def serialize_state(state: CableState) -> str:
    return yaml.safe_dump(state_to_dict(state), sort_keys=False)


def deserialize_state(doc: str, check_tracing: bool = True) -> CableState:
    try:
        data = yaml.safe_load(doc)
    except yaml.YAMLError as exc:
        raise StateDocumentError(f"state document is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    return state_from_dict(data, check_tracing=check_tracing)


def save_state(state: CableState, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_state(state), encoding="utf-8")
    logger.debug("wrote state document %s", path)
    return path


def load_state(path: str | Path) -> CableState:
    return deserialize_state(Path(path).read_text(encoding="utf-8"))
