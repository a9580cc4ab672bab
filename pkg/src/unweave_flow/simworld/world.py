"""Ground-truth cable world: dense world-frame polylines plus over/under truth."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from unweave_flow.errors import StateDocumentError
from unweave_flow.graph.cable_graph import (
    DEFAULT_STEP_PX,
    DEFAULT_WINDOW_PX,
    SQRT2,
    CableState,
    PixelFrame,
    state_from_polylines,
)
from unweave_flow.graph.geometry import DEFAULT_MERGE_RADIUS_PX, GeometricCrossing, geometric_crossings
from unweave_flow.perception.perception import PerceptionConfig
from unweave_flow.planner.workspace import Workspace

logger = logging.getLogger(__name__)

Point = tuple[float, float]


class CableTrack(BaseModel):
    """One cable as a dense polyline in meters, ordered v_free -> v_fix."""

    model_config = ConfigDict(frozen=True)

    cable_id: int
    color: str
    polyline: tuple[Point, ...] = Field(min_length=2)

    def points(self) -> np.ndarray:
        return np.asarray(self.polyline, dtype=float)

    @property
    def fixed(self) -> Point:
        return self.polyline[-1]

    @property
    def free(self) -> Point:
        return self.polyline[0]


class CrossingTruth(BaseModel):
    model_config = ConfigDict(frozen=True)

    cables: tuple[int, int]
    point: Point
    over: int

    @model_validator(mode="after")
    def _over_is_member(self) -> "CrossingTruth":
        if self.cables[0] == self.cables[1]:
            raise ValueError("a crossing needs two distinct cables")
        if self.over not in self.cables:
            raise ValueError(f"over cable {self.over} is not one of {self.cables}")
        return self


class World(BaseModel):
    model_config = ConfigDict(frozen=True)

    cables: tuple[CableTrack, ...]
    crossings: tuple[CrossingTruth, ...] = ()
    workspace: Workspace = Field(default_factory=Workspace)
    frame: PixelFrame = Field(default_factory=PixelFrame)
    width_m: float = Field(default=0.012, gt=0)
    # Spacing or geometry problems introduced by execution; never repaired.
    violations: tuple[str, ...] = ()

    @model_validator(mode="after")
    def _check(self) -> "World":
        ids = [c.cable_id for c in self.cables]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate cable id in {ids}")
        for cable in self.cables:
            if not self.workspace.on_fixed_edge(np.asarray(cable.fixed)):
                raise ValueError(f"cable {cable.cable_id}: fixed endpoint {cable.fixed} is not on the {self.workspace.fixed_edge} edge")
        known = set(ids)
        for x in self.crossings:
            if not set(x.cables) <= known:
                raise ValueError(f"crossing {x.cables} names an unknown cable")
        return self

    def cable(self, cable_id: int) -> CableTrack:
        for c in self.cables:
            if c.cable_id == cable_id:
                return c
        raise KeyError(f"no cable {cable_id}")

    @property
    def stroke_px(self) -> int:
        return max(1, int(round(self.width_m / self.frame.scale)))

    def polylines(self) -> dict[int, np.ndarray]:
        return {c.cable_id: c.points() for c in self.cables}

    def over_of(self, a: int, b: int, point: Point) -> int:
        """Over cable of the recorded crossing of ``a`` and ``b`` nearest ``point`` (meters)."""
        pair = {a, b}
        candidates = [x for x in self.crossings if set(x.cables) == pair]
        if not candidates:
            raise KeyError(f"no recorded crossing between cables {a} and {b}")
        return min(candidates, key=lambda x: math.dist(x.point, point)).over

    def geometric(self) -> list[GeometricCrossing]:
        """Geometric crossings of the dense polylines, indices mapped to cable ids."""
        ids = [c.cable_id for c in self.cables]
        merge = DEFAULT_MERGE_RADIUS_PX * self.frame.scale
        return [
            gc._replace(cable_a=ids[gc.cable_a], cable_b=ids[gc.cable_b])
            for gc in geometric_crossings([c.points() for c in self.cables], merge)
        ]

    def crossing_count(self) -> int:
        return len(self.geometric())

    def fixed_endpoints_px(self) -> dict[str, tuple[float, float]]:
        out = {}
        for cable in sorted(self.cables, key=lambda c: c.cable_id):
            px = self.frame.to_pixel(np.asarray(cable.fixed))
            out[cable.color] = (float(px[0]), float(px[1]))
        return out

    def perception_config(self, base: PerceptionConfig | None = None) -> PerceptionConfig:
        """``base`` with this world's fixed endpoints, in cable-id order."""
        base = base or PerceptionConfig.default()
        return base.model_copy(update={"fixed_endpoints": self.fixed_endpoints_px()})

    @classmethod
    def from_state(
        cls, state: CableState, frame: PixelFrame | None = None, workspace: Workspace | None = None, width_m: float = 0.012
    ) -> "World":
        """World whose cables follow the state's node polylines."""
        frame = frame or PixelFrame()
        cables = []
        for g in state.graphs:
            pts = frame.to_world(g.positions())
            cables.append(CableTrack(cable_id=g.cable_id, color=g.color_name, polyline=tuple(map(tuple, pts.tolist()))))
        crossings = []
        for rec in state.crossing_registry.values():
            pt = frame.to_world(np.asarray(rec.pos_px))
            crossings.append(
                CrossingTruth(cables=(rec.over, rec.under), point=(float(pt[0]), float(pt[1])), over=rec.over)
            )
        return cls(
            cables=tuple(cables),
            crossings=tuple(crossings),
            workspace=workspace or Workspace.from_frame(frame),
            frame=frame,
            width_m=width_m,
        )


def state_from_world(world: World, step_px: float = DEFAULT_STEP_PX) -> CableState:
    """Ground-truth CableState of ``world`` at the tracing resolution."""
    frame = world.frame
    polylines = {c.cable_id: frame.to_pixel(c.points()) for c in sorted(world.cables, key=lambda c: c.cable_id)}
    colors = {c.cable_id: c.color for c in world.cables}

    def over_of(a: int, b: int, point_px: tuple[float, float]) -> int:
        return world.over_of(a, b, tuple(frame.to_world(np.asarray(point_px)).tolist()))

    return state_from_polylines(polylines, colors, over_of, step=step_px)


def world_violations(
    world: World,
    d_w_px: float = DEFAULT_WINDOW_PX,
    spacing_factor: float = 1.0,
    min_crossing_angle: float = math.radians(30.0),
) -> list[str]:
    """Problems that would break tracing: clustered crossings, shallow crossings,
    crossings near endpoints and crossings with no over/under record."""
    s = world.frame.scale
    limit = SQRT2 * d_w_px * s
    problems: list[str] = []
    found = world.geometric()
    for i, a in enumerate(found):
        for b in found[i + 1:]:
            if math.dist(a.point, b.point) < spacing_factor * limit:
                problems.append(f"crossings too close at {_fmt(a.point)} and {_fmt(b.point)}")
    lines = world.polylines()
    endpoints = [np.asarray(c.free) for c in world.cables] + [np.asarray(c.fixed) for c in world.cables]
    for x in found:
        pa, pb = lines[x.cable_a], lines[x.cable_b]
        da = pa[x.segment_a + 1] - pa[x.segment_a]
        db = pb[x.segment_b + 1] - pb[x.segment_b]
        angle = math.acos(min(1.0, abs(float(da @ db)) / max(float(np.linalg.norm(da) * np.linalg.norm(db)), 1e-300)))
        if angle < min_crossing_angle:
            problems.append(f"shallow crossing ({math.degrees(angle):.1f} deg) at {_fmt(x.point)}")
        if any(math.dist(x.point, e) < limit for e in endpoints):
            problems.append(f"crossing at {_fmt(x.point)} is too close to an endpoint")
        if not any(set(t.cables) == {x.cable_a, x.cable_b} for t in world.crossings):
            problems.append(f"crossing at {_fmt(x.point)} has no over/under record")
    return problems


def _fmt(pt: Point) -> str:
    return f"({pt[0]:.3f}, {pt[1]:.3f})"


def world_to_dict(world: World) -> dict[str, Any]:
    return {
        "frame": world.frame.model_dump(),
        "workspace": world.workspace.model_dump(),
        "width_m": world.width_m,
        "cables": [
            {"cable_id": c.cable_id, "color": c.color, "polyline": [[x, y] for x, y in c.polyline]}
            for c in world.cables
        ],
        "crossings": [{"cables": list(x.cables), "point": list(x.point), "over": x.over} for x in world.crossings],
        "violations": list(world.violations),
    }


def world_from_dict(data: dict[str, Any]) -> World:
    try:
        return World.model_validate(data)
    except ValidationError as exc:
        raise StateDocumentError(f"invalid world document: {exc}") from exc


def save_world(world: World, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(world_to_dict(world), fh, sort_keys=False)
    return path


def load_world(path: str | Path) -> World:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise StateDocumentError(f"{path}: not a YAML document: {exc}") from exc
    if not isinstance(data, dict):
        raise StateDocumentError(f"{path}: expected a mapping at the top level")
    return world_from_dict(data)
