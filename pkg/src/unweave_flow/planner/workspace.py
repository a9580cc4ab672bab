from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from unweave_flow.graph.cable_graph import PixelFrame

FixedEdge = Literal["left", "right", "top", "bottom"]


class Workspace(BaseModel):
    """Visible and reachable table region, world meters (y up)."""

    model_config = ConfigDict(frozen=True)

    x_min: float = 0.0
    y_min: float = 0.03
    x_max: float = 1.25
    y_max: float = 0.93
    fixed_edge: FixedEdge = "left"

    @model_validator(mode="after")
    def _non_empty(self) -> "Workspace":
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("workspace rectangle is empty")
        return self

    @classmethod
    def from_frame(cls, frame: PixelFrame, margin: float = 0.03, fixed_edge: FixedEdge = "left") -> "Workspace":
        w, h = frame.width * frame.scale, frame.height * frame.scale
        lo = {"x": margin, "y": margin}
        hi = {"x": w - margin, "y": h - margin}
        if fixed_edge == "left":
            lo["x"] = 0.0
        elif fixed_edge == "right":
            hi["x"] = w
        elif fixed_edge == "bottom":
            lo["y"] = 0.0
        else:
            hi["y"] = h
        return cls(x_min=lo["x"], y_min=lo["y"], x_max=hi["x"], y_max=hi["y"], fixed_edge=fixed_edge)

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (
            (pts[:, 0] >= self.x_min - tol)
            & (pts[:, 0] <= self.x_max + tol)
            & (pts[:, 1] >= self.y_min - tol)
            & (pts[:, 1] <= self.y_max + tol)
        )

    def edge_coordinate(self) -> tuple[str, float]:
        return {
            "left": ("x", self.x_min),
            "right": ("x", self.x_max),
            "bottom": ("y", self.y_min),
            "top": ("y", self.y_max),
        }[self.fixed_edge]

    def on_fixed_edge(self, point: np.ndarray, tol: float = 1e-6) -> bool:
        axis, value = self.edge_coordinate()
        coord = float(point[0] if axis == "x" else point[1])
        return abs(coord - value) <= tol and bool(self.contains(point, tol)[0])
