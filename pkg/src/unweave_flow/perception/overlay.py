"""Annotated overlays: traced graphs drawn on top of the source image."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from unweave_flow.graph.cable_graph import CableState, NodeKind

# RGB
KIND_COLORS: dict[NodeKind, tuple[int, int, int]] = {
    NodeKind.ENDPOINT: (0, 0, 0),
    NodeKind.REGULAR: (255, 255, 255),
    NodeKind.OVER: (0, 200, 0),
    NodeKind.UNDER: (200, 0, 200),
}


def draw_state(image: np.ndarray, state: CableState, radius: int = 4) -> np.ndarray:
    out = np.ascontiguousarray(image.copy())
    for g in state.graphs:
        pts = np.round(g.positions()).astype(np.int32)
        cv2.polylines(out, [pts.reshape(-1, 1, 2)], False, (60, 60, 60), 1, cv2.LINE_AA)
        for node in g.nodes:
            center = (int(round(node.pos_px[0])), int(round(node.pos_px[1])))
            cv2.circle(out, center, radius, KIND_COLORS[node.kind], -1, cv2.LINE_AA)
            cv2.circle(out, center, radius, (40, 40, 40), 1, cv2.LINE_AA)
    return out


def draw_action(
    image: np.ndarray,
    pivot_px: tuple[float, float],
    grasp_px: tuple[float, float],
    place_px: tuple[float, float],
) -> np.ndarray:
    """Pivot (square), grasp (ring) and an arrow from the grasp to the place point."""
    out = np.ascontiguousarray(image.copy())
    c = tuple(int(round(v)) for v in pivot_px)
    g = tuple(int(round(v)) for v in grasp_px)
    p = tuple(int(round(v)) for v in place_px)
    cv2.rectangle(out, (c[0] - 5, c[1] - 5), (c[0] + 5, c[1] + 5), (255, 140, 0), 2)
    cv2.circle(out, g, 7, (255, 140, 0), 2, cv2.LINE_AA)
    cv2.arrowedLine(out, g, p, (255, 140, 0), 2, cv2.LINE_AA, tipLength=0.08)
    cv2.drawMarker(out, p, (255, 140, 0), cv2.MARKER_CROSS, 12, 2)
    return out


def save_png(image: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cv2.imwrite(str(path), cv2.cvtColor(image, cv2.COLOR_RGB2BGR))
    return path
