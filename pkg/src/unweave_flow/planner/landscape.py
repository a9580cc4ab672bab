from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from unweave_flow.graph.cable_graph import CableState  # noqa: E402

logger = logging.getLogger(__name__)


def plot_cost_landscape(
    state: CableState,
    costs: Mapping[int, float],
    path: str | Path,
    image: np.ndarray | None = None,
    title: str | None = None,
) -> Path:
    """Color every graspable node by its best cost over the image; lower is better."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=100)
    try:
        if image is not None:
            ax.imshow(image)
        for graph in state.graphs:
            pos = graph.positions()
            ax.plot(pos[:, 0], pos[:, 1], color="0.3", linewidth=0.8)
        ids = [nid for nid in costs]
        if ids:
            pts = np.array([_node_position(state, nid) for nid in ids])
            values = np.array([costs[nid] for nid in ids])
            sc = ax.scatter(pts[:, 0], pts[:, 1], c=values, cmap="viridis_r", s=30, zorder=3)
            fig.colorbar(sc, ax=ax, label="cost")
        ax.set_xlim(0, state_width(state, image))
        ax.set_ylim(state_height(state, image), 0)
        ax.set_aspect("equal")
        if title:
            ax.set_title(title)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, bbox_inches="tight")
    finally:
        plt.close(fig)
    logger.debug("cost landscape with %d nodes written to %s", len(costs), path)
    return path


def _node_position(state: CableState, node_id: int) -> tuple[float, float]:
    graph, idx = state.find_node(node_id)
    return graph.nodes[idx].pos_px


def state_width(state: CableState, image: np.ndarray | None) -> float:
    if image is not None:
        return float(image.shape[1])
    return max(float(g.positions()[:, 0].max()) for g in state.graphs) + 20.0


def state_height(state: CableState, image: np.ndarray | None) -> float:
    if image is not None:
        return float(image.shape[0])
    return max(float(g.positions()[:, 1].max()) for g in state.graphs) + 20.0
