from __future__ import annotations

import logging
from pathlib import Path

from unweave_flow.graph.serialization import deserialize_state
from unweave_flow.harness.episode import EpisodeLog
from unweave_flow.perception.overlay import draw_action, draw_state, save_png
from unweave_flow.planner.landscape import plot_cost_landscape
from unweave_flow.planner.planner import PlannerConfig, Scene, cost_landscape, enumerate_subspaces
from unweave_flow.simworld.render import render

logger = logging.getLogger(__name__)


def render_episode(
    log: EpisodeLog,
    out_dir: str | Path,
    planner: PlannerConfig | None = None,
    landscapes: bool = False,
) -> list[Path]:
    """One annotated PNG per world of the episode; optionally a cost figure per action.

    Frame ``k`` shows the world before action ``k`` with the perceived graph and
    the chosen action drawn on top; the last frame shows the final world.
    """
    out_dir = Path(out_dir)
    planner = planner or PlannerConfig.default()
    written: list[Path] = []
    for k, world in enumerate(log.worlds):
        image = render(world).image
        record = log.records[k] if k < len(log.records) else None
        if record is not None and record.state:
            state = deserialize_state(record.state, check_tracing=False)
            image = draw_state(image, state)
            if record.geometry is not None:
                g = record.geometry
                image = draw_action(image, g.pivot_px, g.grasp_px, g.place_px)
            if landscapes and record.primitive is not None and record.action is not None:
                scene = Scene(state, planner)
                subspaces = enumerate_subspaces(state, planner, scene)
                costs = cost_landscape(state, subspaces, record.primitive, planner, scene)
                written.append(
                    plot_cost_landscape(
                        state, costs, out_dir / f"cost_{k:03d}.png", render(world).image,
                        title=f"iteration {k}: {record.primitive.value}",
                    )
                )
        written.append(save_png(image, out_dir / f"frame_{k:03d}.png"))
    logger.info("> %d frames written to %s", len(log.worlds), out_dir)
    return written
