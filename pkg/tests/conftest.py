import os

import numpy as np
import pytest

os.environ.setdefault("CREWAI_DISABLE_TELEMETRY", "true")
os.environ.setdefault("OTEL_SDK_DISABLED", "true")

from unweave_flow.errors import GenerationBudgetExceededError  # noqa: E402
from unweave_flow.graph.cable_graph import PixelFrame, state_from_polylines  # noqa: E402
from unweave_flow.planner.planner import PlannerConfig  # noqa: E402
from unweave_flow.simworld.generator import ScenarioSpec, generate_world  # noqa: E402
from unweave_flow.simworld.world import CableTrack, CrossingTruth, World  # noqa: E402

FRAME = PixelFrame()

# Two straight cables forming an X at (250, 240) px; red (0) lies on top.
X_LINES = {
    0: np.array([[500.0, 360.0], [0.0, 120.0]]),
    1: np.array([[500.0, 120.0], [0.0, 360.0]]),
}
PARALLEL_LINES = {
    0: np.array([[500.0, 120.0], [0.0, 120.0]]),
    1: np.array([[500.0, 360.0], [0.0, 360.0]]),
}
COLORS = {0: "red", 1: "blue"}

CONFIGURATIONS = ((2, 2), (2, 3), (3, 3), (3, 4), (3, 5))


def track(cable_id: int, free_px, fixed_px, n: int = 100) -> CableTrack:
    """Dense straight track; an even ``n`` keeps the midpoint off the vertices."""
    pts = FRAME.to_world(np.linspace(np.asarray(free_px, float), np.asarray(fixed_px, float), n))
    return CableTrack(cable_id=cable_id, color=COLORS[cable_id], polyline=tuple(map(tuple, pts.tolist())))


def world_from_lines(lines, crossings=()) -> World:
    return World(
        cables=tuple(track(cid, line[0], line[-1]) for cid, line in lines.items()),
        crossings=tuple(crossings),
    )


def generated_worlds(n_cables: int, n_crossings: int, seeds):
    """Seeded generated worlds as (seed, world); seeds the generator gives up on are skipped."""
    for seed in seeds:
        try:
            yield seed, generate_world(ScenarioSpec(n_cables=n_cables, n_crossings=n_crossings, seed=seed))
        except GenerationBudgetExceededError:
            continue


@pytest.fixture
def x_state():
    return state_from_polylines(X_LINES, COLORS, lambda a, b, p: 0)


@pytest.fixture
def parallel_state():
    return state_from_polylines(PARALLEL_LINES, COLORS, lambda a, b, p: a)


@pytest.fixture
def x_world():
    center = tuple(FRAME.to_world(np.array([250.0, 240.0])).tolist())
    return world_from_lines(X_LINES, [CrossingTruth(cables=(0, 1), point=center, over=0)])


@pytest.fixture
def parallel_world():
    return world_from_lines(PARALLEL_LINES)


@pytest.fixture(scope="session")
def coarse_planner():
    """Default planner on a 0.1 rad grid to keep exhaustive scans quick."""
    return PlannerConfig.default().model_copy(update={"theta_grid": 0.1, "refine_step": 0.05})


@pytest.fixture
def band_mask():
    """Horizontal cable rows 237..243 spanning x 0..300 on a 640x480 canvas."""
    raster = np.zeros((480, 640), dtype=bool)
    raster[237:244, 0:301] = True
    return raster
