"""Seeded scenario generation by rejection sampling.

Cables hang off the fixed edge as smoothed random walks in heading. A draw is
kept only if it has exactly the requested number of crossings and every
crossing is easy to trace: well separated, steep enough, away from the
endpoints, with no near-misses between cables elsewhere.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import ClassVar, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.interpolate import CubicSpline

from unweave_flow.errors import DegenerateOverlapError, GenerationBudgetExceededError
from unweave_flow.graph.cable_graph import DEFAULT_WINDOW_PX, SQRT2, PixelFrame
from unweave_flow.palette import Palette, default_palette
from unweave_flow.planner.workspace import Workspace
from unweave_flow.settings import YamlConfig
from unweave_flow.simworld.world import CableTrack, CrossingTruth, World, world_violations

logger = logging.getLogger(__name__)

Stiffness = Literal["electric", "shoelace", "ideal"]


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_cables: int = Field(default=2, ge=1)
    n_crossings: int = Field(default=2, ge=0)
    seed: int = 0
    length_range: tuple[float, float] = (0.6, 0.9)
    stiffness: Stiffness = "shoelace"

    @model_validator(mode="after")
    def _consistent(self) -> "ScenarioSpec":
        lo, hi = self.length_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad length range {self.length_range}")
        if self.n_cables < 2 and self.n_crossings > 0:
            raise ValueError("crossings need at least two cables")
        return self


class GeneratorConfig(YamlConfig):
    default_path: ClassVar[Path] = Path(__file__).parent / "config" / "generator.yaml"

    model_config = ConfigDict(frozen=True)

    vertex_spacing: float = Field(default=0.004, gt=0)
    width_m: float = Field(default=0.012, gt=0)
    knot_spacing: float = Field(default=0.15, gt=0)
    heading_sigma: float = Field(default=0.45, ge=0)
    heading_sigma_growth: float = Field(default=0.08, ge=0)
    max_heading: float = Field(default=1.2, gt=0, lt=math.pi / 2)
    crossing_spacing_factor: float = Field(default=1.3, ge=1.0)
    min_crossing_angle_deg: float = Field(default=35.0, gt=0, le=90)
    approach_strokes: float = Field(default=2.0, ge=0)
    crossing_clearance: float = Field(default=0.05, ge=0)
    max_attempts: int = Field(default=5000, ge=1)


def _walk(
    rng: np.random.Generator, start: np.ndarray, length: float, cfg: GeneratorConfig
) -> np.ndarray:
    """Dense polyline from ``start`` heading into the workspace; ordered v_fix -> v_free."""
    n_knots = max(2, math.ceil(length / cfg.knot_spacing) + 1)
    sigmas = cfg.heading_sigma + cfg.heading_sigma_growth * np.arange(n_knots)
    knots = np.clip(rng.normal(0.0, sigmas), -cfg.max_heading, cfg.max_heading)
    knots[0] = 0.0
    spline = CubicSpline(np.arange(n_knots) * cfg.knot_spacing, knots, bc_type="natural")
    n = max(2, math.ceil(length / cfg.vertex_spacing))
    s = np.linspace(0.0, length, n + 1)
    heading = np.clip(spline(s[:-1]), -cfg.max_heading, cfg.max_heading)
    ds = np.diff(s)
    steps = np.column_stack([np.cos(heading) * ds, np.sin(heading) * ds])
    return np.vstack([start, start + np.cumsum(steps, axis=0)])


def _fixed_points(spec: ScenarioSpec, workspace: Workspace, frame: PixelFrame) -> list[np.ndarray]:
    height = frame.height * frame.scale
    x = workspace.edge_coordinate()[1]
    return [np.array([x, height * (i + 1) / (spec.n_cables + 1)]) for i in range(spec.n_cables)]


def _approaches_ok(world: World, cfg: GeneratorConfig) -> bool:
    lines = world.polylines()
    points = [np.asarray(x.point) for x in world.geometric()]
    clearance = cfg.approach_strokes * cfg.width_m
    ids = sorted(lines)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            pa, pb = lines[a], lines[b]
            keep_a = _away_from(pa, points, cfg.crossing_clearance)
            keep_b = _away_from(pb, points, cfg.crossing_clearance)
            if not keep_a.any() or not keep_b.any():
                continue
            diff = pa[keep_a][:, None, :] - pb[keep_b][None, :, :]
            if float(np.sqrt(np.min(np.einsum("ijk,ijk->ij", diff, diff)))) < clearance:
                return False
    return True


def _away_from(line: np.ndarray, points: list[np.ndarray], radius: float) -> np.ndarray:
    keep = np.ones(len(line), dtype=bool)
    for p in points:
        keep &= np.linalg.norm(line - p, axis=1) > radius
    return keep


def _free_ends_clear(world: World, limit: float) -> bool:
    lines = world.polylines()
    for cable in world.cables:
        tip = np.asarray(cable.free)
        for other, pts in lines.items():
            if other != cable.cable_id and float(np.min(np.linalg.norm(pts - tip, axis=1))) < limit:
                return False
    return True


def _default_over(world: World, rng: np.random.Generator) -> tuple[CrossingTruth, ...]:
    return tuple(
        CrossingTruth(cables=(gc.cable_a, gc.cable_b), point=gc.point, over=int(rng.choice([gc.cable_a, gc.cable_b])))
        for gc in world.geometric()
    )


def generate_world(
    spec: ScenarioSpec,
    cfg: GeneratorConfig | None = None,
    palette: Palette | None = None,
    frame: PixelFrame | None = None,
    workspace: Workspace | None = None,
) -> World:
    """Draw a world matching ``spec``; deterministic per seed."""
    cfg = cfg or GeneratorConfig.default()
    palette = palette or default_palette()
    frame = frame or PixelFrame()
    workspace = workspace or Workspace.from_frame(frame)
    rng = np.random.default_rng(spec.seed)
    starts = _fixed_points(spec, workspace, frame)
    colors = [palette.color_for(i) for i in range(spec.n_cables)]
    limit = SQRT2 * DEFAULT_WINDOW_PX * frame.scale

    for attempt in range(1, cfg.max_attempts + 1):
        cables = []
        for i, start in enumerate(starts):
            length = float(rng.uniform(*spec.length_range))
            line = _walk(rng, start, length, cfg)
            cables.append(CableTrack(cable_id=i, color=colors[i], polyline=tuple(map(tuple, line[::-1].tolist()))))
        if not all(workspace.contains(c.points()).all() for c in cables):
            continue
        world = World(cables=tuple(cables), workspace=workspace, frame=frame, width_m=cfg.width_m)
        try:
            count = world.crossing_count()
        except DegenerateOverlapError:
            continue
        if count != spec.n_crossings:
            continue
        world = world.model_copy(update={"crossings": _default_over(world, rng)})
        problems = world_violations(
            world,
            spacing_factor=cfg.crossing_spacing_factor,
            min_crossing_angle=math.radians(cfg.min_crossing_angle_deg),
        )
        if problems or not _free_ends_clear(world, limit) or not _approaches_ok(world, cfg):
            continue
        logger.debug("generate_world: seed %d accepted after %d attempts", spec.seed, attempt)
        return world
    raise GenerationBudgetExceededError(
        f"generation budget exceeded: no ({spec.n_cables}, {spec.n_crossings}) world in {cfg.max_attempts} attempts (seed {spec.seed})"
    )
