"""Simulated execution of a pick-pivot-place action on a World.

The executor reuses the transition model's straighten-rotate-place kernel on the
tracing-resolution polyline, then adds the configured reality gap: part of the old
tail shape survives (elasticity) and every moved vertex is jittered.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import ClassVar

import numpy as np
from pydantic import ConfigDict, Field

from unweave_flow.graph.cable_graph import DEFAULT_STEP_PX
from unweave_flow.graph.geometry import cumulative_length, points_at_lengths, polyline_length, resample_polyline
from unweave_flow.settings import YamlConfig, read_yaml
from unweave_flow.simworld.world import CableTrack, CrossingTruth, World, world_violations
from unweave_flow.transition.transition import ActionGeometry, TransitionConfig, deform

logger = logging.getLogger(__name__)

PRESETS_PATH = Path(__file__).parent / "config" / "presets.yaml"


class PhysicsConfig(YamlConfig):
    default_path: ClassVar[Path] = PRESETS_PATH
    section: ClassVar[str] = "ideal"

    model_config = ConfigDict(frozen=True)

    noise_sigma: float = Field(default=0.0, ge=0, description="per-vertex jitter, meters")
    elasticity_bleed: float = Field(default=0.0, ge=0, le=1)

    @classmethod
    def preset(cls, name: str) -> "PhysicsConfig":
        presets = read_yaml(PRESETS_PATH)
        if name not in presets:
            raise ValueError(f"unknown physics preset {name!r}; expected one of {sorted(presets)}")
        return cls.model_validate(presets[name])

    @property
    def is_ideal(self) -> bool:
        return self.noise_sigma == 0.0 and self.elasticity_bleed == 0.0


def preset_names() -> list[str]:
    return list(read_yaml(PRESETS_PATH))


def _insert_vertex(points: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, int]:
    """Split ``points`` at the point closest to ``target``; returns the new polyline and its index."""
    a = points[:-1]
    d = points[1:] - a
    dd = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", target - a, d) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
    closest = a + t[:, None] * d
    i = int(np.argmin(np.linalg.norm(closest - target, axis=1)))
    if t[i] <= 1e-9:
        return points, i
    if t[i] >= 1.0 - 1e-9:
        return points, i + 1
    return np.insert(points, i + 1, closest[i], axis=0), i + 1


def _blend_tail(
    moved: np.ndarray, place_index: int, old_tail: np.ndarray, l_tail: float, bleed: float
) -> np.ndarray:
    """Mix the straight tail with the old tail (translated onto the place point) by arc length."""
    if bleed == 0.0 or place_index == 0:
        return moved
    place = moved[place_index]
    exact = moved[place_index::-1]
    shifted = old_tail[::-1] + (place - old_tail[-1])
    s = cumulative_length(exact)
    blended = (1.0 - bleed) * exact + bleed * points_at_lengths(shifted, s)
    length = polyline_length(blended)
    if length > 0.0:
        blended = place + (blended - place) * (l_tail / length)
    out = moved.copy()
    out[: place_index + 1] = blended[::-1]
    out[place_index] = place
    return out


def _rederive_crossings(world: World, new_lines: dict[int, np.ndarray], acted: int, n_moved: int) -> list[CrossingTruth]:
    moved_world = world.model_copy(
        update={
            "cables": tuple(
                c.model_copy(update={"polyline": tuple(map(tuple, new_lines[c.cable_id].tolist()))})
                for c in world.cables
            )
        }
    )
    out = []
    for gc in moved_world.geometric():
        pair = (gc.cable_a, gc.cable_b)
        if acted in pair:
            seg = gc.segment_a if gc.cable_a == acted else gc.segment_b
            if seg < n_moved:
                out.append(CrossingTruth(cables=pair, point=gc.point, over=acted))
                continue
        previous = [x for x in world.crossings if set(x.cables) == set(pair)]
        if previous:
            over = min(previous, key=lambda x: math.dist(x.point, gc.point)).over
        else:
            over = min(pair)
        out.append(CrossingTruth(cables=pair, point=gc.point, over=over))
    return out


def traced_lines(world: World, step_px: float = DEFAULT_STEP_PX) -> dict[int, np.ndarray]:
    """World-frame polylines resampled the way ``state_from_world`` resamples them."""
    frame = world.frame
    return {
        c.cable_id: frame.to_world(resample_polyline(frame.to_pixel(c.points()), step_px))
        for c in world.cables
    }


def execute(
    world: World,
    geometry: ActionGeometry,
    physics: PhysicsConfig | None = None,
    transition: TransitionConfig | None = None,
    rng: np.random.Generator | None = None,
) -> World:
    """Carry out ``geometry`` on ``world`` and return the resulting world.

    Every cable is first brought to tracing resolution, so the acted cable is
    deformed on the same polyline the transition model sees. The returned
    tracks keep that resolution. Never raises on physically odd outcomes:
    clustered or shallow crossings end up in ``World.violations``.
    """
    physics = physics or PhysicsConfig()
    transition = transition or TransitionConfig.default()
    rng = rng or np.random.default_rng(0)
    cable = world.cable(geometry.cable_id)
    new_lines = traced_lines(world)
    points = new_lines[cable.cable_id]

    points, c_idx = _insert_vertex(points, np.asarray(geometry.pivot_world))
    head, g_idx = _insert_vertex(points[: c_idx + 1], np.asarray(geometry.grasp_world))
    points = np.vstack([head, points[c_idx + 1:]])
    c_idx = len(head) - 1
    g_idx = min(max(g_idx, 1), c_idx - 1)

    d = deform(points, g_idx, c_idx, geometry.theta, transition.k, transition.resample_step)
    moved = _blend_tail(d.moved, d.place_index, points[: g_idx + 1], d.l_tail, physics.elasticity_bleed)
    if physics.noise_sigma > 0.0:
        moved = moved + rng.normal(0.0, physics.noise_sigma, size=moved.shape)

    new_lines[cable.cable_id] = np.vstack([moved, points[c_idx:]])
    crossings = _rederive_crossings(world, new_lines, cable.cable_id, len(moved))
    cables = tuple(
        c.model_copy(update={"polyline": tuple(map(tuple, new_lines[c.cable_id].tolist()))}) for c in world.cables
    )
    result = World(
        cables=cables,
        crossings=tuple(crossings),
        workspace=world.workspace,
        frame=world.frame,
        width_m=world.width_m,
    )
    violations = world_violations(result)
    logger.debug(
        "execute: cable %d theta %.3f %s branch -> %d crossings, %d violations",
        cable.cable_id, geometry.theta, d.branch, len(crossings), len(violations),
    )
    return result.model_copy(update={"violations": tuple(violations)})


def track_length(track: CableTrack) -> float:
    return polyline_length(track.points())
