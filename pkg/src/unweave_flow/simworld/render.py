"""Rasterize a World into the RGB image perception consumes."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import NamedTuple

import cv2
import numpy as np

from unweave_flow.palette import Palette, default_palette
from unweave_flow.perception.overlay import save_png
from unweave_flow.simworld.world import World

logger = logging.getLogger(__name__)

# Stroke widths around a crossing inside which the over cable wins overlaps.
OVERLAP_RADIUS = 4


class Rendering(NamedTuple):
    image: np.ndarray
    # cable_id -> number of pixels showing that cable
    pixel_counts: dict[int, int]
    labels: np.ndarray


def _stroke(shape: tuple[int, int], pts_px: np.ndarray, width: int) -> np.ndarray:
    raster = np.zeros(shape, dtype=np.uint8)
    pts = np.round(pts_px).astype(np.int32).reshape(-1, 1, 2)
    cv2.polylines(raster, [pts], False, 1, thickness=width, lineType=cv2.LINE_8)
    return raster.astype(bool)


def render(world: World, palette: Palette | None = None) -> Rendering:
    """Stroke every cable, then settle each crossing.

    The under cable is cleared inside a disk of radius one stroke width, and the
    over cable is repainted wherever the two strokes overlap near the crossing,
    so the over cable stays connected whatever the paint order.
    """
    palette = palette or default_palette()
    frame = world.frame
    shape = (frame.height, frame.width)
    width = world.stroke_px
    order = sorted(world.cables, key=lambda c: c.cable_id)
    strokes = {c.cable_id: _stroke(shape, frame.to_pixel(c.points()), width) for c in order}

    # 0 is background, otherwise cable_id + 1
    labels = np.zeros(shape, dtype=np.int32)
    for c in order:
        labels[strokes[c.cable_id]] = c.cable_id + 1

    yy, xx = np.mgrid[0: shape[0], 0: shape[1]]
    for x in world.crossings:
        under = x.cables[0] if x.over == x.cables[1] else x.cables[1]
        u, v = frame.to_pixel(np.asarray(x.point))
        r2 = (xx - u) ** 2 + (yy - v) ** 2
        disk = r2 <= width * width
        overlap = (r2 <= (OVERLAP_RADIUS * width) ** 2) & strokes[under]
        labels[disk & (labels == under + 1)] = 0
        labels[(disk | overlap) & strokes[x.over]] = x.over + 1

    image = np.empty(shape + (3,), dtype=np.uint8)
    image[:] = palette.background
    lut = {c.cable_id: palette.colors[c.color].rgb for c in order}
    counts = {}
    for cable_id, rgb in lut.items():
        mask = labels == cable_id + 1
        image[mask] = rgb
        counts[cable_id] = int(mask.sum())
    logger.debug("render: %d cables, %d crossings, stroke %d px", len(order), len(world.crossings), width)
    return Rendering(image, counts, labels)


def save_render(world: World, path: str | Path, palette: Palette | None = None) -> Path:
    return save_png(render(world, palette).image, path)
