"""Image -> CableState.

Colour segmentation, sliding-window tracing from the fixed end, node typing
by counting mask islands in each window, and over-crossing refinement.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import ClassVar, NamedTuple, Sequence

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from unweave_flow.errors import (
    CableNotVisibleError,
    CableTooShortError,
    EmptyWindowError,
    OrphanUndercrossingError,
    PerceptionError,
    StateInvariantError,
    TraceBrokeError,
    TraceRunawayError,
)
from unweave_flow.graph.cable_graph import (
    SQRT2,
    CableState,
    DraftCable,
    DraftNode,
    NodeKind,
    assemble_state,
    check_spacing,
)
from unweave_flow.graph.geometry import point_polyline_distance
from unweave_flow.palette import Palette, default_palette
from unweave_flow.settings import YamlConfig

logger = logging.getLogger(__name__)


class PerceptionConfig(YamlConfig):
    default_path: ClassVar[Path] = Path(__file__).parent / "config" / "perception.yaml"

    model_config = ConfigDict(frozen=True)

    d_w: float = Field(default=35.0, gt=0, description="window width in pixels")
    step: float = Field(default=17.0, gt=0, description="slide step in pixels")
    min_component_px: int = Field(default=20, ge=0)
    min_island_px: int = Field(default=4, ge=1)
    tip_band_px: float = Field(default=3.0, gt=0)
    color_palette: Palette = Field(default_factory=default_palette)
    # Colour name -> pixel position of v_fix; insertion order fixes cable ids.
    fixed_endpoints: dict[str, tuple[float, float]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self) -> "PerceptionConfig":
        if self.step > self.d_w:
            raise ValueError("step must not exceed the window width d_w")
        unknown = set(self.fixed_endpoints) - set(self.color_palette.colors)
        if unknown:
            raise ValueError(f"fixed endpoints name colours missing from the palette: {sorted(unknown)}")
        return self

    def scene_palette(self) -> Palette:
        if not self.fixed_endpoints:
            return self.color_palette
        return self.color_palette.restricted(list(self.fixed_endpoints))


class CableMask(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cable_id: int
    color_name: str
    raster: np.ndarray
    pixel_count: int

    @model_validator(mode="after")
    def _check(self) -> "CableMask":
        if self.raster.ndim != 2:
            raise ValueError("mask raster must be two-dimensional")
        if int(np.count_nonzero(self.raster)) != self.pixel_count:
            raise ValueError("pixel_count does not match the raster")
        return self

    @classmethod
    def from_raster(cls, cable_id: int, color_name: str, raster: np.ndarray) -> "CableMask":
        binary = np.asarray(raster).astype(bool)
        return cls(cable_id=cable_id, color_name=color_name, raster=binary, pixel_count=int(binary.sum()))


class TraceWindow(BaseModel):
    """Square window of side ``width`` centred on ``center_px`` with one side facing ``heading``."""

    model_config = ConfigDict(frozen=True)

    center_px: tuple[float, float]
    width: float = Field(default=35.0, gt=0)
    heading: tuple[float, float] = (1.0, 0.0)

    @model_validator(mode="after")
    def _unit_heading(self) -> "TraceWindow":
        if abs(math.hypot(*self.heading) - 1.0) > 1e-9:
            raise ValueError("window heading must be a unit vector")
        return self

    @classmethod
    def toward(cls, center: Sequence[float], width: float, direction: Sequence[float]) -> "TraceWindow":
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return cls(center_px=(float(center[0]), float(center[1])), width=width, heading=(float(d[0]), float(d[1])))

    def advanced(self, distance: float) -> "TraceWindow":
        cx, cy = self.center_px
        hx, hy = self.heading
        return self.model_copy(update={"center_px": (cx + distance * hx, cy + distance * hy)})

    def local(self, points: np.ndarray) -> np.ndarray:
        """(along, across) coordinates of pixel ``points`` relative to the window centre."""
        h = np.asarray(self.heading)
        normal = np.array([-h[1], h[0]])
        rel = np.asarray(points, dtype=float) - np.asarray(self.center_px)
        return np.stack([rel @ h, rel @ normal], axis=-1)

    def bounds(self, shape: tuple[int, ...]) -> tuple[int, int, int, int]:
        """Clipped ``(x0, x1, y0, y1)`` of the axis-aligned box around the window."""
        hx, hy = self.heading
        reach = self.width / 2.0 * (abs(hx) + abs(hy))
        cx, cy = self.center_px
        h, w = shape[:2]
        x0, x1 = int(math.floor(cx - reach)), int(math.ceil(cx + reach)) + 1
        y0, y1 = int(math.floor(cy - reach)), int(math.ceil(cy + reach)) + 1
        return max(x0, 0), min(x1, w), max(y0, 0), min(y1, h)


class _Island(NamedTuple):
    points: np.ndarray  # (n, 2) pixel (x, y)
    sides: frozenset[str]  # window sides touched: back, front, left, right

    @property
    def edges(self) -> int:
        return len(self.sides)

    @property
    def leaves(self) -> bool:
        """The cable runs on past the window."""
        return bool(self.sides & {"front", "left", "right"})


class _WindowView(NamedTuple):
    islands: list[_Island]

    def points(self) -> np.ndarray:
        return np.vstack([isl.points for isl in self.islands])

    def nearest(self, anchor: np.ndarray) -> int:
        return min(
            range(len(self.islands)),
            key=lambda k: float(np.min(np.linalg.norm(self.islands[k].points - anchor, axis=1))),
        )


def remove_small_components(binary: np.ndarray, min_px: int) -> np.ndarray:
    n, labels, stats, _ = cv2.connectedComponentsWithStats(binary.astype(np.uint8), connectivity=8)
    keep = stats[:, cv2.CC_STAT_AREA] >= min_px
    keep[0] = False
    return keep[labels]


def segment_by_color(image: np.ndarray, palette: Palette, min_component_px: int = 20) -> list[CableMask]:
    """One mask per palette colour; the first colour claims ambiguous pixels."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an RGB image, got shape {image.shape}")
    hsv = cv2.cvtColor(np.ascontiguousarray(image, dtype=np.uint8), cv2.COLOR_RGB2HSV)
    claimed = np.zeros(image.shape[:2], dtype=bool)
    masks = []
    for cable_id, (name, spec) in enumerate(palette.colors.items()):
        raw = np.zeros(image.shape[:2], dtype=np.uint8)
        for lower, upper in spec.hsv:
            raw |= cv2.inRange(hsv, np.array(lower, dtype=np.uint8), np.array(upper, dtype=np.uint8))
        binary = remove_small_components((raw > 0) & ~claimed, min_component_px)
        if not binary.any():
            raise CableNotVisibleError(f"cable not visible: {name}")
        claimed |= binary
        masks.append(CableMask.from_raster(cable_id, name, binary))
        logger.debug("segment_by_color: %s has %d pixels", name, masks[-1].pixel_count)
    return masks


def _inspect(mask: CableMask, window: TraceWindow, cfg: PerceptionConfig) -> _WindowView:
    x0, x1, y0, y1 = window.bounds(mask.raster.shape)
    if x1 <= x0 or y1 <= y0:
        return _WindowView([])
    ys, xs = np.mgrid[y0:y1, x0:x1]
    local = window.local(np.stack([xs, ys], axis=-1))
    half = window.width / 2.0
    inside = (np.abs(local[..., 0]) <= half) & (np.abs(local[..., 1]) <= half)
    crop = (mask.raster[y0:y1, x0:x1] & inside).astype(np.uint8)
    n, labels, stats, _ = cv2.connectedComponentsWithStats(crop, connectivity=8)
    band = half - 1.0
    islands = []
    for lab in range(1, n):
        if stats[lab, cv2.CC_STAT_AREA] < cfg.min_island_px:
            continue
        member = labels == lab
        along, across = local[member][:, 0], local[member][:, 1]
        touched = {
            "back": along.min() <= -band,
            "front": along.max() >= band,
            "right": across.min() <= -band,
            "left": across.max() >= band,
        }
        points = np.column_stack([xs[member], ys[member]]).astype(float)
        islands.append(_Island(points, frozenset(side for side, hit in touched.items() if hit)))
    return _WindowView(islands)


def classify_window(mask: CableMask, window: TraceWindow, cfg: PerceptionConfig) -> NodeKind:
    """Island-count node typing; raises EmptyWindowError when the window holds no cable."""
    view = _inspect(mask, window, cfg)
    if not view.islands:
        raise EmptyWindowError(f"empty window at ({window.center_px[0]:.1f}, {window.center_px[1]:.1f})")
    if len(view.islands) >= 2:
        return NodeKind.UNDER
    if view.islands[0].edges >= 2:
        return NodeKind.REGULAR
    ahead = _inspect(mask, window.advanced(window.width / 2.0), cfg)
    return NodeKind.ENDPOINT if len(ahead.islands) <= 1 else NodeKind.UNDER


def _principal_axis(points: np.ndarray, previous: np.ndarray | None) -> np.ndarray | None:
    if len(points) < 2:
        return previous
    centered = points - points.mean(axis=0)
    evals, evecs = np.linalg.eigh(centered.T @ centered)
    if evals[-1] <= 0.0:
        return previous
    axis = evecs[:, int(np.argmax(evals))]
    if previous is not None and float(axis @ previous) < 0.0:
        axis = -axis
    return axis / np.linalg.norm(axis)


class _Gap(NamedTuple):
    midpoint: np.ndarray
    beyond: np.ndarray  # where the cable resumes past the gap
    far: np.ndarray


def _gap(view: _WindowView, near_idx: int) -> _Gap:
    """The occluded gap between island ``near_idx`` and the closest other island.

    Pairs within a pixel of the closest distance are averaged, which centres
    the midpoint across the cable's width.
    """
    near = view.islands[near_idx].points
    best = None
    for k, isl in enumerate(view.islands):
        if k == near_idx:
            continue
        dist = np.linalg.norm(near[:, None, :] - isl.points[None, :, :], axis=-1)
        if best is None or dist.min() < best[0].min():
            best = (dist, isl.points)
    dist, far = best
    ii, jj = np.nonzero(dist <= dist.min() + 1.0)
    return _Gap(((near[ii] + far[jj]) / 2.0).mean(axis=0), far[jj].mean(axis=0), far)


def _tip(points: np.ndarray, heading: np.ndarray, band: float) -> np.ndarray:
    proj = points @ heading
    return points[proj >= proj.max() - band].mean(axis=0)


def _pos(pt: np.ndarray) -> tuple[float, float]:
    return float(pt[0]), float(pt[1])


def densify(nodes: list[DraftNode], max_gap: float, step: float) -> list[DraftNode]:
    """Insert chord nodes wherever consecutive nodes are further apart than ``max_gap``."""
    out = [nodes[0]]
    for prev, node in zip(nodes, nodes[1:]):
        a, b = np.asarray(prev.pos), np.asarray(node.pos)
        gap = float(np.linalg.norm(b - a))
        if gap > max_gap:
            k = math.ceil(gap / step)
            for i in range(1, k):
                out.append(DraftNode(_pos(a + (b - a) * i / k), NodeKind.REGULAR))
        out.append(node)
    return out


def trace_cable(mask: CableMask, fixed_endpoint: Sequence[float], cfg: PerceptionConfig) -> list[DraftNode]:
    """Slide a window from v_fix to the free end; returns nodes ordered v_free -> v_fix.

    Each window faces the current heading and starts half a pixel behind the
    last node, so only cable ahead of it is seen. A second island in view is
    the far side of an occluded gap: the node goes to the gap midpoint and the
    trace resumes past the gap. When the cable stops short of the window's
    front and sides, a window anchored on the tip decides between a free end
    and a gap too long to span from the last node.
    """
    start = np.asarray(fixed_endpoint, dtype=float)
    first = _inspect(mask, TraceWindow(center_px=_pos(start), width=cfg.d_w), cfg)
    if not first.islands:
        raise TraceBrokeError(f"no cable pixels around the fixed endpoint {_pos(start)}", last_position=_pos(start))
    pts = first.points()
    heading = _principal_axis(pts, None)
    if heading is None:
        heading = np.array([1.0, 0.0])
    if float(heading @ (pts.mean(axis=0) - start)) < 0.0:
        heading = -heading

    nodes = [DraftNode(_pos(start), NodeKind.ENDPOINT)]
    pos = start
    undercrossings = 0
    budget = int(math.hypot(*mask.raster.shape[:2]) / cfg.step * 4)

    for _ in range(budget):
        window = TraceWindow.toward(pos + cfg.step * heading, cfg.d_w, heading)
        view = _inspect(mask, window, cfg)
        if not view.islands:
            raise TraceBrokeError(f"trace broke after {len(nodes)} nodes: empty window", last_position=_pos(pos))
        k = view.nearest(pos)
        if len(view.islands) == 1:
            near = view.islands[k]
            if near.leaves:
                heading = _principal_axis(near.points, heading)
                pos = near.points.mean(axis=0)
                nodes.append(DraftNode(_pos(pos), NodeKind.REGULAR))
                continue
            tip = _tip(near.points, heading, cfg.tip_band_px)
            ahead = TraceWindow.toward(tip + (cfg.d_w / 2.0 - cfg.tip_band_px) * heading, cfg.d_w, heading)
            view = _inspect(mask, ahead, cfg)
            if len(view.islands) <= 1:
                nodes.append(DraftNode(_pos(tip), NodeKind.ENDPOINT))
                break
            k = view.nearest(tip)
        gap = _gap(view, k)
        heading = _principal_axis(np.vstack([view.islands[k].points, gap.far]), heading)
        nodes.append(DraftNode(_pos(gap.midpoint), NodeKind.UNDER))
        undercrossings += 1
        pos = gap.beyond
    else:
        raise TraceRunawayError(f"trace exceeded {budget} steps")

    if len(nodes) < 3:
        raise CableTooShortError(f"cable too short: traced only {len(nodes)} nodes")
    nodes.reverse()
    logger.debug("trace_cable: %s traced %d nodes, %d undercrossings", mask.color_name, len(nodes), undercrossings)
    return densify(nodes, 1.5 * cfg.step, cfg.step)


def _overcrossing_candidate(
    cables: list[list[DraftNode]], under_cable: int, point: np.ndarray, limit: float, used: set[tuple[int, int]]
) -> tuple[int, int] | None:
    best: tuple[float, int] | None = None
    for j, nodes in enumerate(cables):
        if j == under_cable:
            continue
        near = [
            m for m, node in enumerate(nodes)
            if node.kind is NodeKind.REGULAR and (j, m) not in used and math.dist(node.pos, point) <= limit
        ]
        if not near:
            continue
        # The occluding cable is the one whose centreline passes closest.
        score = point_polyline_distance(point, np.array([n.pos for n in nodes]))
        if best is None or score < best[0]:
            best = (score, j)
    if best is None:
        return None
    j = best[1]
    m = min(
        (m for m, node in enumerate(cables[j]) if node.kind is NodeKind.REGULAR and (j, m) not in used),
        key=lambda m: math.dist(cables[j][m].pos, point),
    )
    return j, m


def refine_overcrossings(traced: Sequence[DraftCable], d_w: float = 35.0, step: float | None = None) -> CableState:
    """Pair every undercrossing with the nearest regular node on another cable.

    The paired over node moves onto the undercrossing; with ``step`` every
    cable is densified again afterwards.
    """
    limit = SQRT2 * d_w
    cables = [list(c.nodes) for c in traced]
    used: set[tuple[int, int]] = set()
    key = 0
    for i, nodes in enumerate(cables):
        for k, node in enumerate(nodes):
            if node.kind is not NodeKind.UNDER:
                continue
            point = np.asarray(node.pos)
            target = _overcrossing_candidate(cables, i, point, limit, used)
            if target is None:
                raise OrphanUndercrossingError(
                    f"orphan undercrossing on {traced[i].color_name} at ({node.pos[0]:.1f}, {node.pos[1]:.1f})"
                )
            j, m = target
            used.add((j, m))
            nodes[k] = DraftNode(node.pos, NodeKind.UNDER, key)
            cables[j][m] = DraftNode(node.pos, NodeKind.OVER, key)
            key += 1
    if step is not None:
        cables = [densify(nodes, 1.5 * step, step) for nodes in cables]
    return assemble_state([DraftCable(c.cable_id, c.color_name, nodes) for c, nodes in zip(traced, cables)])


def _with_color(exc: PerceptionError, color: str) -> PerceptionError:
    wrapped = type(exc)(f"{color}: {exc}")
    if isinstance(exc, TraceBrokeError):
        wrapped.last_position = exc.last_position
    return wrapped


def build_state(image: np.ndarray, cfg: PerceptionConfig) -> CableState:
    masks = segment_by_color(image, cfg.scene_palette(), cfg.min_component_px)
    traced = []
    for mask in masks:
        endpoint = cfg.fixed_endpoints.get(mask.color_name)
        if endpoint is None:
            raise PerceptionError(f"{mask.color_name}: no fixed endpoint configured")
        try:
            nodes = trace_cable(mask, endpoint, cfg)
        except PerceptionError as exc:
            raise _with_color(exc, mask.color_name) from exc
        traced.append(DraftCable(mask.cable_id, mask.color_name, nodes))
    try:
        state = refine_overcrossings(traced, cfg.d_w, cfg.step)
        check_spacing(state, cfg.d_w, cfg.step)
    except (StateInvariantError, ValidationError) as exc:
        raise PerceptionError(f"perceived state is invalid: {exc}") from exc
    logger.debug("build_state: %d cables, %d crossings", len(state.graphs), len(state.crossing_registry))
    return state


def load_image(path: str | Path) -> np.ndarray:
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise PerceptionError(f"cannot read image {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
