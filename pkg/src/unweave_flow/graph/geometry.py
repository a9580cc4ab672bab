"""Planar polyline geometry: arc length, resampling and inter-cable crossings.

Polylines are ``(n, 2)`` float arrays. Segment ``i`` of a polyline runs from
vertex ``i`` to vertex ``i + 1`` and owns the half-open parameter range
``[0, 1)``; the last segment owns ``[0, 1]``. A crossing that lands exactly on
a shared vertex is therefore reported once.
"""

from __future__ import annotations

import logging
import math
from typing import NamedTuple, Sequence

import numpy as np

from unweave_flow.errors import DegenerateOverlapError

logger = logging.getLogger(__name__)

# Half of the default 35 px tracing window.
DEFAULT_MERGE_RADIUS_PX = 17.5

_PARALLEL_TOL = 1e-12


class GeometricCrossing(NamedTuple):
    """A transversal intersection between polylines ``cable_a < cable_b``.

    ``cable_a`` / ``cable_b`` index the input sequence, ``segment_*`` and
    ``t_*`` locate the point on each polyline.
    """

    cable_a: int
    cable_b: int
    point: tuple[float, float]
    segment_a: int
    t_a: float
    segment_b: int
    t_b: float

    @property
    def pair(self) -> tuple[int, int]:
        return self.cable_a, self.cable_b


def as_points(points: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) polyline, got shape {arr.shape}")
    return arr


def cumulative_length(points: np.ndarray) -> np.ndarray:
    pts = as_points(points)
    if len(pts) == 0:
        return np.zeros(0)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate(([0.0], np.cumsum(seg)))


def polyline_length(points: np.ndarray) -> float:
    pts = as_points(points)
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def points_at_lengths(points: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Interpolate positions at the given arc lengths along ``points``."""
    pts = as_points(points)
    cum = cumulative_length(pts)
    s = np.clip(np.asarray(lengths, dtype=float), 0.0, cum[-1])
    x = np.interp(s, cum, pts[:, 0])
    y = np.interp(s, cum, pts[:, 1])
    return np.column_stack([x, y])


def resample_polyline(points: np.ndarray, step: float) -> np.ndarray:
    """Uniform arc-length resampling; both end vertices are kept exactly."""
    if step <= 0:
        raise ValueError("step must be positive")
    pts = as_points(points)
    total = polyline_length(pts)
    if total == 0.0:
        return pts[[0, -1]].copy()
    n = max(1, math.ceil(total / step - 1e-9))
    out = points_at_lengths(pts, np.linspace(0.0, total, n + 1))
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def straight_run(start: np.ndarray, end: np.ndarray, step: float) -> np.ndarray:
    """Points from ``start`` (excluded) to ``end`` (included) at spacing <= step."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    length = float(np.linalg.norm(end - start))
    n = max(1, math.ceil(length / step - 1e-9))
    frac = np.arange(1, n + 1, dtype=float) / n
    run = start[None, :] + frac[:, None] * (end - start)[None, :]
    run[-1] = end
    return run


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _check_overlap(a: np.ndarray, b: np.ndarray, i: int, j: int) -> None:
    p, r = a[i], a[i + 1] - a[i]
    q, s = b[j], b[j + 1] - b[j]
    rr = float(r @ r)
    if rr == 0.0 or float(s @ s) == 0.0:
        return
    # Collinear only if q sits on the carrier line of r.
    if abs(float(_cross(q - p, r))) > _PARALLEL_TOL * max(rr, 1.0):
        return
    t0 = float((q - p) @ r) / rr
    t1 = float((q + s - p) @ r) / rr
    lo, hi = max(0.0, min(t0, t1)), min(1.0, max(t0, t1))
    if (hi - lo) * math.sqrt(rr) > 1e-9:
        raise DegenerateOverlapError(
            f"collinear overlap between segment {i} and segment {j} "
            f"near ({p[0]:.3f}, {p[1]:.3f})"
        )


def segment_intersections(a: np.ndarray, b: np.ndarray) -> list[tuple[int, float, int, float, tuple[float, float]]]:
    """All transversal intersections between the segments of ``a`` and ``b``.

    Returns ``(segment_a, t_a, segment_b, t_b, point)`` tuples sorted along ``a``.
    """
    a = as_points(a)
    b = as_points(b)
    if len(a) < 2 or len(b) < 2:
        return []
    p = a[:-1]
    r = a[1:] - a[:-1]
    q = b[:-1]
    s = b[1:] - b[:-1]

    # Bounding-box rejection keeps the quadratic part small.
    a_lo = np.minimum(a[:-1], a[1:])
    a_hi = np.maximum(a[:-1], a[1:])
    b_lo = np.minimum(b[:-1], b[1:])
    b_hi = np.maximum(b[:-1], b[1:])
    near = (
        (a_lo[:, None, 0] <= b_hi[None, :, 0])
        & (b_lo[None, :, 0] <= a_hi[:, None, 0])
        & (a_lo[:, None, 1] <= b_hi[None, :, 1])
        & (b_lo[None, :, 1] <= a_hi[:, None, 1])
    )
    ii, jj = np.nonzero(near)
    if len(ii) == 0:
        return []

    qp = q[jj] - p[ii]
    denom = _cross(r[ii], s[jj])
    scale = np.linalg.norm(r[ii], axis=1) * np.linalg.norm(s[jj], axis=1)
    parallel = np.abs(denom) <= _PARALLEL_TOL * np.maximum(scale, 1e-300)
    for i, j in zip(ii[parallel], jj[parallel]):
        _check_overlap(a, b, int(i), int(j))

    ok = ~parallel
    ii, jj, qp, denom = ii[ok], jj[ok], qp[ok], denom[ok]
    t = _cross(qp, s[jj]) / denom
    u = _cross(qp, r[ii]) / denom
    t_hi = np.where(ii == len(r) - 1, t <= 1.0, t < 1.0)
    u_hi = np.where(jj == len(s) - 1, u <= 1.0, u < 1.0)
    hit = (t >= 0.0) & t_hi & (u >= 0.0) & u_hi

    out = []
    for i, ti, j, uj in zip(ii[hit], t[hit], jj[hit], u[hit]):
        pt = p[i] + ti * r[i]
        out.append((int(i), float(ti), int(j), float(uj), (float(pt[0]), float(pt[1]))))
    out.sort(key=lambda item: (item[0], item[1]))
    return out


def merge_close(points: list[tuple[float, float]], radius: float) -> list[int]:
    """Indices of the points kept by greedy in-order merging within ``radius``."""
    kept: list[int] = []
    for idx, pt in enumerate(points):
        if any(math.dist(pt, points[k]) <= radius for k in kept):
            continue
        kept.append(idx)
    return kept


def geometric_crossings(
    polylines: Sequence[np.ndarray],
    merge_radius: float = DEFAULT_MERGE_RADIUS_PX,
) -> list[GeometricCrossing]:
    """Crossings between polylines of distinct cables.

    Self-intersections are never reported. Intersections of the same cable pair
    closer than ``merge_radius`` collapse into the first one along ``cable_a``.
    Raises DegenerateOverlapError on collinear shared segments.
    """
    lines = [as_points(pl) for pl in polylines]
    for idx, pl in enumerate(lines):
        if len(pl) < 2:
            raise ValueError(f"polyline {idx} needs at least two vertices")

    found: list[GeometricCrossing] = []
    for a_idx in range(len(lines)):
        for b_idx in range(a_idx + 1, len(lines)):
            hits = segment_intersections(lines[a_idx], lines[b_idx])
            if not hits:
                continue
            keep = merge_close([h[4] for h in hits], merge_radius)
            for k in keep:
                seg_a, t_a, seg_b, t_b, pt = hits[k]
                found.append(GeometricCrossing(a_idx, b_idx, pt, seg_a, t_a, seg_b, t_b))
    logger.debug("geometric_crossings: %d crossings over %d polylines", len(found), len(lines))
    return found


def angle_between(u: np.ndarray, v: np.ndarray) -> float:
    """Unsigned angle in ``[0, pi]`` between two vectors (0 if either is null)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    cos = float(np.clip((u @ v) / (nu * nv), -1.0, 1.0))
    return math.acos(cos)


def rotate(vec: np.ndarray, theta: float) -> np.ndarray:
    """Counter-clockwise rotation in a y-up frame."""
    c, s = math.cos(theta), math.sin(theta)
    x, y = float(vec[0]), float(vec[1])
    return np.array([c * x - s * y, s * x + c * y])


def point_polyline_distance(point: Sequence[float], polyline: np.ndarray) -> float:
    """Euclidean distance from ``point`` to the nearest point on ``polyline``."""
    pts = as_points(polyline)
    q = np.asarray(point, dtype=float)
    if len(pts) == 1:
        return float(np.linalg.norm(q - pts[0]))
    a = pts[:-1]
    d = pts[1:] - a
    dd = np.einsum("ij,ij->i", d, d)
    t = np.where(dd > 0, np.einsum("ij,ij->i", q - a, d) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * d
    return float(np.min(np.linalg.norm(closest - q, axis=1)))


def pythagorean_height(hypotenuse: float, leg: float) -> tuple[float, bool]:
    """``sqrt(hypotenuse**2 - leg**2)``; a negative radicand gives ``(0.0, True)``."""
    radicand = hypotenuse * hypotenuse - leg * leg
    if radicand < 0.0:
        return 0.0, True
    return math.sqrt(radicand), False
